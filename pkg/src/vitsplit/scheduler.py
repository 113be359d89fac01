"""Joint choice of declining rate and split point under a latency SLA.

Alphas are visited from 0 upward, i.e. from most to least accurate. For each
alpha the split point minimising predicted end-to-end latency is found; the
first alpha whose best split meets the SLA wins. If none does, the largest
alpha and its best split are returned, flagged infeasible.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

from .errors import EstimationError
from .model import ModelSpec, initial_token_count
from .profiling import LatencyModel, predict_latency
from .pruning import (PruningSchedule, alpha_steps, exponential_deltas, grid_alpha,
                      max_declining_rate, schedule_from_deltas)
from .splitting import candidate_split_points


@dataclass(frozen=True)
class SchedulerConfig:
    sla_ms: float = 300.0
    grid_step: float = 0.01
    split_k: int = 5
    compression_ratio: float = 1.0
    raw_input_payload_bytes: int | None = None
    rtt_ms: float = 0.0

    def __post_init__(self):
        if not self.sla_ms > 0:
            raise ValueError("sla_ms must be positive")
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")
        if self.split_k < 1:
            raise ValueError("split_k must be >= 1")
        if not 0 < self.compression_ratio <= 1:
            raise ValueError("compression_ratio must be in (0, 1]")
        if self.raw_input_payload_bytes is not None and self.raw_input_payload_bytes < 0:
            raise ValueError("raw_input_payload_bytes must be >= 0")
        if self.rtt_ms < 0:
            raise ValueError("rtt_ms must be >= 0")


@dataclass(frozen=True)
class Decision:
    alpha: float
    split_point: int
    predicted_total_ms: float
    device_ms: float
    cloud_ms: float
    comm_ms: float
    feasible: bool
    evaluations: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


def split_payload_bytes(spec: ModelSpec, schedule: PruningSchedule, s: int, cfg: SchedulerConfig) -> float:
    """Bytes shipped at split ``s`` (result bytes for device-only)."""
    n = spec.num_layers
    if s == n + 1:
        return spec.result_payload_bytes
    if s == 0 and cfg.raw_input_payload_bytes is not None:
        return cfg.raw_input_payload_bytes
    return schedule.tokens_at(s) * spec.token_bytes * cfg.compression_ratio


def transfer_ms(payload_bytes: float, bandwidth_bps: float, rtt_ms: float) -> float:
    if payload_bytes == 0:
        return 0.0
    return payload_bytes * 8 / bandwidth_bps * 1000 + rtt_ms


def predicted_split_latency(spec: ModelSpec, schedule: PruningSchedule, device: LatencyModel,
                            cloud: LatencyModel, bandwidth_bps: float, s: int,
                            cfg: SchedulerConfig) -> tuple[float, float, float]:
    """(device_ms, cloud_ms, comm_ms) for running the schedule split at ``s``."""
    if not bandwidth_bps > 0:
        raise EstimationError(f"bandwidth must be positive, got {bandwidth_bps}")
    n = spec.num_layers
    if not 0 <= s <= n + 1:
        raise ValueError(f"split point {s} outside [0, {n + 1}]")
    dev = [predict_latency(device, schedule.tokens_at(l)) for l in range(1, min(s, n) + 1)]
    cld = [predict_latency(cloud, schedule.tokens_at(l)) for l in range(s + 1, n + 1)]
    return _split_costs(spec, schedule, dev, cld, bandwidth_bps, s, cfg)


def _split_costs(spec, schedule, dev: Sequence[float], cld: Sequence[float], bandwidth_bps, s, cfg):
    n = spec.num_layers
    device_ms = math.fsum(dev) + (spec.device_overhead_ms if s >= 1 else 0.0)
    cloud_ms = math.fsum(cld) + (spec.cloud_overhead_ms if s <= n else 0.0)
    comm_ms = transfer_ms(split_payload_bytes(spec, schedule, s, cfg), bandwidth_bps, cfg.rtt_ms)
    return device_ms, cloud_ms, comm_ms


def best_split(spec: ModelSpec, schedule: PruningSchedule, device: LatencyModel,
               cloud: LatencyModel, bandwidth_bps: float, cfg: SchedulerConfig,
               candidates: Sequence[int] | None = None) -> tuple[int, tuple[float, float, float], int]:
    """Argmin split over the candidate set; ties go to the smallest s."""
    if not bandwidth_bps > 0:
        raise EstimationError(f"bandwidth must be positive, got {bandwidth_bps}")
    n = spec.num_layers
    if candidates is None:
        candidates = candidate_split_points(n, cfg.split_k)
    dev = [predict_latency(device, schedule.tokens_at(l)) for l in range(1, n + 1)]
    cld = [predict_latency(cloud, schedule.tokens_at(l)) for l in range(1, n + 1)]
    best_s, best_parts, best_total = -1, None, math.inf
    for s in candidates:
        parts = _split_costs(spec, schedule, dev[:s], cld[s:], bandwidth_bps, s, cfg)
        total = parts[0] + parts[1] + parts[2]
        if total < best_total:
            best_s, best_parts, best_total = s, parts, total
    return best_s, best_parts, len(candidates)


def _decision(alpha, s, parts, cfg, evaluations) -> Decision:
    total = parts[0] + parts[1] + parts[2]
    return Decision(alpha, s, total, parts[0], parts[1], parts[2],
                    feasible=total <= cfg.sla_ms, evaluations=evaluations)


def schedule(spec: ModelSpec, device: LatencyModel, cloud: LatencyModel,
             bandwidth_bps: float, cfg: SchedulerConfig) -> Decision:
    if not bandwidth_bps > 0:
        raise EstimationError(f"bandwidth must be positive, got {bandwidth_bps}")
    n = spec.num_layers
    x0 = initial_token_count(spec)
    amax = max_declining_rate((n, x0), cfg.grid_step)
    candidates = candidate_split_points(n, cfg.split_k)
    evaluations = 0
    last = None
    for m in range(alpha_steps(amax, cfg.grid_step) + 1):
        alpha = grid_alpha(m, cfg.grid_step)
        sched = schedule_from_deltas(x0, exponential_deltas(alpha, n))
        s, parts, count = best_split(spec, sched, device, cloud, bandwidth_bps, cfg, candidates)
        evaluations += count
        last = (alpha, s, parts)
        if parts[0] + parts[1] + parts[2] <= cfg.sla_ms:
            return _decision(alpha, s, parts, cfg, evaluations)
    alpha, s, parts = last
    return _decision(alpha, s, parts, cfg, evaluations)


def fixed_decision(spec: ModelSpec, schedule_: PruningSchedule, alpha: float, s: int,
                   device: LatencyModel, cloud: LatencyModel, bandwidth_bps: float,
                   cfg: SchedulerConfig) -> Decision:
    """Decision for a predetermined (schedule, split) pair, e.g. a baseline."""
    parts = predicted_split_latency(spec, schedule_, device, cloud, bandwidth_bps, s, cfg)
    return _decision(alpha, s, parts, cfg, 1)
