"""Closed-loop trace replay of the scheduler against ground-truth latencies.

Frames run back to back: frame i + 1 starts when frame i's result is back.
Transfers integrate the payload over the trace's piecewise-constant uplink,
and the bandwidth estimator only learns from transfers that actually happen.
"""
from __future__ import annotations

import bisect
import csv
import enum
import io
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import TraceError
from .model import ModelSpec
from .profiling import BandwidthEstimator, LatencyModel, predict_latency
from .pruning import (PruningSchedule, alpha_for_mean_reduction, build_schedule, constant_schedule,
                      max_declining_rate, PruningPolicy)
from .scheduler import Decision, SchedulerConfig, fixed_decision, schedule, split_payload_bytes


class Policy(str, enum.Enum):
    JANUS = "janus"
    CLOUD_ONLY = "cloud_only"
    DEVICE_ONLY = "device_only"
    MIXED = "mixed"


@dataclass(frozen=True)
class NetworkTrace:
    """Uplink samples; sample i holds from its timestamp until the next one."""

    timestamps: tuple[float, ...]
    uplink_bps: tuple[float, ...]

    def __post_init__(self):
        if not self.timestamps:
            raise TraceError("trace needs at least one sample")
        if len(self.timestamps) != len(self.uplink_bps):
            raise TraceError("timestamps and uplink_bps differ in length")
        for a, b in zip(self.timestamps, self.timestamps[1:]):
            if not b > a:
                raise TraceError(f"timestamps must be strictly increasing ({a} then {b})")
        for v in self.uplink_bps:
            if not (v > 0 and math.isfinite(v)):
                raise TraceError(f"uplink must be positive, got {v}")

    @classmethod
    def from_samples(cls, samples: Iterable[tuple[float, float]]) -> "NetworkTrace":
        samples = list(samples)
        ts, bw = zip(*samples) if samples else ((), ())
        return cls(tuple(float(t) for t in ts), tuple(float(b) for b in bw))

    @classmethod
    def constant(cls, bps: float, duration_s: float = 1.0) -> "NetworkTrace":
        return cls((0.0, float(duration_s)), (float(bps), float(bps)))

    @property
    def start(self) -> float:
        return self.timestamps[0]

    @property
    def horizon(self) -> float:
        """End of the last sample, assumed as long as the interval before it."""
        if len(self.timestamps) == 1:
            return self.timestamps[0] + 1.0
        return self.timestamps[-1] + (self.timestamps[-1] - self.timestamps[-2])

    @property
    def mean_bps(self) -> float:
        return sum(self.uplink_bps) / len(self.uplink_bps)

    def bandwidth_at(self, t: float) -> float:
        i = max(0, bisect.bisect_right(self.timestamps, t) - 1)
        return self.uplink_bps[i]

    def transfer(self, start_s: float, bits: float) -> tuple[float, bool]:
        """Seconds to push ``bits`` starting at ``start_s``, and whether the
        transfer ran past the trace horizon (final rate held)."""
        if bits <= 0:
            return 0.0, False
        ts = self.timestamps
        i = max(0, bisect.bisect_right(ts, start_s) - 1)
        t = start_s
        remaining = bits
        while i + 1 < len(ts):
            seg = ts[i + 1] - t
            cap = seg * self.uplink_bps[i]
            if remaining <= cap:
                return t + remaining / self.uplink_bps[i] - start_s, False
            remaining -= cap
            t = ts[i + 1]
            i += 1
        end = t + remaining / self.uplink_bps[i]
        return end - start_s, end > self.horizon

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["timestamp_s", "uplink_mbps"])
        for t, b in zip(self.timestamps, self.uplink_bps):
            w.writerow([repr(t), repr(b / 1e6)])
        return buf.getvalue()


def load_trace(path: str | Path) -> NetworkTrace:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"timestamp_s", "uplink_mbps"} <= set(reader.fieldnames):
            raise TraceError(f"{path}: header must be timestamp_s,uplink_mbps")
        try:
            rows = [(float(r["timestamp_s"]), float(r["uplink_mbps"]) * 1e6) for r in reader]
        except ValueError as exc:
            raise TraceError(f"{path}: {exc}") from exc
    if not rows:
        raise TraceError(f"{path}: no samples")
    return NetworkTrace.from_samples(rows)


_UNITS = {"bps": 1.0, "kbps": 1e3, "mbps": 1e6, "gbps": 1e9}
_TIME_UNITS = {"s": 1.0, "ms": 1e-3}


def convert_trace(src: str | Path, mapping: dict) -> NetworkTrace:
    """Map an arbitrary throughput log onto the canonical trace.

    ``mapping`` keys: ``timestamp_column``, ``throughput_column`` (required),
    ``throughput_unit`` (bps/kbps/mbps/gbps, default mbps), ``timestamp_unit``
    (s/ms, default s), ``delimiter`` (default ","), ``min_mbps`` floor for
    outage samples (default 0.001).
    """
    known = {"timestamp_column", "throughput_column", "throughput_unit",
             "timestamp_unit", "delimiter", "min_mbps"}
    unknown = set(mapping) - known
    if unknown:
        raise TraceError(f"unknown mapping keys: {sorted(unknown)}")
    try:
        tcol, bcol = mapping["timestamp_column"], mapping["throughput_column"]
    except KeyError as exc:
        raise TraceError(f"mapping missing {exc}") from None
    bscale = _UNITS[mapping.get("throughput_unit", "mbps").lower()]
    tscale = _TIME_UNITS[mapping.get("timestamp_unit", "s").lower()]
    floor = float(mapping.get("min_mbps", 0.001)) * 1e6
    rows = {}
    with open(src, newline="") as fh:
        for r in csv.DictReader(fh, delimiter=mapping.get("delimiter", ",")):
            try:
                t = float(r[tcol]) * tscale
                b = float(r[bcol]) * bscale
            except (KeyError, TypeError, ValueError):
                continue  # blank or malformed rows are common in field logs
            if math.isfinite(t) and math.isfinite(b):
                rows[t] = max(b, floor)
    if not rows:
        raise TraceError(f"{src}: no usable rows for columns {tcol!r}, {bcol!r}")
    ordered = sorted(rows.items())
    t0 = ordered[0][0]
    return NetworkTrace.from_samples([(t - t0, b) for t, b in ordered])


@dataclass(frozen=True)
class GroundTruth:
    device_true: LatencyModel
    cloud_true: LatencyModel
    jitter_frac: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.jitter_frac < 0:
            raise ValueError("jitter_frac must be >= 0")


@dataclass(frozen=True)
class AccuracyTable:
    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        knots = tuple(sorted((float(a), float(acc)) for a, acc in self.knots))
        if not knots:
            raise ValueError("accuracy table needs at least one knot")
        for (a0, y0), (a1, y1) in zip(knots, knots[1:]):
            if a1 == a0:
                raise ValueError(f"duplicate alpha knot {a0}")
            if y1 > y0:
                raise ValueError("accuracy must be non-increasing in alpha")
        if any(not 0 <= y <= 1 for _, y in knots):
            raise ValueError("accuracy must lie in [0, 1]")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def synthetic(cls, spec: ModelSpec, grid_step: float = 0.01) -> "AccuracyTable":
        """Placeholder curve: 1.0 at alpha 0 falling linearly to 0.95 at alpha_max."""
        amax = max_declining_rate(spec, grid_step)
        if amax == 0:
            return cls(((0.0, 1.0),))
        return cls(((0.0, 1.0), (amax, 0.95)))

    @classmethod
    def load(cls, path: str | Path) -> "AccuracyTable":
        doc = json.loads(Path(path).read_text())
        return cls(tuple((k["alpha"], k["accuracy"]) for k in doc["knots"]))

    def lookup(self, alpha: float) -> float:
        xs = [a for a, _ in self.knots]
        if alpha <= xs[0]:
            return self.knots[0][1]
        if alpha >= xs[-1]:
            return self.knots[-1][1]
        i = bisect.bisect_right(xs, alpha)
        (a0, y0), (a1, y1) = self.knots[i - 1], self.knots[i]
        return y0 + (y1 - y0) * (alpha - a0) / (a1 - a0)


@dataclass(frozen=True)
class FrameRecord:
    frame: int
    start_s: float
    decision: Decision
    bandwidth_estimate_bps: float
    device_ms: float
    comm_ms: float
    cloud_ms: float
    measured_ms: float
    violated: bool
    deviation: float
    accuracy: float
    truncated: bool = False


@dataclass
class SimMetrics:
    policy: str
    throughput_fps: float
    violation_ratio: float
    mean_deviation_rate: float
    mean_accuracy: float
    frames: int
    truncated: bool = False
    per_frame: list[FrameRecord] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "throughput_fps": self.throughput_fps,
            "violation_ratio": self.violation_ratio,
            "mean_deviation_rate": self.mean_deviation_rate,
            "mean_accuracy": self.mean_accuracy,
            "frames": self.frames,
            "truncated": self.truncated,
        }

    def per_frame_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "alpha", "split", "predicted_ms", "measured_ms", "violated", "accuracy"])
        for r in self.per_frame:
            w.writerow([r.frame, repr(r.decision.alpha), r.decision.split_point,
                        repr(r.decision.predicted_total_ms), repr(r.measured_ms),
                        int(r.violated), repr(r.accuracy)])
        return buf.getvalue()


@dataclass(frozen=True)
class SimOptions:
    window: int = 5
    cold_start_bps: float | None = None  # default: trace mean
    frames: int | None = None  # default: run until the trace horizon
    baseline_alpha: float | None = None  # overrides the per-layer mapping
    baseline_tokens_per_layer: int = 23
    baseline_constant: bool = False  # prune exactly N tokens/layer instead of a grid alpha


def deviation_rate(measured_ms: float, sla_ms: float) -> float:
    return max(0.0, (measured_ms - sla_ms) / sla_ms)


@dataclass
class FrameTiming:
    device_ms: float
    comm_ms: float
    cloud_ms: float
    truncated: bool
    observed_bps: float | None

    @property
    def total_ms(self) -> float:
        return self.device_ms + self.cloud_ms + self.comm_ms


def _jitter(rng: random.Random | None, frac: float) -> float:
    if rng is None or frac == 0:
        return 1.0
    return 1.0 + rng.uniform(-frac, frac)


def measure_frame(spec: ModelSpec, sched: PruningSchedule, s: int, truth: GroundTruth,
                  trace: NetworkTrace, start_s: float, cfg: SchedulerConfig,
                  rng: random.Random | None = None) -> FrameTiming:
    """Ground-truth execution of one frame split at ``s`` starting at ``start_s``."""
    n = spec.num_layers
    dev = [predict_latency(truth.device_true, sched.tokens_at(l)) * _jitter(rng, truth.jitter_frac)
           for l in range(1, min(s, n) + 1)]
    device_ms = math.fsum(dev) + (spec.device_overhead_ms if s >= 1 else 0.0)
    payload = split_payload_bytes(spec, sched, s, cfg)
    comm_ms, truncated, observed = 0.0, False, None
    if payload > 0:
        bits = payload * 8
        secs, truncated = trace.transfer(start_s + device_ms / 1000, bits)
        comm_ms = secs * 1000 + cfg.rtt_ms
        observed = bits / secs
    cld = [predict_latency(truth.cloud_true, sched.tokens_at(l)) * _jitter(rng, truth.jitter_frac)
           for l in range(s + 1, n + 1)]
    cloud_ms = math.fsum(cld) + (spec.cloud_overhead_ms if s <= n else 0.0)
    return FrameTiming(device_ms, comm_ms, cloud_ms, truncated, observed)


def _baseline(spec: ModelSpec, cfg: SchedulerConfig, opts: SimOptions) -> tuple[float, PruningSchedule]:
    if opts.baseline_alpha is not None:
        a = opts.baseline_alpha
        return a, build_schedule(spec, PruningPolicy(a, cfg.grid_step))
    a = alpha_for_mean_reduction(spec, opts.baseline_tokens_per_layer, cfg.grid_step)
    if opts.baseline_constant:
        return a, constant_schedule(spec, opts.baseline_tokens_per_layer)
    return a, build_schedule(spec, PruningPolicy(a, cfg.grid_step), validate=False)


def run_simulation(trace: NetworkTrace, spec: ModelSpec, cfg: SchedulerConfig, truth: GroundTruth,
                   table: AccuracyTable | None = None, policy: Policy | str = Policy.JANUS,
                   predictors: tuple[LatencyModel, LatencyModel] | None = None,
                   options: SimOptions | None = None) -> SimMetrics:
    policy = Policy(policy)
    opts = options or SimOptions()
    table = table or AccuracyTable.synthetic(spec, cfg.grid_step)
    dev_pred, cloud_pred = predictors or (truth.device_true, truth.cloud_true)
    est = BandwidthEstimator(opts.cold_start_bps or trace.mean_bps, opts.window)
    rng = random.Random(truth.seed)
    n = spec.num_layers
    base_alpha, base_sched = _baseline(spec, cfg, opts)

    records: list[FrameRecord] = []
    t = trace.start
    frame = 0
    while (opts.frames is None and t < trace.horizon) or (opts.frames is not None and frame < opts.frames):
        bw = est.estimate()
        if policy is Policy.JANUS:
            dec = schedule(spec, dev_pred, cloud_pred, bw, cfg)
            sched = build_schedule(spec, PruningPolicy(dec.alpha, cfg.grid_step), validate=False)
        else:
            sched = base_sched
            cloud = fixed_decision(spec, sched, base_alpha, 0, dev_pred, cloud_pred, bw, cfg)
            device = fixed_decision(spec, sched, base_alpha, n + 1, dev_pred, cloud_pred, bw, cfg)
            if policy is Policy.CLOUD_ONLY:
                dec = cloud
            elif policy is Policy.DEVICE_ONLY:
                dec = device
            else:
                dec = device if device.predicted_total_ms < cloud.predicted_total_ms else cloud
        timing = measure_frame(spec, sched, dec.split_point, truth, trace, t, cfg, rng)
        if timing.observed_bps is not None:
            est.observe(timing.observed_bps)
        measured = timing.total_ms
        records.append(FrameRecord(
            frame=frame, start_s=t, decision=dec, bandwidth_estimate_bps=bw,
            device_ms=timing.device_ms, comm_ms=timing.comm_ms, cloud_ms=timing.cloud_ms,
            measured_ms=measured, violated=measured > cfg.sla_ms,
            deviation=deviation_rate(measured, cfg.sla_ms),
            accuracy=table.lookup(dec.alpha), truncated=timing.truncated))
        t += measured / 1000
        frame += 1
    return summarize(policy.value, records, trace.start, t)


def summarize(policy: str, records: Sequence[FrameRecord], start_s: float, end_s: float) -> SimMetrics:
    frames = len(records)
    if frames == 0:
        return SimMetrics(policy, 0.0, 0.0, 0.0, 0.0, 0, False, [])
    elapsed = end_s - start_s
    return SimMetrics(
        policy=policy,
        throughput_fps=frames / elapsed if elapsed > 0 else math.inf,
        violation_ratio=sum(r.violated for r in records) / frames,
        mean_deviation_rate=math.fsum(r.deviation for r in records) / frames,
        mean_accuracy=math.fsum(r.accuracy for r in records) / frames,
        frames=frames,
        truncated=any(r.truncated for r in records),
        per_frame=list(records),
    )


def compare_policies(trace: NetworkTrace, spec: ModelSpec, cfg: SchedulerConfig, truth: GroundTruth,
                     table: AccuracyTable | None = None,
                     predictors: tuple[LatencyModel, LatencyModel] | None = None,
                     options: SimOptions | None = None) -> dict[str, SimMetrics]:
    return {p.value: run_simulation(trace, spec, cfg, truth, table, p, predictors, options)
            for p in Policy}


def comparison_csv(results: dict[str, SimMetrics]) -> str:
    buf = io.StringIO()
    cols = ["policy", "throughput_fps", "violation_ratio", "mean_deviation_rate",
            "mean_accuracy", "frames", "truncated"]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for m in results.values():
        w.writerow(m.summary())
    return buf.getvalue()
