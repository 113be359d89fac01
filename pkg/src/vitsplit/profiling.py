"""Linear per-layer latency models and uplink bandwidth estimation."""
from __future__ import annotations

import csv
import json
import logging
import math
import statistics
import threading
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Protocol

from .errors import EstimationError, FitError

log = logging.getLogger(__name__)

# Fits at or below this Pearson r are flagged as unreliable.
MIN_CORRELATION = 0.85


@dataclass(frozen=True)
class LatencySample:
    tokens: int
    latency_ms: float

    def __post_init__(self):
        if self.tokens < 0:
            raise ValueError("tokens must be >= 0")
        if not math.isfinite(self.latency_ms) or self.latency_ms < 0:
            raise ValueError(f"latency_ms must be finite and >= 0, got {self.latency_ms}")


class _ClampCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def bump(self):
        with self._lock:
            self.count += 1


clamp_diagnostics = _ClampCounter()


@dataclass(frozen=True)
class LatencyModel:
    slope_ms_per_token: float
    intercept_ms: float
    r: float = 1.0
    sample_count: int = 0

    @property
    def weak_fit(self) -> bool:
        return self.r <= MIN_CORRELATION

    def predict(self, tokens: int) -> float:
        return predict_latency(self, tokens)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "LatencyModel":
        unknown = set(doc) - {"slope_ms_per_token", "intercept_ms", "r", "sample_count"}
        if unknown:
            raise FitError(f"unknown latency model fields: {sorted(unknown)}")
        try:
            return cls(float(doc["slope_ms_per_token"]), float(doc["intercept_ms"]),
                       float(doc.get("r", 1.0)), int(doc.get("sample_count", 0)))
        except KeyError as exc:
            raise FitError(f"latency model missing field {exc}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "LatencyModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise FitError(f"{path}: invalid JSON: {exc}") from exc


def fit_latency_model(samples: Iterable[LatencySample | tuple[int, float]]) -> LatencyModel:
    """Ordinary least squares of latency on token count."""
    pts = [s if isinstance(s, LatencySample) else LatencySample(*s) for s in samples]
    # sort so the float result does not depend on input order
    pts.sort(key=lambda p: (p.tokens, p.latency_ms))
    xs = [float(p.tokens) for p in pts]
    ys = [p.latency_ms for p in pts]
    if len(set(xs)) < 2:
        raise FitError("need samples at >= 2 distinct token counts")
    slope, intercept = statistics.linear_regression(xs, ys)
    try:
        r = statistics.correlation(xs, ys)
    except statistics.StatisticsError:
        r = 0.0  # (numerically) constant latency: no linear dependence on tokens
    model = LatencyModel(slope, intercept, r, len(pts))
    if model.weak_fit:
        log.warning("weak latency fit: r=%.3f over %d samples", r, len(pts))
    return model


def predict_latency(model: LatencyModel, tokens: int) -> float:
    raw = model.slope_ms_per_token * tokens + model.intercept_ms
    if raw < 0:
        clamp_diagnostics.bump()
        return 0.0
    return raw


def read_samples_csv(path: str | Path) -> list[LatencySample]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"tokens", "latency_ms"} <= set(reader.fieldnames):
            raise FitError(f"{path}: header must contain tokens,latency_ms")
        try:
            return [LatencySample(int(row["tokens"]), float(row["latency_ms"])) for row in reader]
        except ValueError as exc:
            raise FitError(f"{path}: {exc}") from exc


def write_samples_csv(path: str | Path, samples: Iterable[LatencySample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tokens", "latency_ms"])
        for s in samples:
            w.writerow([s.tokens, repr(s.latency_ms)])


class BandwidthPredictor(Protocol):
    def observe(self, throughput_bps: float) -> None: ...

    def estimate(self) -> float: ...


class BandwidthEstimator:
    """Harmonic mean of the last ``window`` throughput observations.

    Before any observation it returns ``cold_start_bps`` (an offline mean).
    """

    def __init__(self, cold_start_bps: float, window: int = 5):
        if window < 1:
            raise ValueError("window must be >= 1")
        if not cold_start_bps > 0:
            raise ValueError("cold_start_bps must be positive")
        self.window = window
        self.cold_start_bps = float(cold_start_bps)
        self._obs: deque[float] = deque(maxlen=window)

    @property
    def observations(self) -> tuple[float, ...]:
        return tuple(self._obs)

    def observe(self, throughput_bps: float) -> None:
        if not (throughput_bps > 0 and math.isfinite(throughput_bps)):
            raise EstimationError(f"throughput must be positive, got {throughput_bps}")
        self._obs.append(float(throughput_bps))

    def estimate(self) -> float:
        obs = tuple(self._obs)
        if not obs:
            return self.cold_start_bps
        return statistics.harmonic_mean(obs)
