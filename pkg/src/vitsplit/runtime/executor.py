"""Stand-ins for real ViT layers: each layer sleeps for its modelled latency."""
from __future__ import annotations

import random
import struct
import time
from typing import Callable, Sequence

from ..profiling import LatencyModel, LatencySample, predict_latency


class SyntheticExecutor:
    """Sleeps ``a * tokens + b`` ms per layer, scaled by seeded jitter in
    ``[1 - jitter_frac, 1 + jitter_frac]``. Returns the measured wall time."""

    def __init__(self, model: LatencyModel, jitter_frac: float = 0.0, seed: int = 0,
                 sleep: Callable[[float], None] = time.sleep,
                 clock: Callable[[], float] = time.perf_counter):
        if jitter_frac < 0:
            raise ValueError("jitter_frac must be >= 0")
        self.model = model
        self.jitter_frac = jitter_frac
        self._rng = random.Random(seed)
        self._sleep = sleep
        self._clock = clock

    def target_ms(self, tokens: int) -> float:
        base = predict_latency(self.model, tokens)
        if self.jitter_frac:
            base *= 1.0 + self._rng.uniform(-self.jitter_frac, self.jitter_frac)
        return base

    def run_layer(self, tokens: int) -> float:
        target = self.target_ms(tokens)
        t0 = self._clock()
        if target > 0:
            self._sleep(target / 1000)
        return (self._clock() - t0) * 1000

    def run_layers(self, tokens: Sequence[int]) -> list[LatencySample]:
        return [LatencySample(x, self.run_layer(x)) for x in tokens]

    def pause(self, ms: float) -> None:
        if ms > 0:
            self._sleep(ms / 1000)


# A handful of float32 values; drawing from a small alphabet makes the
# payload compressible the way quantised activations are.
_PATTERNS = [struct.pack(">f", v) for v in
             (0.0, 0.5, -0.5, 1.0, -1.0, 0.25, -0.25, 2.0, 0.125, -2.0, 0.75, -0.75, 1.5, -1.5, 3.0, -3.0)]


def pseudo_tensor(num_bytes: int, seed: int = 0) -> bytes:
    """Deterministic activation-like bytes of exactly ``num_bytes``."""
    if num_bytes <= 0:
        return b""
    rng = random.Random(seed)
    words = -(-num_bytes // 4)
    return b"".join(rng.choices(_PATTERNS, k=words))[:num_bytes]
