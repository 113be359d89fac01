"""Fine-to-coarse candidate split points.

Split point ``s`` means layers 1..s run on the device and s+1..N in the
cloud; ``0`` is cloud-only and ``N + 1`` device-only. Interior candidates
start at 1 and advance by ``ceil(i / k)``, so they are dense near the input
and thin out toward the head.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SplitPolicy:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


def candidate_split_points(num_layers: int, k: int) -> tuple[int, ...]:
    if num_layers < 1:
        raise ValueError("num_layers must be >= 1")
    if k < 1:
        raise ValueError("k must be >= 1")
    points = {0, num_layers + 1}
    s, i = 1, 1
    while s <= num_layers:
        points.add(s)
        i += 1
        s += -(-i // k)
    return tuple(sorted(points))
