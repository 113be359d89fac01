"""Per-layer token-reduction schedules.

The exponential ("mixed") form prunes ``floor(2 ** (alpha * (N - l)))``
tokens at layer ``l``, so most of the reduction happens in the front of the
model where it also shrinks the data shipped to the cloud. A linear form and
a constant-count form (ToMe style) exist for comparison and baselines.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

from .errors import ScheduleError, SpecError
from .model import ModelSpec, initial_token_count

# Exponents within this distance of an integer are snapped to it, so grid
# values like 0.3 * 10 evaluate 2**3 exactly instead of 2**2.9999999999999996.
_SNAP = 1e-9


class PruningForm(str, enum.Enum):
    EXPONENTIAL = "exponential"
    LINEAR = "linear"
    NONE = "none"


@dataclass(frozen=True)
class PruningPolicy:
    alpha: float = 0.0
    grid_step: float = 0.01
    form: PruningForm = PruningForm.EXPONENTIAL

    def __post_init__(self):
        object.__setattr__(self, "form", PruningForm(self.form))
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        m = self.alpha / self.grid_step
        if abs(m - round(m)) > 1e-9 * max(1.0, abs(m)):
            raise ValueError(f"alpha {self.alpha} is not a multiple of grid_step {self.grid_step}")


@dataclass(frozen=True)
class PruningSchedule:
    initial_tokens: int
    deltas: tuple[int, ...]
    tokens_after: tuple[int, ...]

    @property
    def num_layers(self) -> int:
        return len(self.deltas)

    @property
    def total_pruned(self) -> int:
        return sum(self.deltas)

    def tokens_at(self, layer: int) -> int:
        """Token count x_l; layer 0 is the embedding output."""
        if layer == 0:
            return self.initial_tokens
        return self.tokens_after[layer - 1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["layer", "delta", "tokens_after"])
        for layer, (d, x) in enumerate(zip(self.deltas, self.tokens_after), start=1):
            w.writerow([layer, d, x])
        return buf.getvalue()


def grid_alpha(m: int, grid_step: float) -> float:
    """The m-th grid value, rounded so decimal steps print cleanly."""
    return round(m * grid_step, 12)


def _pow2_floor(exponent: float) -> int:
    r = round(exponent)
    if abs(exponent - r) < _SNAP:
        exponent = r
    return math.floor(2.0 ** exponent)


def layer_reduction(alpha: float, num_layers: int, layer: int) -> int:
    """Tokens removed at ``layer`` (1-based) under the exponential form."""
    if not 1 <= layer <= num_layers:
        raise ValueError(f"layer {layer} outside [1, {num_layers}]")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if alpha == 0:
        return 0
    return _pow2_floor(alpha * (num_layers - layer))


def exponential_deltas(alpha: float, num_layers: int) -> list[int]:
    if alpha == 0:
        return [0] * num_layers
    return [_pow2_floor(alpha * (num_layers - l)) for l in range(1, num_layers + 1)]


def linear_deltas(alpha: float, num_layers: int) -> list[int]:
    out = []
    for l in range(1, num_layers + 1):
        v = alpha * (num_layers - l)
        r = round(v)
        out.append(r if abs(v - r) < _SNAP else math.floor(v))
    return out


def budget_sum(alpha: float, num_layers: int) -> int:
    """Left-hand side of the alpha_max constraint (exponent shifted by one layer)."""
    return sum(_pow2_floor(alpha * (num_layers - (l - 1))) for l in range(1, num_layers + 1))


def max_declining_rate(spec: ModelSpec | tuple[int, int], grid_step: float = 0.01) -> float:
    """Largest grid alpha whose shifted budget sum stays within x0 - 1.

    ``spec`` may be a ModelSpec or a bare ``(num_layers, initial_tokens)``
    pair. Alpha = 0 is always feasible (no pruning at all).
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    if isinstance(spec, ModelSpec):
        n, x0 = spec.num_layers, initial_token_count(spec)
    else:
        n, x0 = spec
    # the budget sum is non-decreasing in alpha, so scan upward until it breaks
    m = 0
    while budget_sum(grid_alpha(m + 1, grid_step), n) <= x0 - 1:
        m += 1
    return grid_alpha(m, grid_step)


def alpha_steps(alpha_max: float, grid_step: float) -> int:
    """Number of grid steps up to and including alpha_max."""
    return int(round(alpha_max / grid_step))


def schedule_from_deltas(initial_tokens: int, deltas) -> PruningSchedule:
    tokens = []
    x = initial_tokens
    for layer, d in enumerate(deltas, start=1):
        x -= d
        if x < 1:
            raise ScheduleError(f"layer {layer}: token count drops to {x}", layer=layer)
        tokens.append(x)
    return PruningSchedule(initial_tokens, tuple(deltas), tuple(tokens))


def build_schedule(spec: ModelSpec, policy: PruningPolicy, *, validate: bool = True) -> PruningSchedule:
    n = spec.num_layers
    x0 = initial_token_count(spec)
    form = policy.form
    if form is PruningForm.NONE:
        deltas = [0] * n
    elif form is PruningForm.LINEAR:
        deltas = linear_deltas(policy.alpha, n)
    else:
        if validate:
            amax = max_declining_rate((n, x0), policy.grid_step)
            if policy.alpha > amax + 1e-12:
                raise ScheduleError(
                    f"alpha {policy.alpha} exceeds max declining rate {amax} for {spec.name}")
        deltas = exponential_deltas(policy.alpha, n)
    return schedule_from_deltas(x0, deltas)


def constant_schedule(spec: ModelSpec, per_layer: int) -> PruningSchedule:
    """Remove a fixed number of tokens at every layer (ToMe-style)."""
    if per_layer < 0:
        raise SpecError("per_layer must be >= 0")
    return schedule_from_deltas(initial_token_count(spec), [per_layer] * spec.num_layers)


def alpha_for_mean_reduction(spec: ModelSpec, per_layer: float, grid_step: float = 0.01) -> float:
    """Grid alpha whose mean per-layer reduction is closest to ``per_layer``.

    Ties go to the smaller alpha (less pruning).
    """
    n = spec.num_layers
    amax = max_declining_rate(spec, grid_step)
    best, best_err = 0.0, math.inf
    for m in range(alpha_steps(amax, grid_step) + 1):
        a = grid_alpha(m, grid_step)
        err = abs(sum(exponential_deltas(a, n)) / n - per_layer)
        if err < best_err:
            best, best_err = a, err
    return best
