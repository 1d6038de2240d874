"""Learning rates, backward weight profiles and elimination radii.

All agents share the step size ``alpha_k = (H + 1) / (H + k)``.  The weight
profile is only needed by tests and the verification suite; the agents use
the incremental form of the update directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

RADIUS_MODES = ("theory", "experiment")


@dataclass(frozen=True)
class RateParams:
    H: int
    A: int
    K: int
    mode: str = "experiment"

    def __post_init__(self):
        for name in ("H", "A", "K"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.mode not in RADIUS_MODES:
            raise ValueError(f"mode must be one of {RADIUS_MODES}, got {self.mode!r}")

    @property
    def T(self) -> int:
        return self.H * self.K

    @property
    def iota(self) -> float:
        """Log factor of the theory-mode radius, ``9 ln(A T)``."""
        return 9.0 * math.log(self.A * self.T)


def _check_positive(name: str, value: int) -> None:
    if value < 1:
        raise ValueError(f"{name} must be >= 1, got {value}")


def alpha(k: int, H: int) -> float:
    """Step size used at the ``k``-th update of a value."""
    _check_positive("k", k)
    _check_positive("H", H)
    return (H + 1) / (H + k)


def weight_profile(t: int, H: int) -> np.ndarray:
    """Return ``(a_t^0, a_t^1, ..., a_t^t)``.

    ``a_t^i`` is the weight the ``i``-th target carries in a value after ``t``
    updates; ``a_t^0`` is the weight left on the initial value.
    """
    _check_positive("H", H)
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t == 0:
        return np.ones(1)
    j = np.arange(1, t + 1, dtype=float)
    steps = (H + 1) / (H + j)
    keep = 1.0 - steps
    # tail[i] = prod_{j=i+1}^{t} (1 - alpha_j), for i = 0..t
    tail = np.ones(t + 1)
    tail[:-1] = np.cumprod(keep[::-1])[::-1]
    weights = np.empty(t + 1)
    weights[0] = tail[0]
    weights[1:] = steps * tail[1:]
    return weights


def confidence_radius(k: int, params: RateParams) -> float:
    """Elimination threshold applied to Q-value gaps after ``k - 1`` updates.

    ``theory`` mode returns ``8 sqrt(H^5 iota) / sqrt(k - 1)`` with
    ``iota = 9 ln(A T)`` (infinite at ``k = 1``); ``experiment`` mode returns
    ``sqrt(H ln(H K A) / k)``.
    """
    _check_positive("k", k)
    H, A, K = params.H, params.A, params.K
    if params.mode == "theory":
        if k == 1:
            return math.inf
        return 8.0 * math.sqrt(H**5 * params.iota) / math.sqrt(k - 1)
    return math.sqrt(H * math.log(H * K * A) / k)
