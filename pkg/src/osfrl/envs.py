"""Episodic environments with explicit feedback models.

Every environment is driven by per-stage randomness (a demand, or a vector of
bidder values) that is drawn before the episode starts.  Rewards and
transitions depend only on the stage, the action and that randomness, so an
agent holding the stage record can replay alternative actions as long as the
feedback model reveals them.

Inventory actions are order-up-to levels on a uniform grid; the state is the
starting inventory, which is a real number and is never discretized here.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ENV_KINDS = ("backlogged", "lost-sales", "auction", "lower-bound")
FEEDBACK_MODES = ("bandit", "lower-one-sided", "higher-one-sided", "full")

ALLOWED_FEEDBACK = {
    "backlogged": ("full", "lower-one-sided", "bandit"),
    "lower-bound": ("full", "lower-one-sided", "bandit"),
    "lost-sales": ("lower-one-sided", "bandit"),
    "auction": ("higher-one-sided", "bandit"),
}

_GRID_TOL = 1e-9


# --------------------------------------------------------------------------
# action grid


@dataclass(frozen=True)
class ActionGrid:
    """Uniform grid ``{0, step, 2 step, ..., max_level}``."""

    max_level: float
    step: float
    levels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if self.max_level < 0:
            raise ValueError(f"grid max must be nonnegative, got {self.max_level}")
        ratio = self.max_level / self.step
        n = round(ratio)
        if abs(ratio - n) > _GRID_TOL * max(1.0, abs(ratio)):
            raise ValueError(
                f"grid max {self.max_level} is not a multiple of step {self.step}"
            )
        levels = np.arange(n + 1, dtype=float) * self.step
        levels[-1] = float(self.max_level)
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    @property
    def A(self) -> int:
        return len(self.levels)

    def __len__(self) -> int:
        return len(self.levels)

    def ceil_index(self, x):
        """Index of the smallest level >= ``x`` (``A`` when ``x > max``).

        Works on scalars and arrays; negative states map to index 0.
        """
        idx = np.ceil(np.asarray(x, dtype=float) / self.step - _GRID_TOL)
        idx = np.clip(idx, 0, self.A).astype(np.int64)
        if idx.ndim == 0:
            return int(idx)
        return idx

    def index_of(self, y: float) -> int:
        """Index of a level that lies on the grid."""
        i = int(round(y / self.step))
        if i < 0 or i >= self.A or abs(self.levels[i] - y) > 1e-7 * max(1.0, self.step):
            raise ValueError(f"{y} is not a grid level")
        return i

    def floor_index(self, x):
        idx = np.floor(np.asarray(x, dtype=float) / self.step + _GRID_TOL)
        idx = np.clip(idx, -1, self.A - 1).astype(np.int64)
        if idx.ndim == 0:
            return int(idx)
        return idx


def build_action_grid(M: float, step: float) -> ActionGrid:
    return ActionGrid(float(M), float(step))


def feasible_actions(x: float, grid: ActionGrid) -> np.ndarray:
    """Grid levels an order-up-to decision may use from inventory ``x``.

    Returns an empty array when ``x`` exceeds the largest level; inventory
    dynamics with ``y <= M`` and nonnegative demand never produce that state.
    """
    return grid.levels[grid.ceil_index(x):]


# --------------------------------------------------------------------------
# costs and demand


def _per_stage(value, h: int) -> float:
    if isinstance(value, (tuple, list, np.ndarray)):
        return float(value[h - 1])
    return float(value)


@dataclass(frozen=True)
class CostParams:
    """Unit costs; each coefficient is a scalar or a per-stage sequence.

    ``o`` holding, ``b`` backlog, ``p`` lost-sales penalty, ``c`` purchase,
    ``salvage`` the unit value of inventory left after the last stage.
    """

    o: float | tuple = 0.0
    b: float | tuple = 0.0
    p: float | tuple = 0.0
    c: float | tuple = 0.0
    salvage: float = 0.0

    def stage(self, h: int) -> tuple[float, float, float, float]:
        return (
            _per_stage(self.o, h),
            _per_stage(self.b, h),
            _per_stage(self.p, h),
            _per_stage(self.c, h),
        )

    def has_purchase_cost(self) -> bool:
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        return bool(np.any(c != 0.0)) or self.salvage != 0.0


def amortize_costs(costs: CostParams, H: int, kind: str = "lost-sales") -> CostParams:
    """Fold unit purchase costs into holding and shortage coefficients.

    The telescoped purchase terms leave ``sum_h c_h D_h - c_1 x_1``, which no
    policy can influence.  Lost sales: ``o'_h = o_h + c_h - c_{h+1}`` and
    ``p'_h = p_h - c_h``.  Backlog: the same ``o'_h``; shortage carries into the
    next stage, so ``b'_h = b_h - c_h + c_{h+1}`` for ``h < H`` and
    ``b'_H = b_H - c_H``.  ``c_{H+1}`` is the salvage value.
    """
    if kind not in ("lost-sales", "backlogged", "lower-bound"):
        raise ValueError(f"cannot amortize purchase costs for kind {kind!r}")
    o, b, p = [], [], []
    for h in range(1, H + 1):
        oh, bh, ph, ch = costs.stage(h)
        c_next = costs.salvage if h == H else costs.stage(h + 1)[3]
        o.append(oh + ch - c_next)
        p.append(ph - ch if kind == "lost-sales" else ph)
        if kind == "lost-sales":
            b.append(bh)
        elif h < H:
            b.append(bh - ch + c_next)
        else:
            b.append(bh - ch)
    shortage = p if kind == "lost-sales" else b
    if min(o) < 0 or min(shortage) < 0:
        raise ValueError(
            "amortized cost coefficients must be nonnegative "
            f"(holding {o}, shortage {shortage})"
        )
    return CostParams(o=tuple(o), b=tuple(b), p=tuple(p), c=0.0, salvage=0.0)


@dataclass(frozen=True)
class DemandModel:
    """Per-stage distribution of the environment randomness.

    ``uniform-offset``: ``offsets[h-1] + width * U[0, 1)`` (deterministic when
    ``width`` is 0).
    ``two-point``: ``low[h-1]`` with probability ``p_low``, else ``high[h-1]``.
    """

    kind: str
    offsets: tuple = ()
    width: float = 1.0
    low: tuple = ()
    high: tuple = ()
    p_low: float = 0.5

    def __post_init__(self):
        if self.kind == "uniform-offset":
            if not self.offsets:
                raise ValueError("uniform-offset demand needs per-stage offsets")
            if self.width < 0:
                raise ValueError(f"width must be nonnegative, got {self.width}")
        elif self.kind == "two-point":
            if len(self.low) != len(self.high) or not self.low:
                raise ValueError("two-point demand needs matching low/high sequences")
            if not 0.0 < self.p_low < 1.0:
                raise ValueError(f"p_low must lie in (0, 1), got {self.p_low}")
            if any(lo >= hi for lo, hi in zip(self.low, self.high)):
                raise ValueError("two-point demand needs low < high at every stage")
        else:
            raise ValueError(f"unknown demand kind {self.kind!r}")

    @classmethod
    def uniform(cls, offsets: Sequence[float], width: float = 1.0) -> "DemandModel":
        return cls("uniform-offset", offsets=tuple(float(a) for a in offsets), width=float(width))

    @classmethod
    def two_point(cls, low: Sequence[float], high: Sequence[float], p_low: float) -> "DemandModel":
        return cls(
            "two-point",
            low=tuple(float(v) for v in low),
            high=tuple(float(v) for v in high),
            p_low=float(p_low),
        )

    @property
    def stages(self) -> int:
        return len(self.offsets) if self.kind == "uniform-offset" else len(self.low)

    def value(self, h: int, u):
        """Map uniform draw(s) ``u`` in ``[0, 1)`` to realized randomness."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform-offset":
            out = self.offsets[h - 1] + self.width * u
        else:
            out = np.where(u < self.p_low, self.low[h - 1], self.high[h - 1])
        return float(out) if out.ndim == 0 else out

    def support(self, h: int) -> tuple[float, float]:
        if self.kind == "uniform-offset":
            a = self.offsets[h - 1]
            return a, a + self.width
        return self.low[h - 1], self.high[h - 1]

    def mean(self, h: int) -> float:
        if self.kind == "uniform-offset":
            return self.offsets[h - 1] + self.width / 2
        return self.p_low * self.low[h - 1] + (1 - self.p_low) * self.high[h - 1]

    def quadrature(self, h: int, nodes: int) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights for expectations at stage ``h``.

        Midpoint rule for the uniform case, exact two-atom average otherwise.
        """
        if self.kind == "two-point":
            return (
                np.array([self.low[h - 1], self.high[h - 1]]),
                np.array([self.p_low, 1.0 - self.p_low]),
            )
        a = self.offsets[h - 1]
        x = a + self.width * (np.arange(nodes) + 0.5) / nodes
        return x, np.full(nodes, 1.0 / nodes)


def decreasing_offsets(H: int) -> tuple[float, ...]:
    """Offsets ``(10 - h) / 2`` of the decreasing-demand inventory instance."""
    return tuple((10 - h) / 2 for h in range(1, H + 1))


def sample_demand(h: int, model: DemandModel, rng: np.random.Generator) -> float:
    return model.value(h, rng.random())


# --------------------------------------------------------------------------
# one-stage formulas (vectorized over the action)


def backlogged_outcome(y, D: float, o: float, b: float):
    """Reward and next inventory when unmet demand is backlogged."""
    y = np.asarray(y, dtype=float)
    over = np.maximum(y - D, 0.0)
    under = np.maximum(D - y, 0.0)
    return -(o * over + b * under), y - D


def lost_sales_outcome(y, sales_cap: float, o: float, p: float):
    """Pseudo-reward and next inventory under lost sales.

    ``sales_cap`` may be the demand itself or any censored observation
    ``min(y_chosen, D)`` with ``y <= y_chosen``; both give ``min(y, D)``.
    """
    y = np.asarray(y, dtype=float)
    sold = np.minimum(y, sales_cap)
    left = y - sold
    return -(o * left - p * sold), left


def lost_sales_true_cost(y, D: float, o: float, p: float):
    y = np.asarray(y, dtype=float)
    return o * np.maximum(y - D, 0.0) + p * np.maximum(D - y, 0.0)


def auction_revenue(reserve, values) -> np.ndarray | float:
    """Second-price revenue for one or more reserve prices.

    Bids are the values at or above the reserve.  No bid earns 0, a single
    bid pays the reserve, otherwise the second-highest bid is paid.
    """
    r = np.asarray(reserve, dtype=float)
    v = np.sort(np.asarray(values, dtype=float))[::-1]
    first = v[0] if len(v) > 0 else -np.inf
    second = v[1] if len(v) > 1 else -np.inf
    out = np.where(second >= r, second, np.where(first >= r, r, 0.0))
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# observations


class Observation(Mapping):
    """What an agent learns about one stage after acting.

    Behaves as a read-only mapping from observable grid actions to
    ``(reward, next_state)``; :meth:`evaluate` is the vectorized form used by
    the agents.  Only the information the feedback model reveals is stored:
    the censored sales ``min(y, D)`` for lost sales, the submitted bids for
    auctions, the demand itself for backlogged inventory.
    """

    def __init__(self, spec: "EnvSpec", h: int, chosen: float, info, feedback: str,
                 chosen_outcome: tuple[float, float]):
        self.spec = spec
        self.h = h
        self.chosen = float(chosen)
        self.feedback = feedback
        self._info = info
        self._chosen_outcome = chosen_outcome

    def available(self, ys) -> np.ndarray:
        ys = np.asarray(ys, dtype=float)
        eps = 1e-9 * max(1.0, self.spec.grid.step)
        if self.feedback == "full":
            return np.ones(ys.shape, dtype=bool)
        if self.feedback == "lower-one-sided":
            return ys <= self.chosen + eps
        if self.feedback == "higher-one-sided":
            return ys >= self.chosen - eps
        return np.abs(ys - self.chosen) <= eps

    def evaluate(self, ys):
        """Rewards and next states for observable actions ``ys``.

        Raises ``LookupError`` if any requested action is not revealed.
        """
        ys = np.asarray(ys, dtype=float)
        ok = self.available(ys)
        if not np.all(ok):
            bad = np.atleast_1d(ys)[~np.atleast_1d(ok)][0]
            raise LookupError(
                f"action {bad} is not observable under {self.feedback} feedback "
                f"after playing {self.chosen}"
            )
        if self.feedback == "bandit":
            r, x = self._chosen_outcome
            return np.full(ys.shape, r), np.full(ys.shape, x)
        return self.spec._learn_outcome(self.h, ys, self._info)

    def keys_array(self) -> np.ndarray:
        levels = self.spec.grid.levels
        return levels[self.available(levels)]

    def __getitem__(self, y):
        if not bool(self.available(y)):
            raise KeyError(y)
        r, x = self.evaluate(np.array([float(y)]))
        return float(r[0]), float(x[0])

    def __iter__(self):
        return iter(self.keys_array().tolist())

    def __len__(self) -> int:
        return int(np.count_nonzero(self.available(self.spec.grid.levels)))


@dataclass(frozen=True)
class StepOutcome:
    next_state: float
    reward: float
    cost: float
    observed: Observation


# --------------------------------------------------------------------------
# environment spec


@dataclass(frozen=True)
class EnvSpec:
    """Full description of an episodic environment.

    ``feedback`` is the richest feedback the environment supports; agents may
    consume less of it (an elimination learner uses one side of a
    full-feedback environment, the bandit baselines only the chosen action).
    """

    kind: str
    H: int
    grid: ActionGrid
    demand: DemandModel
    costs: CostParams = CostParams()
    feedback: str = "full"
    n_bidders: int = 3

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.H < 1:
            raise ValueError(f"H must be >= 1, got {self.H}")
        if self.feedback not in ALLOWED_FEEDBACK[self.kind]:
            raise ValueError(
                f"{self.kind} environments support feedback "
                f"{ALLOWED_FEEDBACK[self.kind]}, not {self.feedback!r}"
            )
        if self.demand.stages < self.H:
            raise ValueError(f"demand model covers {self.demand.stages} stages, H={self.H}")
        if self.kind != "auction" and self.costs.has_purchase_cost():
            raise ValueError("purchase costs must be amortized before building an EnvSpec")
        for h in range(1, self.H + 1):
            if min(self.costs.stage(h)) < 0:
                raise ValueError(f"negative cost coefficient at stage {h}")
            if self.kind != "auction" and self.demand.support(h)[0] < 0:
                raise ValueError("demand must be nonnegative")

    # -- structure ---------------------------------------------------------

    @property
    def stateless(self) -> bool:
        return self.kind == "auction"

    @property
    def draws_per_stage(self) -> int:
        return self.n_bidders if self.kind == "auction" else 1

    @property
    def inventory(self) -> bool:
        return self.kind in ("backlogged", "lost-sales", "lower-bound")

    def supports(self, feedback: str) -> bool:
        if feedback == "bandit":
            return True
        if feedback == "full":
            return self.feedback == "full"
        if self.feedback == "full":
            # a full-feedback inventory env reveals the lower side as well
            return feedback == "lower-one-sided"
        return feedback == self.feedback

    def feasible_start(self, x) -> int:
        """Index of the smallest feasible grid action in state ``x``."""
        if self.stateless:
            return 0 if np.ndim(x) == 0 else np.zeros(np.shape(x), dtype=np.int64)
        return self.grid.ceil_index(x)

    def feasible_actions(self, x: float) -> np.ndarray:
        return self.grid.levels[self.feasible_start(x):]

    # -- randomness ----------------------------------------------------------

    def realize(self, uniforms) -> np.ndarray:
        """Turn uniforms of shape ``(H, draws_per_stage)`` into episode randomness."""
        u = np.asarray(uniforms, dtype=float).reshape(self.H, self.draws_per_stage)
        out = np.empty_like(u)
        for h in range(1, self.H + 1):
            out[h - 1] = self.demand.value(h, u[h - 1])
        return out[:, 0] if self.draws_per_stage == 1 else out

    # -- dynamics ----------------------------------------------------------

    def _learn_outcome(self, h: int, ys, info):
        """Learning reward and next state from the (possibly censored) info."""
        o, b, p, _ = self.costs.stage(h)
        if self.kind in ("backlogged", "lower-bound"):
            return backlogged_outcome(ys, info, o, b)
        if self.kind == "lost-sales":
            return lost_sales_outcome(ys, info, o, p)
        ys = np.asarray(ys, dtype=float)
        return np.asarray(auction_revenue(ys, info), dtype=float), np.zeros(ys.shape)

    def outcome(self, h: int, ys, randomness):
        """``(reward, next_state, true_cost)`` for actions ``ys`` given full randomness."""
        reward, nxt = self._learn_outcome(h, ys, randomness)
        if self.kind == "lost-sales":
            o, _, p, _ = self.costs.stage(h)
            cost = lost_sales_true_cost(ys, randomness, o, p)
        else:
            cost = -np.asarray(reward)
        return reward, nxt, cost

    def _revealed(self, y: float, randomness):
        if self.kind == "lost-sales":
            return min(y, float(randomness))
        if self.kind == "auction":
            v = np.asarray(randomness, dtype=float)
            return v[v >= y].copy()
        return float(randomness)

    def step(self, h: int, x: float, y: float, randomness, feedback: str | None = None) -> StepOutcome:
        """Play order-up-to level (or reserve price) ``y`` at stage ``h``."""
        feedback = feedback or self.feedback
        if not self.supports(feedback):
            raise ValueError(f"{self.kind}/{self.feedback} cannot provide {feedback} feedback")
        r, nxt, cost = self.outcome(h, np.array([y]), randomness)
        reward, next_state = float(r[0]), float(nxt[0])
        obs = Observation(self, h, y, self._revealed(y, randomness), feedback, (reward, next_state))
        return StepOutcome(next_state, reward, float(cost[0]), obs)


# --------------------------------------------------------------------------
# single-stage step helpers mirroring the formulas


def _stage_spec(kind: str, costs: CostParams, grid: ActionGrid | None, feedback: str) -> EnvSpec:
    grid = grid or ActionGrid(0.0, 1.0)
    demand = DemandModel.uniform([0.0])
    return EnvSpec(kind, 1, grid, demand, costs, feedback)


def step_backlogged(x: float, y: float, D: float, costs: CostParams,
                    grid: ActionGrid | None = None, feedback: str = "full") -> StepOutcome:
    """One backlogged stage; ``x`` only matters for feasibility, checked elsewhere."""
    del x
    spec = _stage_spec("backlogged", costs, grid, feedback)
    return spec.step(1, 0.0, y, D, feedback)


def step_lost_sales(x: float, y: float, D: float, costs: CostParams,
                    grid: ActionGrid | None = None) -> StepOutcome:
    del x
    spec = _stage_spec("lost-sales", costs, grid, "lower-one-sided")
    return spec.step(1, 0.0, y, D, "lower-one-sided")


def step_auction(reserve: float, bidder_values, grid: ActionGrid | None = None) -> StepOutcome:
    values = np.asarray(bidder_values, dtype=float)
    spec = EnvSpec(
        "auction", 1, grid or ActionGrid(0.0, 1.0), DemandModel.uniform([0.0]),
        feedback="higher-one-sided", n_bidders=len(values),
    )
    return spec.step(1, 0.0, reserve, values, "higher-one-sided")


def observe_counterfactual(y: float, y_query: float, randomness, spec: EnvSpec,
                           h: int = 1, feedback: str | None = None):
    """Outcome of ``y_query`` revealed by playing ``y``, or ``None``."""
    out = spec.step(h, 0.0, y, randomness, feedback)
    if not bool(out.observed.available(y_query)):
        return None
    return out.observed[y_query]


# --------------------------------------------------------------------------
# named instances


def inventory_env(kind: str, H: int, offsets: Sequence[float], M: float, step: float = 0.05,
                  o: float = 2.0, shortage: float = 10.0, width: float = 1.0,
                  feedback: str | None = None) -> EnvSpec:
    """Backlogged or lost-sales instance with uniform-offset demand."""
    if kind == "backlogged":
        costs = CostParams(o=o, b=shortage)
        feedback = feedback or "full"
    elif kind == "lost-sales":
        costs = CostParams(o=o, p=shortage)
        feedback = feedback or "lower-one-sided"
    else:
        raise ValueError(f"not an inventory kind: {kind!r}")
    return EnvSpec(kind, H, ActionGrid(M, step), DemandModel.uniform(offsets, width), costs, feedback)


def make_lower_bound_env(H: int, K: int, scale: float = 0.1, offset_low: float = 1.0,
                         offset_high: float = 2.0, step: float = 0.05,
                         unit_cost: float = 1.0) -> EnvSpec:
    """Two-point demand instance whose optimal level is hard to identify.

    Stage ``h`` demand is ``h*scale + offset_low`` with probability
    ``1/2 + 1/sqrt(K)`` and ``h*scale + offset_high`` otherwise; holding and
    backlog cost the same per unit.
    """
    if K < 16:
        raise ValueError(f"lower-bound instance needs K >= 16, got {K}")
    p_low = 0.5 + 1.0 / math.sqrt(K)
    low = [h * scale + offset_low for h in range(1, H + 1)]
    high = [h * scale + offset_high for h in range(1, H + 1)]
    M = math.ceil(round(high[-1] / step, 9)) * step
    return EnvSpec(
        "lower-bound", H, ActionGrid(M, step),
        DemandModel.two_point(low, high, p_low),
        CostParams(o=unit_cost, b=unit_cost), "full",
    )


def auction_env(H: int, M: float = 3.0, step: float = 0.05, n_bidders: int = 3,
                slope: float = 0.2, width: float = 1.0, feedback: str = "higher-one-sided") -> EnvSpec:
    """Reserve-price auction; bidder values at stage ``h`` are ``h*slope + width*U``."""
    demand = DemandModel.uniform([h * slope for h in range(1, H + 1)], width)
    return EnvSpec("auction", H, ActionGrid(M, step), demand, CostParams(), feedback, n_bidders)


# --------------------------------------------------------------------------
# purchase-inclusive accounting (used to check amortization)


def purchase_inclusive_cost(kind: str, costs: CostParams, x1: float, actions, demands) -> float:
    """Episode cost of a fixed action path with explicit purchase costs and salvage."""
    H = len(actions)
    x = x1
    total = 0.0
    for h in range(1, H + 1):
        o, b, p, c = costs.stage(h)
        y, D = float(actions[h - 1]), float(demands[h - 1])
        total += c * (y - x)
        if kind == "lost-sales":
            total += o * max(y - D, 0.0) + p * max(D - y, 0.0)
            x = max(y - D, 0.0)
        else:
            total += o * max(y - D, 0.0) + b * max(D - y, 0.0)
            x = y - D
    total -= costs.salvage * max(x, 0.0)
    return total
