"""Learners for episodic problems with action-only Q-values.

All agents share one protocol, driven by the harness:

    agent.start_episode()
    for h in 1..H:
        y = agent.select(h, x)
        outcome = spec.step(h, x, y, D_h, feedback=agent.feedback)
        agent.observe(h, x, y, outcome)
        x = outcome.next_state
    agent.end_episode()

Q-tables are indexed by grid position.  Rewards and transitions of the
provided environments do not depend on the state, so the state is used only
to decide which actions are feasible.
"""

from __future__ import annotations

import math

import numpy as np

from .envs import EnvSpec, StepOutcome
from .oracle import OptimalSolution, argmax_low, suffix_max
from .schedule import RateParams, confidence_radius


def argmax_high(values: np.ndarray) -> int:
    return len(values) - 1 - int(np.argmax(values[::-1]))


_ARGMAX = {"low": argmax_low, "high": argmax_high}


class Agent:
    name = "agent"
    feedback = "bandit"

    def __init__(self, spec: EnvSpec, K: int):
        if not spec.supports(self.feedback):
            raise ValueError(f"{self.name} needs {self.feedback} feedback, which "
                             f"{spec.kind} with {spec.feedback} feedback does not provide")
        self.spec = spec
        self.K = K
        self.H = spec.H
        self.levels = spec.grid.levels
        self.k = 1
        self.states: list[float] = []
        self.actions: list[float] = []

    def alpha(self, t: int) -> float:
        return (self.H + 1) / (self.H + t)

    def start_episode(self) -> None:
        self.states = []
        self.actions = []

    def select(self, h: int, x: float) -> float:
        raise NotImplementedError

    def observe(self, h: int, x: float, y: float, outcome: StepOutcome) -> None:
        self.states.append(x)
        self.actions.append(y)

    def end_episode(self) -> None:
        self.k += 1


class ClairvoyantAgent(Agent):
    """Plays the optimal base-stock policy; never learns."""

    name = "OPT"
    feedback = "bandit"

    def __init__(self, spec: EnvSpec, K: int, solution: OptimalSolution):
        super().__init__(spec, K)
        self.solution = solution

    def select(self, h, x):
        return self.solution.action(h, x)


# --------------------------------------------------------------------------
# full feedback


class FQL(Agent):
    """Q-learning that updates every action at every stage from full feedback.

    ``tie`` decides which maximizer is played when several actions share the
    best estimate (only the untouched optimistic table produces exact ties).
    """

    name = "FQL"
    feedback = "full"

    def __init__(self, spec: EnvSpec, K: int, tie: str = "high"):
        super().__init__(spec, K)
        self.q = np.full((self.H, spec.grid.A), float(self.H))
        self._argmax = _ARGMAX[tie]

    def value_at(self, h: int, x: float) -> float:
        if h == self.H + 1:
            return 0.0
        start = self.spec.feasible_start(x)
        return float(np.max(self.q[h - 1, start:]))

    def select(self, h, x):
        start = self.spec.feasible_start(x)
        return float(self.levels[start + self._argmax(self.q[h - 1, start:])])

    def observe(self, h, x, y, outcome):
        super().observe(h, x, y, outcome)
        self.update(h, outcome.observed)

    def update(self, h: int, observed) -> None:
        rewards, nxt = observed.evaluate(self.levels)
        if h < self.H:
            target = rewards + suffix_max(self.q[h])[self.spec.feasible_start(nxt)]
        else:
            target = rewards
        a = self.alpha(self.k)
        self.q[h - 1] = (1.0 - a) * self.q[h - 1] + a * target


# --------------------------------------------------------------------------
# one-sided feedback


def shrink_running_set(q: np.ndarray, radius: float) -> tuple[int, int]:
    """Contiguous run of positions within ``radius`` of the best value.

    ``q`` holds the values of the current running set in grid order; the run
    always contains the (smallest) maximizer.  Returns inclusive offsets.
    """
    star = argmax_low(q)
    if math.isinf(radius):
        return 0, len(q) - 1
    out = (q[star] - q) > radius
    left = np.flatnonzero(out[:star])
    right = np.flatnonzero(out[star + 1:])
    lo = int(left[-1]) + 1 if len(left) else 0
    hi = star + int(right[0]) if len(right) else len(q) - 1
    return lo, hi


class HQL(Agent):
    """Elimination-based learner for one-sided feedback.

    Keeps a contiguous running set ``[lo_h, hi_h]`` of grid indices per stage.
    On the lower side it plays the largest running action when feasible,
    otherwise the smallest feasible action, and after each episode replays
    every running action on the recorded stage observations.
    """

    name = "HQL"

    def __init__(self, spec: EnvSpec, K: int, radius_mode: str = "experiment", side: str | None = None):
        side = side or ("higher" if spec.feedback == "higher-one-sided" else "lower")
        if side not in ("lower", "higher"):
            raise ValueError(f"side must be 'lower' or 'higher', got {side!r}")
        self.feedback = f"{side}-one-sided"
        super().__init__(spec, K)
        self.side = side
        A = spec.grid.A
        self.q = np.full((self.H, A), float(self.H))
        self.lo = np.zeros(self.H, dtype=np.int64)
        self.hi = np.full(self.H, A - 1, dtype=np.int64)
        self.params = RateParams(self.H, A, K, radius_mode)
        self.records: list = []

    def radius(self, k: int) -> float:
        return confidence_radius(k, self.params)

    def running_set(self, h: int) -> np.ndarray:
        return self.levels[self.lo[h - 1]:self.hi[h - 1] + 1]

    def start_episode(self):
        super().start_episode()
        self.records = []

    def _select_index(self, h: int, x: float) -> int:
        start = int(self.spec.feasible_start(x))
        if start >= self.spec.grid.A:
            raise RuntimeError(f"no feasible action in state {x} at stage {h}")
        lo, hi = int(self.lo[h - 1]), int(self.hi[h - 1])
        if self.side == "lower":
            return hi if hi >= start else start
        return lo if lo >= start else self.spec.grid.A - 1

    def select(self, h, x):
        return float(self.levels[self._select_index(h, x)])

    def observe(self, h, x, y, outcome):
        super().observe(h, x, y, outcome)
        self.records.append(outcome.observed)

    def value_at(self, h: int, x: float) -> float:
        """Best running-set value among actions feasible at ``x``."""
        if h == self.H + 1:
            return 0.0
        start = int(self.spec.feasible_start(x))
        lo, hi = int(self.lo[h - 1]), int(self.hi[h - 1])
        if start > hi:
            raise RuntimeError(f"no running action is feasible at x={x}, stage {h}")
        return float(np.max(self.q[h - 1, max(start, lo):hi + 1]))

    def _targets(self, h: int) -> np.ndarray:
        """Replay each running action of stage ``h`` until the running set is reachable."""
        lo, hi = int(self.lo[h - 1]), int(self.hi[h - 1])
        ys = self.levels[lo:hi + 1]
        total, x = self.records[h - 1].evaluate(ys)
        total = np.array(total, dtype=float)
        x = np.array(x, dtype=float)
        target = np.zeros(len(ys))
        active = np.ones(len(ys), dtype=bool)
        A = self.spec.grid.A
        for hp in range(h + 1, self.H + 1):
            lo_p, hi_p = int(self.lo[hp - 1]), int(self.hi[hp - 1])
            start = np.asarray(self.spec.feasible_start(x[active]))
            stop = start <= hi_p
            idx = np.flatnonzero(active)
            if stop.any():
                sm = suffix_max(self.q[hp - 1, lo_p:hi_p + 1])
                j = np.maximum(start[stop], lo_p) - lo_p
                target[idx[stop]] = total[idx[stop]] + sm[j]
                active[idx[stop]] = False
            go = idx[~stop]
            if len(go) == 0:
                break
            if self.side == "lower":
                forced = start[~stop]
            else:
                forced = np.full(len(go), A - 1)
            if np.any(forced >= A):
                raise RuntimeError("replayed trajectory left the action grid")
            r, nxt = self.records[hp - 1].evaluate(self.levels[forced])
            total[go] += r
            x[go] = nxt
        target[active] = total[active]
        return target

    def end_episode(self):
        if len(self.records) != self.H:
            raise RuntimeError("episode ended before every stage was observed")
        a = self.alpha(self.k)
        radius = self.radius(self.k + 1)
        new_lo = self.lo.copy()
        new_hi = self.hi.copy()
        for h in range(self.H, 0, -1):
            lo, hi = int(self.lo[h - 1]), int(self.hi[h - 1])
            seg = self.q[h - 1, lo:hi + 1]
            seg[:] = (1.0 - a) * seg + a * self._targets(h)
            dlo, dhi = shrink_running_set(seg, radius)
            new_lo[h - 1], new_hi[h - 1] = lo + dlo, lo + dhi
        self.lo, self.hi = new_lo, new_hi
        super().end_episode()


# --------------------------------------------------------------------------
# bandit-feedback baselines


class UCBQL(Agent):
    """Optimistic Q-learning with a Hoeffding bonus and bandit feedback.

    With ``agg_step`` larger than the grid step, actions are pooled into cells
    ``[j * agg_step, (j + 1) * agg_step)`` that share one value; the agent
    plays the smallest feasible level of the best feasible cell.
    """

    name = "QL-UCB"
    feedback = "bandit"

    def __init__(self, spec: EnvSpec, K: int, bonus_scale: float = 1.0, agg_step: float | None = None):
        super().__init__(spec, K)
        step = spec.grid.step
        agg_step = step if agg_step is None else float(agg_step)
        ratio = agg_step / step
        if agg_step <= 0 or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"agg_step {agg_step} is not a multiple of the grid step {step}")
        self.agg_step = agg_step
        self.cell_of = (np.arange(spec.grid.A) // int(round(ratio))).astype(np.int64)
        n_cells = int(self.cell_of[-1]) + 1
        self.first_level = np.searchsorted(self.cell_of, np.arange(n_cells))
        self.q = np.full((self.H, n_cells), float(self.H))
        self.n = np.zeros((self.H, n_cells), dtype=np.int64)
        self.bonus_scale = float(bonus_scale)
        self.iota = math.log(spec.grid.A * self.H * K)
        self._chosen_cell = 0

    @property
    def n_cells(self) -> int:
        return self.q.shape[1]

    def _first_feasible_cell(self, x: float) -> tuple[int, int]:
        start = int(self.spec.feasible_start(x))
        if start >= self.spec.grid.A:
            raise RuntimeError(f"no feasible action in state {x}")
        return start, int(self.cell_of[start])

    def value_at(self, h: int, x: float) -> float:
        if h == self.H + 1:
            return 0.0
        _, c0 = self._first_feasible_cell(x)
        return float(np.max(self.q[h - 1, c0:]))

    def select(self, h, x):
        start, c0 = self._first_feasible_cell(x)
        c = c0 + argmax_low(self.q[h - 1, c0:])
        self._chosen_cell = c
        return float(self.levels[max(start, int(self.first_level[c]))])

    def bonus(self, t: int) -> float:
        return self.bonus_scale * math.sqrt(self.H**3 * self.iota / t)

    def observe(self, h, x, y, outcome):
        super().observe(h, x, y, outcome)
        c = int(self.cell_of[self.spec.grid.index_of(y)])
        self.n[h - 1, c] += 1
        t = int(self.n[h - 1, c])
        v_next = self.value_at(h + 1, outcome.next_state) if h < self.H else 0.0
        a = self.alpha(t)
        target = outcome.reward + v_next + self.bonus(t)
        self.q[h - 1, c] = (1.0 - a) * self.q[h - 1, c] + a * target


class AggQL(UCBQL):
    name = "AggQL"

    def __init__(self, spec: EnvSpec, K: int, agg_step: float = 1.0, bonus_scale: float = 1.0):
        super().__init__(spec, K, bonus_scale=bonus_scale, agg_step=agg_step)


AGENT_KINDS = {
    "fql": FQL,
    "hql": HQL,
    "qlucb": UCBQL,
    "aggql": AggQL,
}


def make_agent(kind: str, spec: EnvSpec, K: int, **params) -> Agent:
    try:
        cls = AGENT_KINDS[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown agent kind {kind!r}; choose from {sorted(AGENT_KINDS)}") from None
    return cls(spec, K, **params)
