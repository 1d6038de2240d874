"""Clairvoyant solutions and exact oracles for small MDPs.

:func:`compute_optimal_q` solves the gridded decision problem by backward
induction with known demand distributions.  The rest of the module works on
explicit finite MDPs (transition tensors) and is used to check learners and
identities by exhaustive computation.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .envs import EnvSpec

AUCTION_NODES_PER_BIDDER = 48


@dataclass(frozen=True)
class OptimalSolution:
    """Optimal action values ``q_star[h-1, i]`` for grid action ``i`` at stage ``h``."""

    spec: EnvSpec
    q_star: np.ndarray
    base_stock_index: np.ndarray

    @property
    def base_stock(self) -> np.ndarray:
        return self.spec.grid.levels[self.base_stock_index]

    def v_star(self, h: int, x):
        """Optimal value from state ``x`` at stage ``h`` (0 after the last stage)."""
        if h == self.spec.H + 1:
            return 0.0 if np.ndim(x) == 0 else np.zeros(np.shape(x))
        return suffix_max(self.q_star[h - 1])[self.spec.feasible_start(x)]

    def action(self, h: int, x: float) -> float:
        """Base-stock decision: order up to ``max(x, S*_h)`` on the grid."""
        i = max(int(self.spec.feasible_start(x)), int(self.base_stock_index[h - 1]))
        i = min(i, self.spec.grid.A - 1)
        return float(self.spec.grid.levels[i])

    def expected_cost(self, x1: float = 0.0) -> float:
        return -float(self.v_star(1, x1))

    def cost_scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.q_star))))


def suffix_max(q: np.ndarray) -> np.ndarray:
    """``out[i] = max(q[i:])``; ``out[len(q)] = -inf`` marks an empty feasible set."""
    out = np.empty(len(q) + 1)
    out[-1] = -np.inf
    out[:-1] = np.maximum.accumulate(q[::-1])[::-1]
    return out


def argmax_low(values: np.ndarray) -> int:
    """Index of the maximum, ties resolved toward the smallest index."""
    return int(np.argmax(values))


def _stage_expectation(spec: EnvSpec, h: int, v_next: np.ndarray, nodes: int) -> np.ndarray:
    levels = spec.grid.levels
    if spec.kind == "auction":
        pts, w1 = spec.demand.quadrature(h, min(nodes, AUCTION_NODES_PER_BIDDER))
        rev = np.zeros(len(levels))
        for combo in itertools.product(range(len(pts)), repeat=spec.n_bidders):
            weight = float(np.prod(w1[list(combo)]))
            rev += weight * spec.outcome(h, levels, pts[list(combo)])[0]
        return rev + np.max(v_next[:-1])
    pts, weights = spec.demand.quadrature(h, nodes)
    q = np.zeros(len(levels))
    for d, w in zip(pts, weights):
        reward, nxt, cost = spec.outcome(h, levels, d)
        value = -cost + v_next[spec.feasible_start(nxt)]
        q += w * value
    return q


def compute_optimal_q(spec: EnvSpec, quadrature_nodes: int = 1024, check_concavity: bool = True) -> OptimalSolution:
    """Backward induction over the action grid with known demand laws.

    Values are negated true costs (for lost sales the unobservable shortage
    penalty is included, so ``-V*`` is an expected cost).  Off-grid next states
    are valued exactly by maximizing over the feasible grid actions.
    """
    if quadrature_nodes < 64:
        raise ValueError(f"need at least 64 quadrature nodes, got {quadrature_nodes}")
    H, A = spec.H, spec.grid.A
    q_star = np.zeros((H, A))
    v_next = np.zeros(A + 1)
    v_next[-1] = -np.inf
    for h in range(H, 0, -1):
        q_star[h - 1] = _stage_expectation(spec, h, v_next, quadrature_nodes)
        v_next = suffix_max(q_star[h - 1])
    base = np.array([argmax_low(q_star[h]) for h in range(H)], dtype=np.int64)
    sol = OptimalSolution(spec, q_star, base)
    if check_concavity and spec.inventory:
        gap = concavity_violation(sol)
        if gap > 1e-8 * sol.cost_scale():
            warnings.warn(f"optimal Q-values are not concave in the action (violation {gap:.3g})")
    return sol


def optimal_base_stock(solution: OptimalSolution, h: int) -> float:
    return float(solution.base_stock[h - 1])


def concavity_violation(solution: OptimalSolution) -> float:
    """Largest ``Q(y_{i-1}) + Q(y_{i+1}) - 2 Q(y_i)`` over stages and interior points."""
    q = solution.q_star
    if q.shape[1] < 3:
        return 0.0
    return float(np.max(q[:, :-2] + q[:, 2:] - 2.0 * q[:, 1:-1]))


def run_clairvoyant(solution: OptimalSolution, spec: EnvSpec, randomness, x1: float = 0.0,
                    return_actions: bool = False):
    """Realized cost of the base-stock policy on one episode of randomness."""
    x = x1
    total = 0.0
    actions = []
    for h in range(1, spec.H + 1):
        y = solution.action(h, x)
        _, nxt, cost = spec.outcome(h, np.array([y]), randomness[h - 1])
        total += float(cost[0])
        x = float(nxt[0])
        actions.append(y)
    if return_actions:
        return total, actions
    return total


# --------------------------------------------------------------------------
# explicit finite MDPs


@dataclass
class FiniteMDP:
    """Finite-horizon MDP with explicit per-stage transitions and mean rewards.

    ``P`` has shape ``(H, S, A, S)`` and ``R`` shape ``(H, S, A)``; stationary
    inputs ``(S, A, S)`` / ``(S, A)`` are broadcast over stages.  ``feasible``
    optionally masks actions per state.
    """

    P: np.ndarray
    R: np.ndarray
    H: int
    feasible: np.ndarray | None = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if P.ndim == 3:
            P = np.broadcast_to(P, (self.H,) + P.shape)
        if R.ndim == 2:
            R = np.broadcast_to(R, (self.H,) + R.shape)
        if P.ndim != 4 or P.shape[0] != self.H or P.shape[1] != P.shape[3]:
            raise ValueError(f"bad transition tensor shape {P.shape}")
        if R.shape != P.shape[:3]:
            raise ValueError(f"reward shape {R.shape} does not match transitions {P.shape}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=3) - 1.0)) > 1e-12:
            raise ValueError("transition probabilities must be nonnegative and sum to 1")
        if self.feasible is None:
            feasible = np.ones(P.shape[1:3], dtype=bool)
        else:
            feasible = np.asarray(self.feasible, dtype=bool)
            if feasible.shape != P.shape[1:3] or not feasible.any(axis=1).all():
                raise ValueError("feasibility mask must allow an action in every state")
        self.P, self.R, self.feasible = P, R, feasible

    @property
    def S(self) -> int:
        return self.P.shape[1]

    @property
    def A(self) -> int:
        return self.P.shape[2]


def random_tiny_mdp(rng: np.random.Generator, S: int = 3, A: int = 3, H: int = 3) -> FiniteMDP:
    P = rng.random((H, S, A, S)) + 1e-3
    P /= P.sum(axis=3, keepdims=True)
    # renormalize once more so row sums are 1 to machine precision
    P[..., -1] = 1.0 - P[..., :-1].sum(axis=3)
    return FiniteMDP(P, rng.random((H, S, A)), H)


def brute_force_q(mdp: FiniteMDP) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``Q*`` of shape ``(H, S, A)`` and ``V*`` of shape ``(H + 1, S)``."""
    if mdp.S > 10 or mdp.A > 10 or mdp.H > 4:
        raise ValueError("brute-force oracle is limited to 10 states, 10 actions and H <= 4")
    Q = np.zeros((mdp.H, mdp.S, mdp.A))
    V = np.zeros((mdp.H + 1, mdp.S))
    for h in range(mdp.H - 1, -1, -1):
        Q[h] = mdp.R[h] + mdp.P[h] @ V[h + 1]
        V[h] = np.where(mdp.feasible, Q[h], -np.inf).max(axis=1)
    return Q, V


def _policy_matrix(mdp: FiniteMDP, policy) -> np.ndarray:
    pol = np.asarray(policy)
    if pol.ndim == 2:
        out = np.zeros((mdp.H, mdp.S, mdp.A))
        h_idx, s_idx = np.meshgrid(np.arange(mdp.H), np.arange(mdp.S), indexing="ij")
        out[h_idx, s_idx, pol.astype(int)] = 1.0
        return out
    if pol.shape != (mdp.H, mdp.S, mdp.A):
        raise ValueError(f"policy shape {pol.shape} does not match the MDP")
    return pol.astype(float)


def evaluate_policy(mdp: FiniteMDP, policy) -> np.ndarray:
    """``V^pi`` of shape ``(H + 1, S)`` for a deterministic ``(H, S)`` or stochastic ``(H, S, A)`` policy."""
    pi = _policy_matrix(mdp, policy)
    V = np.zeros((mdp.H + 1, mdp.S))
    for h in range(mdp.H - 1, -1, -1):
        Q = mdp.R[h] + mdp.P[h] @ V[h + 1]
        V[h] = (pi[h] * Q).sum(axis=1)
    return V


def enumerate_best_value(mdp: FiniteMDP, x1: int) -> float:
    """Best value over every deterministic Markov policy (exhaustive search)."""
    best = -np.inf
    for flat in itertools.product(range(mdp.A), repeat=mdp.H * mdp.S):
        pol = np.array(flat).reshape(mdp.H, mdp.S)
        if not mdp.feasible[np.arange(mdp.S)[None, :], pol].all():
            continue
        best = max(best, evaluate_policy(mdp, pol)[0, x1])
    return best


def shortfall_residual(mdp: FiniteMDP, policy, x1: int = 0) -> float:
    """Regret of ``policy`` minus its summed expected per-stage Q* shortfalls.

    Both sides are computed exactly by pushing the state distribution forward
    under the policy; the identity makes the result zero up to rounding.
    """
    Q, V = brute_force_q(mdp)
    pi = _policy_matrix(mdp, policy)
    regret = V[0, x1] - evaluate_policy(mdp, pi)[0, x1]
    dist = np.zeros(mdp.S)
    dist[x1] = 1.0
    shortfall = 0.0
    for h in range(mdp.H):
        best = np.where(mdp.feasible, Q[h], -np.inf).max(axis=1)
        gaps = np.where(pi[h] > 0, best[:, None] - Q[h], 0.0)
        shortfall += float(dist @ (pi[h] * gaps).sum(axis=1))
        dist = np.einsum("s,sa,sat->t", dist, pi[h], mdp.P[h])
    return float(regret - shortfall)
