"""Named invariant checks behind ``osfrl verify``.

Each check returns a list of failure messages (empty when it holds).  Checks
marked ``quick`` finish in a few seconds; the rest run simulations.  The
weight checks accept a step-size function so a deliberately wrong formula
can be injected and the violated property is reported by name.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .agents import HQL, ClairvoyantAgent
from .config import ExperimentConfig, parse_agents
from .envs import (CostParams, amortize_costs, decreasing_offsets, inventory_env,
                   purchase_inclusive_cost)
from .harness import results_csv, run_experiment, run_episode, summarize
from .oracle import (brute_force_q, compute_optimal_q, concavity_violation, enumerate_best_value,
                     random_tiny_mdp, run_clairvoyant, shortfall_residual)
from .schedule import alpha, weight_profile
from .streams import draw_randomness, replication_seed

WEIGHT_TOL = 1e-12


# --------------------------------------------------------------------------
# learning-rate weights


def iterate_weights(t_max: int, H: int, step: Callable[[int, int], float] = alpha):
    """Yield ``(t, w)`` with ``w[i] = a_t^i`` for ``t = 1..t_max``, built recursively."""
    w = np.zeros(t_max + 1)
    w[0] = 1.0
    for t in range(1, t_max + 1):
        a = step(t, H)
        w[:t] *= 1.0 - a
        w[t] = a
        yield t, w[: t + 1]


def check_weights(t_max: int = 10_000, H_values=range(1, 11),
                  step: Callable[[int, int], float] = alpha) -> list[str]:
    """Sum-to-one, maximum, and inverse-square-root bounds on the weight profile."""
    failures: dict[str, str] = {}
    for H in H_values:
        inv_sqrt = 1.0 / np.sqrt(np.arange(1, t_max + 1))
        for t, w in iterate_weights(t_max, H, step):
            ws = w[1:]
            bound = 2.0 * H / t
            if "sum-to-one" not in failures and (abs(ws.sum() - 1.0) > WEIGHT_TOL or abs(w[0]) > WEIGHT_TOL):
                failures["sum-to-one"] = f"H={H}, t={t}: sum={ws.sum():.15g}, initial weight={w[0]:.3g}"
            if "max-bound" not in failures and (ws.max() > bound + WEIGHT_TOL or ws @ ws > bound + WEIGHT_TOL):
                failures["max-bound"] = f"H={H}, t={t}: max={ws.max():.6g}, sum of squares={ws @ ws:.6g}, bound={bound:.6g}"
            s = ws @ inv_sqrt[:t]
            lo, hi = 1.0 / math.sqrt(t), (1.0 + 1.0 / H) / math.sqrt(t)
            if "inverse-sqrt" not in failures and not (lo - WEIGHT_TOL <= s <= hi + WEIGHT_TOL):
                failures["inverse-sqrt"] = f"H={H}, t={t}: sum a_t^i/sqrt(i)={s:.6g} outside [{lo:.6g}, {hi:.6g}]"
            if len(failures) == 3:
                break
    return [f"weights.{name}: {msg}" for name, msg in failures.items()]


def tail_partial_sum(i: int, H: int, horizon: int, step: Callable[[int, int], float] = alpha) -> float:
    """``sum_{t=i}^{horizon} a_t^i``."""
    t = np.arange(i + 1, horizon + 1)
    if step is alpha:
        keep = 1.0 - (H + 1) / (H + t)
    else:
        keep = 1.0 - np.array([step(int(j), H) for j in t])
    return float(step(i, H) * (1.0 + np.cumprod(keep).sum()))


def check_tail_sums(i_values=(1, 2, 3, 5, 10, 20, 50), H_values=range(1, 11),
                    step: Callable[[int, int], float] = alpha, tol: float = 0.01) -> list[str]:
    """Partial sums up to ``max(10 i H^2, 400 i)`` lie within ``tol`` below ``1 + 1/H``.

    At ``H = 1`` the tail beyond ``T`` is exactly ``2 i / (T + 1)``, hence the
    ``400 i`` floor.
    """
    out = []
    for H in H_values:
        target = 1.0 + 1.0 / H
        for i in i_values:
            s = tail_partial_sum(i, H, max(10 * i * H * H, 400 * i), step)
            if not (target - tol < s <= target + WEIGHT_TOL):
                out.append(f"weights.tail-sum: H={H}, i={i}: partial sum {s:.6g}, limit {target:.6g}")
                return out
    return out


def check_weight_profile_matches() -> list[str]:
    """The closed-form profile agrees with the recursive one."""
    for H in (1, 3, 10):
        for t, w in iterate_weights(300, H):
            if t in (1, 2, 17, 300):
                diff = np.max(np.abs(weight_profile(t, H) - w))
                if diff > WEIGHT_TOL:
                    return [f"weights.profile: H={H}, t={t}: differs from recursion by {diff:.3g}"]
    return []


# --------------------------------------------------------------------------
# finite-MDP identities


def check_shortfall(n: int = 100, seed: int = 7, tol: float = 1e-10) -> list[str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        S, A, H = (int(v) for v in rng.integers(1, 4, size=3))
        mdp = random_tiny_mdp(rng, S, A, H)
        policy = rng.integers(0, A, size=(H, S))
        worst = max(worst, abs(shortfall_residual(mdp, policy, int(rng.integers(S)))))
    return [] if worst <= tol else [f"mdp.shortfall: residual {worst:.3g} exceeds {tol:g}"]


def check_brute_force(n: int = 30, seed: int = 11) -> list[str]:
    rng = np.random.default_rng(seed)
    for _ in range(n):
        mdp = random_tiny_mdp(rng, 2, 2, 2)
        _, V = brute_force_q(mdp)
        best = enumerate_best_value(mdp, 0)
        if abs(best - V[0, 0]) > 1e-12:
            return [f"mdp.backward-induction: {V[0, 0]} vs exhaustive {best}"]
    return []


# --------------------------------------------------------------------------
# oracle


def preset_envs(H_values=(1, 3, 5)):
    for H in H_values:
        yield f"backlogged H={H}", inventory_env("backlogged", H, decreasing_offsets(H), 10.0)
        yield f"lost-sales h+U H={H}", inventory_env("lost-sales", H, [float(h) for h in range(1, H + 1)], 2.0 * H)


def check_concavity(tol: float = 1e-8) -> list[str]:
    out = []
    for name, spec in preset_envs():
        sol = compute_optimal_q(spec, check_concavity=False)
        gap = concavity_violation(sol)
        if gap > tol * sol.cost_scale():
            out.append(f"oracle.concavity: {name}: violation {gap:.3g}")
    return out


def check_quadrature(tol: float = 1e-4) -> list[str]:
    spec = inventory_env("backlogged", 3, decreasing_offsets(3), 10.0)
    fine = compute_optimal_q(spec, 1024)
    coarse = compute_optimal_q(spec, 512)
    diff = float(np.max(np.abs(fine.q_star - coarse.q_star)))
    limit = tol * fine.cost_scale()
    return [] if diff <= limit else [f"oracle.quadrature: 512 vs 1024 nodes differ by {diff:.3g} > {limit:.3g}"]


def check_newsvendor() -> list[str]:
    """Single stage, critical ratio 10/12 of U[4.5, 5.5]: S* = 5.333..., cost 0.8333..."""
    spec = inventory_env("backlogged", 1, decreasing_offsets(1), 10.0)
    sol = compute_optimal_q(spec)
    out = []
    if abs(sol.base_stock[0] - 5.35) > 1e-9:
        out.append(f"oracle.newsvendor: base stock {sol.base_stock[0]} != 5.35")
    # cost at the grid point 5.35: 2 E(y-D)+ + 10 E(D-y)+ for D ~ U[4.5, 5.5]
    y = 5.35
    exact = (y - 4.5) ** 2 + 5.0 * (5.5 - y) ** 2
    if abs(sol.expected_cost() - exact) > 1e-4:
        out.append(f"oracle.newsvendor: expected cost {sol.expected_cost():.6g} != {exact:.6g}")
    return out


def check_amortization(seed: int = 3) -> list[str]:
    """Purchase costs shift every policy's cost by the same amount once amortized."""
    rng = np.random.default_rng(seed)
    H = 3
    raw = CostParams(o=2.0, b=10.0, p=10.0, c=(1.0, 1.5, 0.5), salvage=0.25)
    for kind in ("backlogged", "lost-sales"):
        amort = amortize_costs(raw, H, kind)
        demands = rng.uniform(1.0, 3.0, size=H)
        shifts = []
        for _ in range(5):
            path = rng.uniform(0.0, 4.0, size=H)
            with_c = purchase_inclusive_cost(kind, raw, 0.0, path, demands)
            without = purchase_inclusive_cost(kind, amort, 0.0, path, demands)
            shifts.append(with_c - without)
        if np.ptp(shifts) > 1e-9:
            return [f"costs.amortization: {kind}: policy-dependent shift {np.ptp(shifts):.3g}"]
    return []


# --------------------------------------------------------------------------
# harness


def _small_config(**kw) -> ExperimentConfig:
    base = dict(env_kind="backlogged", H=2, K=20, grid_max=10.0, grid_step=0.05,
                agents=parse_agents("fql, hql, aggql(agg_step=1), qlucb"), o=2.0, b=10.0,
                offset_rule="(10 - h) / 2", reps=3, base_seed=42)
    base.update(kw)
    return ExperimentConfig(**base)


def check_pairing() -> list[str]:
    cfg = _small_config()
    results, _ = run_experiment(cfg)
    out = []
    for rep in range(cfg.reps):
        rows = [r for r in results if r.rep == rep]
        if len({(r.seed, r.opt_cost) for r in rows}) != 1:
            out.append(f"harness.pairing: replication {rep} mixes seeds or OPT costs")
        if rows[0].regret != 0.0:
            out.append("harness.pairing: clairvoyant regret against itself is not 0")
    sol = compute_optimal_q(cfg.spec)
    rnd = draw_randomness(cfg.spec, 99, 5)
    agent = ClairvoyantAgent(cfg.spec, 5, sol)
    for k in range(5):
        if run_episode(agent, cfg.spec, rnd[k]) != run_clairvoyant(sol, cfg.spec, rnd[k]):
            out.append("harness.pairing: clairvoyant agent disagrees with the oracle rollout")
            break
    return out


def check_determinism() -> list[str]:
    cfg = _small_config()
    a = results_csv(run_experiment(cfg)[0])
    b = results_csv(run_experiment(cfg.with_overrides(workers=2))[0])
    return [] if a == b else ["harness.determinism: output depends on the worker count"]


def retention_fraction(config: ExperimentConfig, rep_seed: int, solution) -> float:
    """Share of (stage, episode) pairs whose running set holds the grid-nearest base stock."""
    spec, K = config.spec, config.K
    rnd = draw_randomness(spec, rep_seed, K)
    agent = HQL(spec, K, radius_mode="theory")
    target = solution.base_stock_index
    hits = 0
    for k in range(K):
        hits += int(np.sum((agent.lo <= target) & (target <= agent.hi)))
        run_episode(agent, spec, rnd[k], config.x1)
    return hits / (K * spec.H)


def check_retention(reps: int = 50, pairs: float = 0.99, share: float = 0.95) -> list[str]:
    cfg = _small_config(H=3, K=500, agents=parse_agents("hql(radius_mode=theory)"))
    sol = compute_optimal_q(cfg.spec)
    fractions = [retention_fraction(cfg, replication_seed(cfg.base_seed, r), sol) for r in range(reps)]
    good = np.mean(np.array(fractions) >= pairs)
    if good < share:
        return [f"hql.retention: only {good:.0%} of replications keep S* in >= {pairs:.0%} of pairs"]
    return []


def check_table2_cell(reps: int = 300) -> list[str]:
    cfg = _small_config(H=1, K=100, reps=reps, base_seed=0, agents=parse_agents("fql, hql"))
    stats = {s.algorithm: s.cost.mean for s in summarize(run_experiment(cfg)[0])}
    out = []
    if not 79 <= stats["OPT"] <= 95:
        out.append(f"tables.cell: OPT mean {stats['OPT']:.1f} outside [79, 95]")
    if abs(stats["FQL"] / 103.4 - 1) > 0.12:
        out.append(f"tables.cell: FQL mean {stats['FQL']:.1f} not within 12% of 103.4")
    if abs(stats["HQL"] / 125.9 - 1) > 0.25:
        out.append(f"tables.cell: HQL mean {stats['HQL']:.1f} not within 25% of 125.9")
    return out


# --------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class Check:
    name: str
    run: Callable[[], list[str]]
    quick: bool = True


CHECKS = (
    Check("weights.bounds", check_weights),
    Check("weights.tail-sum", check_tail_sums),
    Check("weights.profile", check_weight_profile_matches),
    Check("mdp.shortfall", check_shortfall),
    Check("mdp.backward-induction", check_brute_force),
    Check("oracle.newsvendor", check_newsvendor),
    Check("oracle.concavity", check_concavity),
    Check("oracle.quadrature", check_quadrature),
    Check("costs.amortization", check_amortization),
    Check("harness.pairing", check_pairing),
    Check("harness.determinism", check_determinism, quick=False),
    Check("hql.retention", check_retention, quick=False),
    Check("tables.cell", check_table2_cell, quick=False),
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    failures: tuple
    seconds: float

    @property
    def ok(self) -> bool:
        return not self.failures


def run_checks(quick: bool = False, checks=CHECKS, report: Callable[[CheckResult], None] | None = None):
    results = []
    for check in checks:
        if quick and not check.quick:
            continue
        start = time.perf_counter()
        try:
            failures = tuple(check.run())
        except Exception as exc:  # a crashing check is a failed invariant
            failures = (f"{check.name}: raised {type(exc).__name__}: {exc}",)
        res = CheckResult(check.name, failures, time.perf_counter() - start)
        if report:
            report(res)
        results.append(res)
    return results
