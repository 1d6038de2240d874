"""Replicated experiments with common random numbers.

Replication ``r`` draws its whole ``(K, H)`` randomness block from a stream
keyed by ``(base_seed, r)``; the clairvoyant policy and every learner play
that same block, so regret is a paired difference.  Results are assembled in
replication order, which makes the output independent of the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .agents import Agent, make_agent
from .config import ExperimentConfig, emit_config
from .envs import EnvSpec
from .oracle import OptimalSolution, compute_optimal_q, run_clairvoyant
from .streams import draw_randomness, replication_seed

OPT_LABEL = "OPT"


@dataclass(frozen=True)
class RunResult:
    algorithm: str
    H: int
    K: int
    rep: int
    seed: int
    total_cost: float
    opt_cost: float
    config_digest: str = ""
    costs: np.ndarray | None = field(default=None, repr=False, compare=False)
    opt_costs: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def regret(self) -> float:
        return self.total_cost - self.opt_cost


@dataclass(frozen=True)
class Moments:
    mean: float
    sd: float
    n: int
    degenerate: bool = False

    @property
    def se(self) -> float:
        return self.sd / math.sqrt(self.n)


@dataclass(frozen=True)
class SummaryStats:
    algorithm: str
    H: int
    K: int
    cost: Moments
    regret: Moments


def moments(values) -> Moments:
    """Sample mean and SD (divisor ``n - 1``); one value gives SD 0, flagged."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("cannot summarize an empty sample")
    if x.size == 1:
        return Moments(float(x[0]), 0.0, 1, degenerate=True)
    return Moments(float(x.mean()), float(x.std(ddof=1)), int(x.size))


def summarize(results: list[RunResult]) -> list[SummaryStats]:
    """Per-algorithm summaries, in order of first appearance."""
    if not results:
        raise ValueError("cannot summarize an empty result list")
    groups: dict[tuple, list[RunResult]] = {}
    for r in results:
        groups.setdefault((r.algorithm, r.H, r.K), []).append(r)
    return [
        SummaryStats(alg, H, K, moments([r.total_cost for r in rs]), moments([r.regret for r in rs]))
        for (alg, H, K), rs in groups.items()
    ]


def regret_curve(results: list[RunResult]) -> np.ndarray:
    """Cumulative regret after each episode, averaged over replications."""
    traces = []
    for r in results:
        if r.costs is None or r.opt_costs is None:
            raise ValueError(f"{r.algorithm} replication {r.rep} has no per-episode trace")
        traces.append(np.cumsum(r.costs - r.opt_costs))
    return np.mean(traces, axis=0)


# --------------------------------------------------------------------------
# execution


def run_episode(agent: Agent, spec: EnvSpec, randomness, x1: float = 0.0) -> float:
    """Play one episode and return its true cost; the agent learns in place."""
    agent.start_episode()
    x = x1
    total = 0.0
    for h in range(1, spec.H + 1):
        y = agent.select(h, x)
        outcome = spec.step(h, x, y, randomness[h - 1], feedback=agent.feedback)
        agent.observe(h, x, y, outcome)
        total += outcome.cost
        x = outcome.next_state
    agent.end_episode()
    return total


def run_agent(agent: Agent, spec: EnvSpec, randomness: np.ndarray, x1: float = 0.0) -> np.ndarray:
    return np.array([run_episode(agent, spec, randomness[k], x1) for k in range(len(randomness))])


def run_replication(config: ExperimentConfig, solution: OptimalSolution, rep: int,
                    keep_traces: bool = False) -> list[RunResult]:
    spec, K = config.spec, config.K
    seed = replication_seed(config.base_seed, rep)
    randomness = draw_randomness(spec, seed, K)
    opt = np.array([run_clairvoyant(solution, spec, randomness[k], config.x1) for k in range(K)])
    opt_total = float(opt.sum())
    digest = config.digest()

    def result(label, costs):
        return RunResult(label, spec.H, K, rep, seed, float(costs.sum()), opt_total, digest,
                         costs if keep_traces else None, opt if keep_traces else None)

    out = [result(OPT_LABEL, opt)]
    for a in config.agents:
        agent = make_agent(a.kind, spec, K, **a.kwargs())
        out.append(result(a.label, run_agent(agent, spec, randomness, config.x1)))
    return out


def _replication_job(args):
    config, solution, rep, keep_traces = args
    return run_replication(config, solution, rep, keep_traces)


def run_experiment(config: ExperimentConfig, solution: OptimalSolution | None = None,
                   keep_traces: bool = False) -> tuple[list[RunResult], list[SummaryStats]]:
    """Run every replication; results are ordered by replication, then agent."""
    solution = solution or compute_optimal_q(config.spec)
    jobs = [(config, solution, rep, keep_traces) for rep in range(config.reps)]
    if config.workers > 1 and config.reps > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_replication_job, jobs))
    else:
        chunks = [_replication_job(job) for job in jobs]
    results = [r for chunk in chunks for r in chunk]
    return results, summarize(results)


# --------------------------------------------------------------------------
# output

RESULT_COLUMNS = ["algorithm", "H", "K", "rep", "seed", "total_cost", "opt_cost", "regret"]
SUMMARY_COLUMNS = ["algorithm", "H", "K", "mean_cost", "sd_cost", "mean_regret", "sd_regret"]


def _num(x: float) -> str:
    return repr(float(x))


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def results_csv(results: list[RunResult]) -> str:
    return _csv_text(RESULT_COLUMNS, (
        [r.algorithm, r.H, r.K, r.rep, r.seed, _num(r.total_cost), _num(r.opt_cost), _num(r.regret)]
        for r in results
    ))


def summary_csv(stats: list[SummaryStats]) -> str:
    return _csv_text(SUMMARY_COLUMNS, (
        [s.algorithm, s.H, s.K, _num(s.cost.mean), _num(s.cost.sd), _num(s.regret.mean), _num(s.regret.sd)]
        for s in stats
    ))


def write_outputs(config: ExperimentConfig, results: list[RunResult], stats: list[SummaryStats],
                  out_dir, stem: str = "run") -> list[Path]:
    """Write results, summary and a manifest that is enough to rerun the experiment."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        f"{stem}_results.csv": results_csv(results),
        f"{stem}_summary.csv": summary_csv(stats),
    }
    paths = []
    for name, text in files.items():
        path = out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        paths.append(path)
    manifest = {
        "artifact_version": __version__,
        "base_seed": config.base_seed,
        "config_digest": config.digest(),
        "config": emit_config(config),
        "files": sorted(files),
    }
    path = out / f"{stem}_manifest.json"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    paths.append(path)
    return paths
