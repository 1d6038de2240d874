"""Command-line entry point: ``osfrl run | table | verify | oracle``.

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure,
3 failed invariant.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, ValidationError, parse_config, parse_config_text
from .harness import run_experiment, summarize, write_outputs
from .oracle import compute_optimal_q
from .verify import run_checks

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_INVARIANT = 0, 1, 2, 3
TABLE_IDS = (2, 3, 4, 5)
TABLE_H = (1, 3, 5)
TABLE_K = (100, 500, 2000)


def load_preset(table_id: int) -> ExperimentConfig:
    text = resources.files("osfrl").joinpath("presets", f"table{table_id}.cfg").read_text()
    return parse_config_text(text, source=f"table{table_id}.cfg")


def _out_dir(config: ExperimentConfig, flag: str | None) -> Path:
    return Path(flag or os.environ.get("OSFRL_OUT") or config.out_dir)


def _print_summary(stats, stream=sys.stdout) -> None:
    stream.write(f"{'algorithm':<8} {'H':>2} {'K':>5} {'mean cost':>11} {'sd':>8} {'mean regret':>12} {'sd':>8}\n")
    for s in stats:
        stream.write(f"{s.algorithm:<8} {s.H:>2} {s.K:>5} {s.cost.mean:>11.1f} {s.cost.sd:>8.1f} "
                     f"{s.regret.mean:>12.1f} {s.regret.sd:>8.1f}\n")


def cmd_run(args) -> int:
    config = parse_config(args.config).with_overrides(base_seed=args.seed, reps=args.reps, workers=args.workers)
    out = _out_dir(config, args.out)
    results, stats = run_experiment(config)
    paths = write_outputs(config, results, stats, out)
    _print_summary(stats)
    print(f"wrote {', '.join(str(p) for p in paths)}")
    return EXIT_OK


def format_table(stats, algorithms) -> str:
    """Cells as rows, one mean/SD column pair per algorithm."""
    cells = {(s.H, s.K, s.algorithm): s for s in stats}
    head = f"{'H':>2} {'K':>5} " + " ".join(f"{a + ' mean':>14} {'SD':>7}" for a in algorithms)
    lines = [head]
    for H in sorted({s.H for s in stats}):
        for K in sorted({s.K for s in stats}):
            row = f"{H:>2} {K:>5} "
            row += " ".join(f"{cells[H, K, a].cost.mean:>14.1f} {cells[H, K, a].cost.sd:>7.1f}" for a in algorithms)
            lines.append(row)
    return "\n".join(lines) + "\n"


def cmd_table(args) -> int:
    preset = load_preset(args.id).with_overrides(base_seed=args.seed, reps=args.reps, workers=args.workers)
    out = _out_dir(preset, args.out)
    all_results, all_stats, cells = [], [], []
    for H in TABLE_H:
        for K in TABLE_K:
            config = preset.with_overrides(H=H, K=K)
            results, stats = run_experiment(config)
            all_results += results
            all_stats += stats
            cells.append({"H": H, "K": K, "config_digest": config.digest()})
            print(f"table {args.id}: H={H} K={K} done", file=sys.stderr)
    write_outputs(preset, all_results, summarize(all_results), out, stem=f"table{args.id}")
    algorithms = ["OPT"] + [a.label for a in preset.agents]
    text = format_table(all_stats, algorithms)
    (out / f"table{args.id}.txt").write_text(text)
    manifest_path = out / f"table{args.id}_manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["cells"] = cells
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    def report(res):
        status = "PASS" if res.ok else "FAIL"
        print(f"{status} {res.name} ({res.seconds:.1f}s)")
        for msg in res.failures:
            print(f"    {msg}")
        sys.stdout.flush()

    results = run_checks(quick=args.quick, report=report)
    failed = [r.name for r in results if not r.ok]
    if failed:
        print(f"{len(failed)} invariant(s) failed: {', '.join(failed)}")
        return EXIT_INVARIANT
    print(f"all {len(results)} invariant checks passed")
    return EXIT_OK


def cmd_oracle(args) -> int:
    config = parse_config(args.config)
    solution = compute_optimal_q(config.spec, quadrature_nodes=args.nodes)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["h", "y", "q_star"])
    levels = config.spec.grid.levels
    for h in range(1, config.H + 1):
        for y, q in zip(levels, solution.q_star[h - 1]):
            writer.writerow([h, repr(float(y)), repr(float(q))])
    for h, s in enumerate(solution.base_stock, start=1):
        print(f"# S*_{h} = {s:.10g}")
    print(f"# expected optimal cost from x1={config.x1:g}: {solution.expected_cost(config.x1):.10g}")
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osfrl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config")
    run.add_argument("--out")
    run.add_argument("--seed", type=int)
    run.add_argument("--reps", type=int)
    run.add_argument("--workers", type=int)
    run.set_defaults(func=cmd_run)

    table = sub.add_parser("table", help="reproduce a cost table over H in {1,3,5} and K in {100,500,2000}")
    table.add_argument("id", type=int, choices=TABLE_IDS)
    table.add_argument("--reps", type=int)
    table.add_argument("--out")
    table.add_argument("--seed", type=int)
    table.add_argument("--workers", type=int)
    table.set_defaults(func=cmd_table)

    verify = sub.add_parser("verify", help="run the invariant checks")
    verify.add_argument("--quick", action="store_true", help="skip simulation-heavy checks")
    verify.set_defaults(func=cmd_verify)

    oracle = sub.add_parser("oracle", help="print optimal base-stock levels and Q* curves")
    oracle.add_argument("config")
    oracle.add_argument("--nodes", type=int, default=1024)
    oracle.add_argument("--out")
    oracle.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
