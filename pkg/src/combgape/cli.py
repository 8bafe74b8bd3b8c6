"""Command-line entry point: ``combgape run|analyze|audit|oracle``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import hardness_profile, theorem2_bound
from .harness import (
    ConfigError,
    ExperimentConfig,
    emit_results,
    load_config,
    make_instance,
    results_csv,
    run_experiment,
    trials_csv,
)
from .oracles import CostMatrixError, KnapsackSpec, TransportSpec, load_cost_matrix, solve_transport, solve_unbounded_knapsack


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="combgape", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "run a batch experiment"), ("audit", "run with event and per-pull audits")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="experiment config (JSON)")
        p.add_argument("-o", "--output", help="results file (default: config output_path or <config>_results.csv)")
        p.add_argument("--format", choices=["csv", "json"], help="results format (default from the output suffix)")
        p.add_argument("--workers", type=int, help="worker processes (default: COMBGAPE_WORKERS or CPU count)")
        p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")

    p = sub.add_parser("analyze", help="print the hardness profile of the config's instance")
    p.add_argument("config")
    p.add_argument("--c", type=float, default=1.0, help="constant C for the stopping-time bound (default 1)")
    p.add_argument("--figure", help="also write a hardness figure to this PNG path")

    p = sub.add_parser("oracle", help="solve one offline problem")
    p.add_argument("problem", choices=["knapsack", "transport"])
    p.add_argument("spec", help="knapsack: JSON {weights, values, capacity}; transport: cost-matrix CSV")
    p.add_argument("--supply", help="comma-separated supplies (transport; default uniform)")
    p.add_argument("--demand", help="comma-separated demands (transport; default uniform)")
    return ap


def _output_path(args, config: ExperimentConfig) -> Path:
    if args.output:
        return Path(args.output)
    if config.output_path:
        return Path(config.output_path)
    return Path(args.config).with_name(Path(args.config).stem + "_results.csv")


def _cmd_run(args, audit: bool) -> int:
    config = load_config(args.config)
    if audit:
        config = ExperimentConfig(**{**config.__dict__, "audit": type(config.audit)(True, True)})
    out = _output_path(args, config)
    fmt = args.format or ("json" if out.suffix.lower() == ".json" else "csv")
    table = run_experiment(config, workers=args.workers)
    emit_results(table, fmt, out)
    out.with_name(out.stem + "_trials.csv").write_text(trials_csv(table), encoding="utf-8")
    if not args.no_figures:
        from .plots import figure_path, plot_sample_complexity

        plot_sample_complexity(table, figure_path(out, "tau"))
    sys.stdout.write(results_csv(table))
    if table.metadata.get("unreliable_rows"):
        print(f"warning: >10% budget-exhausted trials in {table.metadata['unreliable_rows']}", file=sys.stderr)
    if audit:
        for name, summary in table.metadata.get("audits", {}).items():
            print(f"audit {name}: " + ", ".join(f"{k}={v}" for k, v in summary.items()))
    print(f"wrote {out}", file=sys.stderr)
    return 0


def _cmd_analyze(args) -> int:
    config = load_config(args.config)
    gen = make_instance(config, 0)
    prof = hardness_profile(gen.actions, gen.mu)
    K = gen.actions.K
    print(f"K = {K}, d = {gen.actions.d}, best action = {prof.a_star}")
    print("arm  delta_s  V_s")
    for s in range(prof.d):
        print(f"{s:3d}  {prof.delta_s[s]:.6g}  {prof.v_s[s]:.6g}")
    print(f"A = {prof.amplification:.6g}")
    print(f"lb_sum = {prof.lb_sum:.6g}")
    print(f"thm2_sum = {prof.thm2_sum:.6g}")
    print(f"theorem2_bound(C={args.c:g}) = {theorem2_bound(prof, config.R, K, config.delta, args.c):.6g}")
    if args.figure:
        from .plots import plot_hardness

        plot_hardness(prof, args.figure)
    return 0


def _floats(text: str | None, n: int) -> np.ndarray:
    if text is None:
        return np.full(n, 1.0 / n)
    vals = np.array([float(x) for x in text.split(",")])
    if vals.size != n:
        raise ValueError(f"expected {n} values, got {vals.size}")
    return vals


def _cmd_oracle(args) -> int:
    if args.problem == "knapsack":
        try:
            doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
            spec = KnapsackSpec(tuple(doc["weights"]), tuple(doc["values"]), doc["capacity"])
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{args.spec}: malformed knapsack spec: {exc}") from exc
        counts = solve_unbounded_knapsack(spec)
        value = float(np.dot(counts, spec.values))
        print(json.dumps({"counts": counts.tolist(), "value": value}))
        return 0
    cost = load_cost_matrix(args.spec)
    m, n = cost.shape
    spec = TransportSpec(cost, _floats(args.supply, m), _floats(args.demand, n))
    plan = solve_transport(spec)
    for row in plan:
        print(",".join(f"{x:.12g}" for x in row))
    print(f"# cost = {float((plan * cost).sum()):.12g}", file=sys.stderr)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args, audit=False)
        if args.command == "audit":
            return _cmd_run(args, audit=True)
        if args.command == "analyze":
            return _cmd_analyze(args)
        return _cmd_oracle(args)
    except (ConfigError, CostMatrixError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
