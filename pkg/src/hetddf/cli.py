"""
Command-line entry point.

Subcommands ``run``, ``oracle``, ``compare``, ``nees``, ``dump-graph`` and
``plot``. ``--config`` takes a scenario JSON file or a preset name
(``default``, ``common2``, ``chain3``, ``single``); the default preset is used
when it is omitted.
``compare`` and ``nees`` exit with status 1 when their check fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import HetDDFError
from .harness import Simulation, centralized_oracle, compare, monte_carlo, run_scenario
from .metrics import nees_report
from .scenario import PRESETS, Scenario, load_scenario


def _scenario(args) -> Scenario:
    name = args.config or "default"
    sc = PRESETS[name](args.seed or 0) if name in PRESETS else load_scenario(name)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    sc.validate()
    return sc


def _out(args) -> Path | None:
    if args.out is None:
        return None
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _print(obj) -> None:
    print(json.dumps(obj, indent=1))


def cmd_run(args) -> int:
    report = run_scenario(_scenario(args), out=_out(args))
    _print({"records": len(report.records), "horizon": report.horizon, "out": args.out})
    return 0


def cmd_oracle(args) -> int:
    report = centralized_oracle(_scenario(args), out=_out(args))
    _print({"records": len(report.records), "horizon": report.horizon, "out": args.out})
    return 0


def cmd_compare(args) -> int:
    result = compare(_scenario(args), tolerance=args.tolerance, out=_out(args))
    summary = result.to_dict()
    _print(summary)
    out = _out(args)
    if out is not None:
        (out / "compare.json").write_text(json.dumps(summary, indent=1))
    return 0 if result.passed else 1


def cmd_nees(args) -> int:
    sc = _scenario(args)
    summary = nees_report(monte_carlo(sc, args.mc_runs, sc.seed))
    data = summary.to_dict()
    _print(data)
    out = _out(args)
    if out is not None:
        (out / "nees.json").write_text(json.dumps(data, indent=1))
        with open(out / "nees_steps.csv", "w") as fh:
            keys = sorted(summary.step_nees)
            fh.write("step," + ",".join(f"nees_r{r}_t{t},rmse_r{r}_t{t}" for r, t in keys) + "\n")
            for k in range(len(summary.step_nees[keys[0]])):
                row = [f"{summary.step_nees[key][k]:.10g},{summary.rmse[key][k]:.10g}" for key in keys]
                fh.write(f"{k}," + ",".join(row) + "\n")
    return 0 if summary.all_passed else 1


def cmd_dump_graph(args) -> int:
    sc = _scenario(args)
    sim = Simulation(sc, record=False)
    sim.run(until=args.step)
    graphs = {}
    for rid, ag in sim.agents.items():
        if args.robot is not None and rid != args.robot:
            continue
        graphs[str(rid)] = {
            "step": ag.current_step,
            "slam": ag.slam.graph.to_dict(),
            "tracking": ag.tracking.to_dict(),
            "channels": {str(j): cf.to_dict() for j, cf in ag.neighbor_cfs.items()},
        }
    text = json.dumps({"schema": "hetddf.dump/1", "robots": graphs})
    out = _out(args)
    if out is None:
        print(text)
    else:
        (out / "graphs.json").write_text(text)
        _print({"out": str(out / "graphs.json"), "robots": sorted(graphs)})
    return 0


def cmd_plot(args) -> int:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("plot needs matplotlib (pip install matplotlib)", file=sys.stderr)
        return 2
    sc = _scenario(args)
    out = _out(args) or Path(".")
    runs = max(args.mc_runs, 1)
    reports = monte_carlo(sc, runs, sc.seed)
    fig, axes = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    if runs >= 2:
        summary = nees_report(reports)
        series, rmse, bounds = summary.step_nees, summary.rmse, summary.bounds
    else:
        series = reports[0].nees_array()
        rmse = {key: np.abs(e) for key, e in reports[0].error_array().items()}
        bounds = None
    for (r, t), v in sorted(series.items()):
        axes[0].plot(v, label=f"robot {r} target {t}")
        axes[1].plot(rmse[(r, t)], label=f"robot {r} target {t}")
    if bounds is not None:
        for b in bounds:
            axes[0].axhline(b, color="k", linestyle="--", linewidth=0.8)
    axes[0].set_ylabel(f"NEES ({runs} runs)")
    axes[1].set_ylabel("position RMSE")
    axes[1].set_xlabel("step")
    axes[0].legend(fontsize=7, ncol=2)
    fig.tight_layout()
    path = out / "metrics.svg"
    fig.savefig(path)
    _print({"out": str(path)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hetddf", description="Heterogeneous decentralized fusion simulator")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"scenario JSON or preset ({', '.join(PRESETS)})")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--mc-runs", type=int, default=50, help="Monte-Carlo runs (nees, plot)")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="decentralized run, writes report").set_defaults(fn=cmd_run)
    sub.add_parser("oracle", parents=[common], help="centralized benchmark run").set_defaults(fn=cmd_oracle)
    c = sub.add_parser("compare", parents=[common], help="decentralized vs centralized exactness check")
    c.add_argument("--tolerance", type=float, default=1e-9)
    c.set_defaults(fn=cmd_compare)
    sub.add_parser("nees", parents=[common], help="Monte-Carlo NEES consistency check").set_defaults(fn=cmd_nees)
    d = sub.add_parser("dump-graph", parents=[common], help="dump factor graphs and channel filters as JSON")
    d.add_argument("--step", type=int, default=None, help="stop after this step (default: horizon)")
    d.add_argument("--robot", type=int, default=None)
    d.set_defaults(fn=cmd_dump_graph)
    pl = sub.add_parser("plot", parents=[common], help="NEES and RMSE curves to SVG")
    pl.set_defaults(fn=cmd_plot, mc_runs=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except HetDDFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
