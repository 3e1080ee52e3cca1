"""Command-line entry point.

Subcommands: run, compare, convergence-scan, fit, plateau. Failures print a
machine-readable JSON error object to stderr and exit nonzero.
"""

import argparse
import json
import sys
from pathlib import Path

from . import analytics, runner, traces

__all__ = ["main", "build_parser"]


def build_parser():
    ap = argparse.ArgumentParser(
        prog="openchain",
        description="Matrix-product simulations of dissipative spin chains")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an engine from a JSON config (or manifest)")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--output-dir", default=None, help="override output_dir")
    p_run.add_argument("--threads", type=int, default=None,
                       help="cap trajectory parallelism (results are unchanged)")

    p_cmp = sub.add_parser("compare", help="max-abs-deviation report for two trace CSVs")
    p_cmp.add_argument("--a", required=True)
    p_cmp.add_argument("--b", required=True)
    p_cmp.add_argument("--output", default=None, help="write the report JSON here")

    p_scan = sub.add_parser("convergence-scan",
                            help="repeat a run along a chi or dt ladder")
    p_scan.add_argument("--config", required=True)
    p_scan.add_argument("--axis", required=True, choices=("chi", "dt"))
    p_scan.add_argument("--values", required=True,
                        help="comma-separated ladder, e.g. 8,16,32")
    p_scan.add_argument("--threshold", type=float, default=1e-3)

    p_fit = sub.add_parser("fit", help="growth-law fit of a trace column")
    p_fit.add_argument("--trace", required=True)
    p_fit.add_argument("--kind", choices=("power", "log"), default="power")
    p_fit.add_argument("--column", default="S_bond_avg")
    p_fit.add_argument("--window", required=True, help="t_min,t_max")
    p_fit.add_argument("--output", default=None,
                       help="fit JSON path (default: next to the trace)")

    p_pl = sub.add_parser("plateau",
                          help="closed-form trajectory-entanglement plateau values")
    p_pl.add_argument("--gamma", required=True, help="comma-separated rates")
    p_pl.add_argument("--j", type=float, default=1.0)
    return ap


def _cmd_run(args):
    cfg = runner.load_config(args.config)
    overrides = {}
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    if args.threads is not None:
        overrides["threads"] = args.threads
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    res = runner.run(cfg)
    return {"output_dir": res.output_dir, "trace_csv": res.trace_csv,
            "manifest": res.manifest, "ensemble_json": res.ensemble_json,
            "summary": res.extras}


def _cmd_compare(args):
    report = runner.compare_runs(args.a, args.b)
    if args.output:
        traces.write_json(args.output, report)
    return report


def _cmd_scan(args):
    cfg = runner.load_config(args.config)
    values = [v for v in args.values.split(",") if v]
    return runner.convergence_scan(cfg, args.axis, values, threshold=args.threshold)


def _cmd_fit(args):
    t_min, t_max = (float(x) for x in args.window.split(","))
    _, cols = traces.read_csv(args.trace)
    if args.column not in cols:
        raise runner.ConfigError([f"column {args.column!r} not in {args.trace}"])
    fit_fn = analytics.fit_power_law if args.kind == "power" else analytics.fit_log_growth
    res = fit_fn(cols["t"], cols[args.column], (t_min, t_max))
    out = res.to_dict()
    out["column"] = args.column
    out["trace"] = str(args.trace)
    path = args.output or str(Path(args.trace).with_name("fit.json"))
    traces.write_json(path, out)
    out["fit_json"] = path
    return out


def _cmd_plateau(args):
    rows = []
    for g in (float(x) for x in args.gamma.split(",") if x):
        terms = analytics.plateau_terms(g, args.j)
        rows.append({"gamma": g, "j": args.j, "two_site": terms.two_site,
                     "four_spin": terms.four_spin, "plateau": terms.total})
    return {"plateaus": rows}


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "compare": _cmd_compare,
                "convergence-scan": _cmd_scan, "fit": _cmd_fit,
                "plateau": _cmd_plateau}
    try:
        result = handlers[args.command](args)
    except runner.ConfigError as exc:
        json.dump({"error": "invalid-config", "problems": exc.problems},
                  sys.stderr, indent=2)
        sys.stderr.write("\n")
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stderr, indent=2)
        sys.stderr.write("\n")
        return 1
    json.dump(result, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
