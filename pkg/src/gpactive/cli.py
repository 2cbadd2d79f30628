"""Command-line entry point: ``gpactive {run,replay,oracle,grid}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import experiments, loop, sampling, stopping
from .chemistry import oracles
from .chemistry.external import serve


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        out[key.strip()] = _value(val)
    for name in ("budget", "replications", "output_dir", "refit_every", "snapshot_every"):
        v = getattr(args, name, None)
        if v is not None:
            out[name] = v
    if args.kernels:
        out["kernels"] = args.kernels.split(",")
    if args.criteria:
        out["criteria"] = args.criteria.split(",")
    return out


def cmd_run(args) -> int:
    config = experiments.ExperimentConfig.from_json(args.config) if args.config else experiments.ExperimentConfig()
    config = config.with_overrides(_overrides(args))
    if not config.output_dir:
        raise SystemExit("an output directory is required (config output_dir or --output-dir)")
    report = experiments.run_experiment(config)
    for row in report.aggregate_stopping():
        print(f"{row['kernel']:9s} {row['criterion']:22s} t*={row['t_star_mean']:7.2f} "
              f"nMAE={row['normalized_mae_mean']:.3e} V={row['V_mean']:.3e}")
    final = [r for r in report.aggregate_metrics() if r[2] == "normalized_mae" and r[1] == config.budget]
    for kernel, t, _, n, mean, std in final:
        print(f"{kernel}: normalized MAE at t={t}: {mean:.3e} +/- {std:.1e} (n={n})")
    print(f"report written to {config.output_dir}")
    return 1 if report.partial else 0


def cmd_replay(args) -> int:
    criteria = args.criteria.split(",") if args.criteria else [c.name for c in stopping.DEFAULT_CRITERIA]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["trace", "criterion", "t_star", "budget_capped", "V", "normalized_mae"])
    for path in args.traces:
        trace = loop.RunTrace.from_jsonl(path)
        try:
            result = experiments.replay_stopping(trace, criteria)
        except ValueError as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            return 2
        for name, row in result.items():
            w.writerow([path, name, row["t_star"], row["budget_capped"], row["V"], row.get("normalized_mae")])
    return 0


def _read_points(args, d: int) -> np.ndarray:
    pts = []
    for p in args.point or []:
        pts.append([float(v) for v in p.split(",")])
    if args.points_csv:
        pts.extend(sampling.read_grid_csv(args.points_csv).points.tolist())
    arr = np.asarray(pts, dtype=float).reshape(-1, d)
    return arr


def cmd_oracle(args) -> int:
    bounds = json.loads(args.bounds) if args.bounds else None
    oracle = oracles.make_oracle(args.name, bounds)
    if args.serve:
        serve(oracle)
        return 0
    d = oracle.bounds.dim
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow([f"x{j}" for j in range(d)] + ["y"])
    for x in _read_points(args, d):
        w.writerow([repr(float(v)) for v in x] + [repr(float(oracle(x)))])
    return 0


def cmd_grid(args) -> int:
    if args.kind == "regular":
        counts = args.counts or [2]
        grid = sampling.regular_grid(args.dim or len(counts), counts if len(counts) > 1 else counts[0])
    else:
        if not args.dim or not args.m:
            raise SystemExit("lhs grids need --dim and -m")
        grid = sampling.lhs(args.dim, args.m, args.seed, centered=args.centered)
    if args.output:
        sampling.write_grid_csv(grid, args.output)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(grid.names)
        w.writerows([[repr(float(v)) for v in row] for row in grid.points])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpactive", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a JSON config")
    p.add_argument("config", nargs="?", help="experiment config (JSON)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field; dotted keys reach nested fields, values parse as JSON")
    p.add_argument("--budget", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--refit-every", type=int)
    p.add_argument("--snapshot-every", type=int)
    p.add_argument("--kernels", help="comma-separated kernel families")
    p.add_argument("--criteria", help="comma-separated stopping-criterion labels")
    p.add_argument("-o", "--output-dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="evaluate stopping criteria on stored JSON-lines traces")
    p.add_argument("traces", nargs="+")
    p.add_argument("--criteria", help="comma-separated labels (default: all standard criteria)")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("oracle", help="evaluate a built-in oracle, or serve it over the line protocol")
    p.add_argument("name", choices=oracles.BUILTIN)
    p.add_argument("--point", action="append", help="comma-separated normalized coordinates")
    p.add_argument("--points-csv", help="CSV of normalized points with a header row")
    p.add_argument("--bounds", help='JSON {"lo": [...], "hi": [...]} in physical units')
    p.add_argument("--serve", action="store_true", help="answer JSON-lines requests on stdin")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("grid", help="write a candidate grid as CSV")
    p.add_argument("--kind", choices=("regular", "lhs"), default="regular")
    p.add_argument("--dim", type=int)
    p.add_argument("--counts", type=int, nargs="+")
    p.add_argument("-m", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--centered", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
