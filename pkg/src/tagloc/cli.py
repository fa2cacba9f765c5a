"""Command-line interface.

    tagloc simulate   --scenario path1 --out runs/p1
    tagloc localize   --scenario path1 --streams runs/p1 --out runs/p1/results
    tagloc build-map  --session session.yaml --out map.yaml
    tagloc sweep      --scenario ablation --seeds 50 --out runs/sweep

Exit status: 0 success, 2 parse error, 3 map optimisation did not converge,
4 missing, stale or inconsistent inputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ScenarioError, load_scenario
from .harness import check_methods, run_methods, sweep
from .localizer import METHODS
from .map_builder import build_graph, optimize
from .metrics import DEFAULT_SUCCESS_THRESHOLD, proportional_reduction
from .sim import synthesize_mapping_session, synthesize_stream

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NOT_CONVERGED = 3
EXIT_INVALID = 4

log = logging.getLogger("tagloc")

SUMMARY_HEADER = ["method", "rmse_m", "mean_m", "std_m", "success_rate", "epochs", "estimated_epochs"]
REDUCTION_HEADER = ["method", "baseline", "rmse_pct", "mean_pct", "std_pct"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2 anyway; keep the message format
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _methods_arg(text: str) -> list[str]:
    names = [m.strip() for m in text.split(",") if m.strip()]
    try:
        return check_methods(names)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _add_scenario_args(p) -> None:
    p.add_argument("--scenario", required=True, help="scenario YAML file or bundled name")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a scenario field, e.g. filter.hard_threshold=1.5",
    )


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tagloc", description="Tag-map visual localisation experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write truth, odometry and measurement streams")
    _add_scenario_args(p)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--session", type=Path, default=None, help="also write a mapping session here")

    p = sub.add_parser("localize", help="run methods over streams and summarise errors")
    _add_scenario_args(p)
    p.add_argument("--streams", type=Path, default=None, help="directory from 'simulate' (default: simulate now)")
    p.add_argument("--map", type=Path, default=None, help="tag-map YAML (default: the scenario layout)")
    p.add_argument("--methods", type=_methods_arg, default=list(METHODS), help="comma-separated")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--success-threshold", type=float, default=DEFAULT_SUCCESS_THRESHOLD)

    p = sub.add_parser("build-map", help="optimise a tag map from a mapping session")
    p.add_argument("--session", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-12)

    p = sub.add_parser("sweep", help="Monte-Carlo over seeds")
    _add_scenario_args(p)
    p.add_argument("--seeds", type=int, default=20, help="number of seeds, starting at --seed (default 0)")
    p.add_argument("--methods", type=_methods_arg, default=list(METHODS))
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--success-threshold", type=float, default=DEFAULT_SUCCESS_THRESHOLD)
    return ap


# -- commands -----------------------------------------------------------------


def _scenario(args):
    return load_scenario(args.scenario, args.overrides, args.seed)


def cmd_simulate(args) -> int:
    s = _scenario(args)
    stream = synthesize_stream(s)
    for path in io.write_stream(stream, args.out):
        log.info("wrote %s", path)
    io.write_tag_map(s.tag_layout, args.out / "layout.yaml")
    if args.session is not None:
        io.write_session(synthesize_mapping_session(s), args.session)
    return EXIT_OK


def _summary_rows(results):
    rows = []
    for m, r in results.items():
        n = len(r.record.truth)
        if r.report is None:
            rows.append([m, None, None, None, 0.0, n, 0])
        else:
            rp = r.report
            rows.append([m, rp.rmse, rp.mean, rp.std, rp.success_rate, n, rp.n_present])
    return rows


def _reduction_rows(results):
    baseline = "TagSLAM" if "TagSLAM" in results else next(iter(results))
    base = results[baseline].report
    rows = []
    for m, r in results.items():
        if m == baseline:
            continue
        if base is None or r.report is None:
            rows.append([m, baseline, None, None, None])
            continue
        red = proportional_reduction(base, r.report)
        rows.append([m, baseline, red.rmse, red.mean, red.std])
    return rows


def cmd_localize(args) -> int:
    s = _scenario(args)
    stream = io.read_stream(args.streams) if args.streams else synthesize_stream(s)
    tag_map = io.read_tag_map(args.map) if args.map else None
    results = run_methods(s, args.methods, stream, tag_map, args.jobs, args.success_threshold)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    for m, r in results.items():
        err = r.report.series if r.report is not None else np.full(len(r.record.truth), np.nan)
        io.write_trajectory(out / f"trajectory_{m}.csv", r.record.estimates, err)
    io.write_table(out / "summary.csv", SUMMARY_HEADER, _summary_rows(results))
    io.write_table(out / "reduction.csv", REDUCTION_HEADER, _reduction_rows(results))
    meta = {
        "scenario": s.name,
        "seed": s.seed,
        "epochs": len(stream.truth),
        "success_threshold_m": args.success_threshold,
        "diagnostics": {m: dict(sorted(r.record.diagnostics.items())) for m, r in results.items()},
    }
    (out / "summary.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for row in _summary_rows(results):
        log.info("%-11s rmse=%s mean=%s std=%s success=%s", *row[:5])
    return EXIT_OK


def cmd_build_map(args) -> int:
    session = io.read_session(args.session)
    graph = build_graph(session)
    tag_map = optimize(graph, args.max_iters, args.tol)
    tag_map.source["session"] = str(args.session)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    io.write_tag_map(tag_map, args.out)
    if not tag_map.source["converged"]:
        log.error("map optimisation did not converge in %d iterations", args.max_iters)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_sweep(args) -> int:
    s = _scenario(args)
    start = s.seed if args.seed is None else args.seed
    seeds = list(range(start, start + args.seeds))
    runs = sweep(s, args.methods, seeds, args.jobs, args.success_threshold)
    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    per_method: dict[str, list[float]] = {m: [] for m in args.methods}
    for seed, res in zip(seeds, runs):
        for m in args.methods:
            rp = res[m].report
            if rp is None:
                rows.append([seed, m, None, None, None, 0.0])
                continue
            rows.append([seed, m, rp.rmse, rp.mean, rp.std, rp.success_rate])
            per_method[m].append(rp.rmse)
    io.write_table(args.out / "sweep.csv", ["seed", "method", "rmse_m", "mean_m", "std_m", "success_rate"], rows)
    med = [
        [m, float(np.median(v)) if v else None, float(np.mean(v)) if v else None, len(v)]
        for m, v in per_method.items()
    ]
    io.write_table(args.out / "sweep_summary.csv", ["method", "median_rmse_m", "mean_rmse_m", "seeds"], med)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "localize": cmd_localize,
    "build-map": cmd_build_map,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as e:
        print(f"tagloc: scenario error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except io.InvalidInput as e:
        print(f"tagloc: invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
