"""Command-line entry point: run, compare and validate scenarios."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from .harness import json_safe, run_batch, write_outputs
from .scenario import ScenarioError, bundled_path, load_scenario, normalize_method

LOG_ENV = "GVONAV_LOG_LEVEL"

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2

log = logging.getLogger("gvonav")


def _resolve(path: str) -> Path:
    p = Path(path)
    if not p.exists() and not p.suffix:
        # allow bundled names such as "scene1_analog"
        b = bundled_path(path)
        if b.exists():
            return b
    return p


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "-"
    return f"{x:.2f}"


def _cmd_validate(args) -> int:
    sc = load_scenario(_resolve(args.scenario))
    print(f"ok: {sc.name} ({len(sc.static_shapes)} shapes, {len(sc.pedestrians)} pedestrians)")
    return EXIT_OK


def _cmd_run(args) -> int:
    sc = load_scenario(_resolve(args.scenario)).with_method(args.method)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    summary = run_batch(sc, args.runs, keep_path=args.tree_debug)
    written = write_outputs(summary, args.out, tree_debug=args.tree_debug)
    print(f"{sc.name} {summary['method']}: success {summary['success_rate']:.0%} "
          f"mean {_fmt(summary['mean_time'])} s std {_fmt(summary['std_time'])} s "
          f"collisions {summary['collisions']}")
    log.info("wrote %d files to %s", len(written), args.out)
    return EXIT_OK


def _cmd_compare(args) -> int:
    sc = load_scenario(_resolve(args.scenario))
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    rows = []
    for method in ("GVO_ONLY", "GVO_RRT"):
        s = run_batch(sc.with_method(method), args.runs)
        rows.append(s)
        if args.out:
            write_outputs(s, Path(args.out) / method.lower())
    print(f"{'method':10s} {'runs':>4s} {'success':>8s} {'mean_s':>7s} {'std_s':>6s} {'coll':>4s}")
    for s in rows:
        print(f"{s['method']:10s} {s['runs']:4d} {s['success_rate']:8.0%} "
              f"{_fmt(s['mean_time']):>7s} {_fmt(s['std_time']):>6s} {s['collisions']:4d}")
    if args.out:
        table = [{k: v for k, v in s.items() if k not in ("results", "per_run")} for s in rows]
        (Path(args.out) / "compare.json").write_text(
            json.dumps(json_safe(table), indent=2, allow_nan=False))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # bad invocations count as failed validation; 2 is kept for i/o errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gvonav", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run seeded episodes and export traces")
    run.add_argument("--scenario", required=True)
    run.add_argument("--method", default="gvo-rrt", choices=["gvo", "gvo-rrt"])
    run.add_argument("--runs", type=int, default=1)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default="out")
    run.add_argument("--tree-debug", action="store_true", help="also write tree_debug.json")
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare", help="summary table for both methods")
    cmp_.add_argument("--scenario", required=True)
    cmp_.add_argument("--runs", type=int, default=10)
    cmp_.add_argument("--seed", type=int, default=None)
    cmp_.add_argument("--out", default=None)
    cmp_.set_defaults(func=_cmd_compare)

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("--scenario", required=True)
    val.set_defaults(func=_cmd_validate)
    return ap


def main(argv=None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "runs", 1) is not None and getattr(args, "runs", 1) < 1:
        print("error: --runs must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
