"""`pushopt` command line: plan, oracle, rrt, bench, export-cone.

Exit codes: 0 plan converged, 1 configuration error, 2 planning failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .bench import ExperimentSpec, run_bench, thread_count
from .config import SCENARIO_DIR, load_problem, read_json
from .mechanics import (
    GRAVITY,
    EmptyCone,
    NoStablePush,
    PusherContact,
    SupportModel,
    export_cone_csv,
    motion_cone,
)
from .metrics import rollout
from .planners import (
    OracleTooLarge,
    PlannerOptions,
    PlanningFailed,
    RrtConfig,
    plan_oracle,
    plan_relaxed,
    plan_rrt_mc,
)
from .se2 import ConfigError, PlanarPose, PolygonObject

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2
log = logging.getLogger("pushopt")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pushopt", description="Prehensile pushing trajectory optimization.")
    ap.add_argument("--version", action="version", version=f"pushopt {__version__}")
    ap.add_argument("--seed", type=int, default=0, help="RNG seed (RRT-MC, sampled starts)")
    ap.add_argument("--out-dir", default=".", help="directory for output files")
    ap.add_argument("--trace", action="store_true", help="write the SQP iteration trace as CSV")
    sub = ap.add_subparsers(dest="command", required=True)

    def planner_cmd(name, helptext):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("problem", help="problem JSON file")
        p.add_argument("--no-require-goal", action="store_true", help="accept converged plans that miss the goal")
        return p

    p = planner_cmd("plan", "entropy-relaxed planner")
    p.add_argument("--kl", action="store_true", help="add the KL switching penalty")
    p.add_argument("--restarts", type=int, default=0, help="extra perturbed SQP starts per solve")
    planner_cmd("oracle", "enumeration oracle over pusher schedules")
    p = planner_cmd("rrt", "RRT-MC sampling baseline")
    p.add_argument("--max-time", type=float, default=10.0, help="wall-clock cap in seconds")
    p.add_argument("--step", type=float, default=0.005, help="translation step in meters")

    p = sub.add_parser("bench", help="run the experiment suite and write CSVs")
    p.add_argument("spec", nargs="?", help="experiment spec JSON (defaults apply when omitted)")

    p = sub.add_parser("export-cone", help="dump a motion cone as CSV")
    p.add_argument("pusher", help="pusher JSON file")
    p.add_argument("--pose", type=float, nargs=3, metavar=("X", "Y", "THETA"), default=(0.0, 0.0, 0.0))
    p.add_argument("--object", default=str(SCENARIO_DIR / "objects" / "square.json"), help="object JSON file")
    p.add_argument("--support", default=str(SCENARIO_DIR / "support.json"), help="support JSON file")
    p.add_argument("--out", default="cone.csv", help="output CSV (relative to --out-dir)")
    return ap


def _write_json(path: Path, data: dict) -> None:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v

    path.write_text(json.dumps(clean(data), indent=2) + "\n")


def _emit(plan, problem, stem: str, out: Path, status: str) -> None:
    doc = plan.to_json()
    doc["status"] = status
    doc["problem"] = problem.name
    _write_json(out / f"{stem}.plan.json", doc)
    _write_json(out / f"{stem}.rollout.json", rollout(plan, problem).to_dict())


def _run_planner(args, out: Path) -> int:
    problem, aopts = load_problem(args.problem)
    stem = Path(args.problem).stem
    if args.command == "plan" and args.kl:
        aopts = replace(aopts, use_kl=True)
    trace = str(out / f"{stem}.trace.csv") if args.trace else None
    opts = PlannerOptions(
        assemble=aopts,
        require_goal=not args.no_require_goal,
        trace_path=trace,
        restarts=getattr(args, "restarts", 0),
    )
    try:
        if args.command == "plan":
            plan = plan_relaxed(problem, opts)
        elif args.command == "oracle":
            plan = plan_oracle(problem, opts)
        else:
            cfg = RrtConfig(step_size=args.step, max_time=args.max_time, seed=args.seed)
            plan = plan_rrt_mc(problem, cfg)
    except PlanningFailed as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        if exc.plan is not None:
            _emit(exc.plan, problem, stem, out, exc.status or "PlanningFailed")
        return EXIT_FAILED
    _emit(plan, problem, stem, out, "Converged")
    print(
        f"{plan.planner_tag}: schedule {plan.pusher_schedule}, goal distance {plan.final_distance:.3e}, "
        f"objective {plan.objective:.6g}, {plan.wall_time:.2f} s"
    )
    return EXIT_OK


def _export_cone(args, out: Path) -> int:
    pusher = PusherContact.from_dict(read_json(args.pusher))
    obj = PolygonObject.from_dict(read_json(args.object))
    support = SupportModel.from_dict(read_json(args.support))
    try:
        cone = motion_cone(pusher, support, PlanarPose(*args.pose), obj, GRAVITY)
    except (NoStablePush, EmptyCone) as exc:
        print(f"no motion cone at this pose: {exc}", file=sys.stderr)
        return EXIT_FAILED
    target = out / args.out
    export_cone_csv(cone, target)
    print(f"{len(cone.generators)} generators, {len(cone.halfspaces)} halfspaces -> {target}")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    out = Path(args.out_dir)
    try:
        thread_count()
        out.mkdir(parents=True, exist_ok=True)
        if args.command in ("plan", "oracle", "rrt"):
            return _run_planner(args, out)
        if args.command == "export-cone":
            return _export_cone(args, out)
        spec = ExperimentSpec.load(args.spec) if args.spec else ExperimentSpec()
        spec = replace(spec, seed=args.seed if args.seed else spec.seed)
        path = run_bench(spec, out if args.out_dir != "." or not args.spec else None)
        print(f"results in {path}")
        return EXIT_OK
    except (ConfigError, OracleTooLarge) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TypeError as exc:  # unexpected spec fields surface here
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
