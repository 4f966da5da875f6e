"""Experiment harness: sampled starts, budget sweep, ablation and Q study.

Instances run in a process pool capped by PUSHOPT_THREADS; each instance
plans single-threaded and results are gathered and written by the parent in
instance order, so CSV rows do not depend on scheduling.

Timing. With `timing = "nominal"` (default) time columns are deterministic
work converted to seconds: SQP iterations times `seconds_per_sqp_iteration`
for the optimizers and tree expansions divided by `rrt_expansions_per_second`
for RRT-MC. Fixed seeds then give byte-identical CSVs. `timing = "wall"`
reports and caps by wall-clock time instead.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import SCENARIO_DIR, load_problem, read_json
from .metrics import distance, q_metric
from .nlp import AssembleOptions
from .planners import PlannerOptions, PlanningFailed, RrtConfig, count_switches, plan_relaxed, plan_rrt_mc
from .se2 import ConfigError, PlanarPose

log = logging.getLogger("pushopt.bench")

VARIABLE_SETS = {
    "xi_p": AssembleOptions(direct_transcription=False, free_time=False),
    "xi_p_T": AssembleOptions(direct_transcription=False, free_time=True),
    "xi_p_P": AssembleOptions(direct_transcription=True, free_time=False),
    "xi_p_P_T": AssembleOptions(direct_transcription=True, free_time=True),
}
EXPERIMENTS = ("budget", "ablation", "q")


@dataclass
class ExperimentSpec:
    objects: list = field(default_factory=lambda: ["square", "T", "L"])
    starts: int = 20
    seed: int = 0
    randomize_theta: bool = False
    planners: list = field(default_factory=lambda: ["relaxed", "rrt"])
    budgets_s: list = field(default_factory=lambda: [1.0, 2.0, 5.0, 10.0, 20.0])
    mu_grid: list = field(default_factory=lambda: [0.4, 0.6, 0.8, 0.9, 0.99])
    q_objects: list = field(default_factory=lambda: ["square"])
    ablation_starts: int | None = None  # None: same as `starts`
    experiments: list = field(default_factory=lambda: list(EXPERIMENTS))
    timing: str = "nominal"
    seconds_per_sqp_iteration: float = 2e-3
    rrt_expansions_per_second: float = 120.0
    out_dir: str = "bench_out"

    def __post_init__(self):
        if int(self.starts) < 1:
            raise ConfigError("starts: need at least one start")
        b = [float(x) for x in self.budgets_s]
        if not b or any(x <= 0 for x in b) or any(y <= x for x, y in zip(b, b[1:])):
            raise ConfigError("budgets_s: need positive, strictly increasing budgets")
        if self.timing not in ("nominal", "wall"):
            raise ConfigError('timing: expected "nominal" or "wall"')
        unknown = set(self.experiments) - set(EXPERIMENTS)
        if unknown:
            raise ConfigError(f"experiments: unknown experiment {sorted(unknown)[0]!r}")
        unknown = set(self.planners) - {"relaxed", "rrt"}
        if unknown:
            raise ConfigError(f"planners: unknown planner {sorted(unknown)[0]!r}")
        if any(not 0 < float(m) for m in self.mu_grid):
            raise ConfigError("mu_grid: friction coefficients must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        if not isinstance(d, dict):
            raise ConfigError("spec: top level must be a JSON object")
        bad = set(d) - set(cls.__dataclass_fields__)
        if bad:
            raise ConfigError(f"{sorted(bad)[0]}: unknown field")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        return cls.from_dict(read_json(path))


def thread_count() -> int:
    raw = os.environ.get("PUSHOPT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"PUSHOPT_THREADS: expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("PUSHOPT_THREADS: expected a positive integer")
    return n


def _problem_path(obj: str) -> Path:
    p = Path(obj)
    if p.suffix == ".json":
        return p
    return SCENARIO_DIR / "problems" / f"{obj}_goal.json"


@lru_cache(maxsize=None)
def _base_problem(obj: str):
    return load_problem(_problem_path(obj))


def sample_starts(problem, count: int, seed: int, randomize_theta: bool = False) -> list[PlanarPose]:
    """Start poses sampled uniformly inside the object's region cover, with
    theta equal to the goal angle unless randomized."""
    rng = np.random.default_rng(seed)
    pts = problem.object.sample_interior(rng, count)
    th = rng.uniform(-math.pi, math.pi, count) if randomize_theta else np.full(count, problem.goal.theta)
    return [PlanarPose(float(q[0]), float(q[1]), float(t)) for q, t in zip(pts, th)]


def _instance_problem(task):
    problem, aopts = _base_problem(task["object"])
    s = task["start"]
    problem = replace(problem, start=PlanarPose(*s))
    if task.get("mu_p") is not None:
        problem = problem.with_friction(task["mu_p"])
    return problem, aopts


def run_instance(task: dict) -> dict:
    """Plan one instance; never raises, failures are reported in the row."""
    out = {"id": task["id"]}
    try:
        problem, aopts = _instance_problem(task)
        w = problem.weights
        d0 = distance(problem.start, problem.goal, w.lambda_s, w.lambda_theta)
        if task["planner"] == "rrt":
            cfg = RrtConfig(seed=task["seed"], max_time=task["max_time"], max_expansions=task.get("max_expansions"))
            try:
                plan = plan_rrt_mc(problem, cfg)
                ok = True
            except PlanningFailed as exc:
                plan, ok = exc.plan, False
            out.update(ok=ok, start_distance=d0, final_distance=plan.final_distance, history=plan.history)
            out["wall_s"] = plan.wall_time
            return out
        opts = PlannerOptions(assemble=task.get("assemble", aopts), require_goal=task.get("require_goal", True))
        if task.get("use_kl") is not None:
            opts.assemble = replace(opts.assemble, use_kl=task["use_kl"])
        try:
            plan = plan_relaxed(problem, opts)
            ok = True
        except PlanningFailed as exc:
            plan, ok = exc.plan, False
            out["error"] = str(exc)
        out.update(ok=ok, start_distance=d0)
        if plan is not None:
            out.update(
                final_distance=plan.final_distance,
                objective=plan.objective,
                switches=count_switches(plan),
                sqp_iterations=plan.sqp_iterations,
                wall_s=plan.wall_time,
                converged=plan.converged,
            )
        return out
    except Exception as exc:  # one bad instance must not sink the run
        out.update(ok=False, error=f"{type(exc).__name__}: {exc}")
        return out


def run_tasks(tasks: list[dict], workers: int | None = None) -> list[dict]:
    workers = thread_count() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        results = [run_instance(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_instance, tasks))
    for r in results:
        if "error" in r:
            log.warning("instance %s: %s", r["id"], r["error"])
    return results


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _cost_s(spec: ExperimentSpec, r: dict) -> float:
    if spec.timing == "wall":
        return r.get("wall_s", math.inf)
    return r.get("sqp_iterations", math.inf) * spec.seconds_per_sqp_iteration


def _distance_at(spec: ExperimentSpec, r: dict, budget: float) -> float:
    """Best goal distance an instance had reached within `budget` seconds."""
    if "history" in r:
        best = r["start_distance"]
        for expansions, secs, d in r["history"]:
            t = secs if spec.timing == "wall" else expansions / spec.rrt_expansions_per_second
            if t <= budget:
                best = d
        return best
    if "final_distance" in r and _cost_s(spec, r) <= budget:
        return r["final_distance"]
    return r.get("start_distance", math.nan)


def budget_experiment(spec: ExperimentSpec, out: Path, workers=None) -> None:
    tasks = []
    for obj in spec.objects:
        problem, _ = _base_problem(obj)
        for i, s in enumerate(sample_starts(problem, spec.starts, spec.seed, spec.randomize_theta)):
            for planner in spec.planners:
                task = dict(id=f"{obj}/{planner}/{i}", object=obj, start=s.as_array().tolist(), planner=planner)
                if planner == "rrt":
                    top = spec.budgets_s[-1]
                    task.update(seed=spec.seed + i, max_time=top if spec.timing == "wall" else math.inf)
                    if spec.timing == "nominal":
                        task["max_expansions"] = int(round(top * spec.rrt_expansions_per_second))
                tasks.append(task)
    results = {r["id"]: r for r in run_tasks(tasks, workers)}
    inst_rows, curve_rows = [], []
    for obj in spec.objects:
        problem, _ = _base_problem(obj)
        for planner in spec.planners:
            rs = [results[f"{obj}/{planner}/{i}"] for i in range(spec.starts)]
            for i, r in enumerate(rs):
                d = r.get("final_distance", math.nan)
                t = _cost_s(spec, r) if planner == "relaxed" else spec.budgets_s[-1]
                inst_rows.append([planner, obj, i, 1000 * d, t, "pass" if d <= problem.epsilon else "fail"])
            for b in spec.budgets_s:
                ds = [_distance_at(spec, r, b) for r in rs]
                ok = sum(1 for d in ds if d <= problem.epsilon)
                curve_rows.append([planner, obj, float(b), 1000 * float(np.nanmedian(ds)), ok / len(ds)])
    _write_csv(
        out / "instances.csv",
        ["planner", "object", "start_id", "goal_distance_mm", "time_s", "threshold_1e-4_m"],
        inst_rows,
    )
    _write_csv(
        out / "budget_curve.csv",
        ["planner", "object", "budget_s", "median_goal_distance_mm", "solved_fraction"],
        curve_rows,
    )


def ablation_experiment(spec: ExperimentSpec, out: Path, workers=None) -> None:
    n = spec.ablation_starts or spec.starts
    tasks = []
    for obj in spec.objects:
        problem, _ = _base_problem(obj)
        for i, s in enumerate(sample_starts(problem, n, spec.seed, spec.randomize_theta)):
            for name, aopts in VARIABLE_SETS.items():
                tasks.append(
                    dict(id=f"{obj}/{name}/{i}", object=obj, start=s.as_array().tolist(), planner="relaxed",
                         assemble=aopts, require_goal=False)
                )
    results = {r["id"]: r for r in run_tasks(tasks, workers)}
    rows = []
    for obj in spec.objects:
        for name in VARIABLE_SETS:
            rs = [results[f"{obj}/{name}/{i}"] for i in range(n)]
            done = [r for r in rs if "objective" in r and r.get("converged")]
            t = float(np.median([_cost_s(spec, r) for r in done])) if done else math.nan
            f = float(np.median([r["objective"] for r in done])) if done else math.nan
            rows.append([name, obj, t, f, len(done), n])
    _write_csv(out / "ablation.csv", ["variable_set", "object", "time_s", "objective", "converged", "instances"], rows)


def q_experiment(spec: ExperimentSpec, out: Path, workers=None) -> None:
    tasks = []
    for obj in spec.q_objects:
        problem, _ = _base_problem(obj)
        for i, s in enumerate(sample_starts(problem, spec.starts, spec.seed, spec.randomize_theta)):
            for mu in spec.mu_grid:
                for kl in (False, True):
                    tasks.append(
                        dict(id=f"{obj}/{mu}/{int(kl)}/{i}", object=obj, start=s.as_array().tolist(),
                             planner="relaxed", mu_p=float(mu), use_kl=kl)
                    )
    results = {r["id"]: r for r in run_tasks(tasks, workers)}
    rows = []
    for mu in spec.mu_grid:
        plain = kl = used = 0
        for obj in spec.q_objects:
            for i in range(spec.starts):
                a, b = results[f"{obj}/{mu}/0/{i}"], results[f"{obj}/{mu}/1/{i}"]
                if a.get("ok") and b.get("ok"):
                    plain += a["switches"]
                    kl += b["switches"]
                    used += 1
        q = q_metric(plain, kl)
        rows.append([float(mu), 0.0 if plain == 0 and used else q, plain, kl, used])
    _write_csv(out / "q_curve.csv", ["mu", "mean_Q_percent", "switches_plain", "switches_kl", "instances"], rows)


def run_bench(spec: ExperimentSpec, out_dir=None, workers=None) -> Path:
    out = Path(out_dir or spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runners = {"budget": budget_experiment, "ablation": ablation_experiment, "q": q_experiment}
    for name in EXPERIMENTS:
        if name in spec.experiments:
            runners[name](spec, out, workers)  # each writes its CSVs before the next starts
    return out
