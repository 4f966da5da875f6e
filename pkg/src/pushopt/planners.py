"""Entropy-relaxed planner with rounding, enumeration oracle, and RRT-MC."""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels, sqp
from .mechanics import generalized_friction_cone, motion_cone_or_blocked
from .metrics import distance, euler_poses
from .nlp import AssembleOptions, ObjectiveBreakdown, PushNLP, PushProblem, build_cones, interpolated_poses
from .se2 import PlanarPose

SCHEMA = "plan_v1"


class PlanningFailed(RuntimeError):
    """No acceptable plan; `plan` holds the best attempt when there is one."""

    def __init__(self, message: str, plan=None, status: str | None = None):
        super().__init__(message)
        self.plan = plan
        self.status = status


class OracleTooLarge(ValueError):
    pass


@dataclass
class PlannerOptions:
    assemble: AssembleOptions = field(default_factory=AssembleOptions)
    opt_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iter: int = 500
    max_outer: int = 8
    relin_tol: float = 1e-8
    restarts: int = 0
    # multipliers on lambda_e for the warm-started continuation stages; the
    # last stage must be 1.0 so the final solve uses the nominal objective
    entropy_continuation: tuple = (0.0, 1e-2, 1.0)
    stage_outer: int = 2  # relinearization rounds in the intermediate stages
    rounding_candidates: int = 8
    require_goal: bool = True
    trace_path: str | None = None


@dataclass
class RrtConfig:
    step_size: float = 0.005
    goal_bias: float = 0.1
    max_time: float = 10.0
    seed: int = 0
    max_nodes: int = 200_000
    max_expansions: int | None = None  # deterministic budget; None means time-capped only
    theta_step: float = 0.1  # rad per expansion
    theta_span: float = 0.5  # sampled theta range around the goal angle (rad)


@dataclass
class PushPlan:
    poses: np.ndarray  # (N+1, 3), P_0..P_N
    twists_selected: np.ndarray  # (N, 3)
    prob_schedule: np.ndarray  # (N, M+1)
    pusher_schedule: list
    delta: float
    solve_report: sqp.SolveReport | None
    planner_tag: str
    breakdown: ObjectiveBreakdown | None = None
    wall_time: float = 0.0
    final_distance: float = math.inf
    twists_all: np.ndarray | None = None  # (N, M+1, 3) for relaxed plans
    regions: list | None = None
    repaired: bool = False
    outer_iterations: int = 0
    relaxed_report: sqp.SolveReport | None = None
    nodes: int = 0  # RRT-MC tree size
    history: list = field(default_factory=list)  # RRT-MC (expansions, seconds, best distance)
    sqp_iterations: int = 0  # summed over every solve behind this plan

    @property
    def N(self) -> int:
        return len(self.twists_selected)

    @property
    def objective(self) -> float:
        return self.breakdown.total if self.breakdown is not None else math.nan

    @property
    def converged(self) -> bool:
        return self.solve_report is not None and self.solve_report.converged

    def to_json(self) -> dict:
        rep = self.solve_report
        return {
            "schema": SCHEMA,
            "planner": self.planner_tag,
            "N": self.N,
            "delta": self.delta,
            "T": self.delta * max(self.N - 1, 1),
            "poses": np.asarray(self.poses).tolist(),
            "twists": np.asarray(self.twists_selected).tolist(),
            "pusher_schedule": [int(s) for s in self.pusher_schedule],
            "prob_schedule": np.asarray(self.prob_schedule).tolist(),
            "regions": self.regions,
            "switches": count_switches(self),
            "final_distance": self.final_distance,
            "objective": None if self.breakdown is None else self.breakdown.as_dict(),
            "repaired": self.repaired,
            "sqp_iterations": self.sqp_iterations,
            "rrt_nodes": self.nodes,
            "timings": {"wall_s": self.wall_time, "solver_s": None if rep is None else rep.wall_time},
            "solver": None
            if rep is None
            else {
                "status": rep.status.value,
                "iterations": rep.iterations,
                "objective": rep.objective,
                "max_constraint_violation": rep.max_constraint_violation,
                "kkt_residual": rep.kkt_residual,
            },
        }


def count_switches(plan) -> int:
    s = list(plan.pusher_schedule if hasattr(plan, "pusher_schedule") else plan)
    return sum(1 for a, b in zip(s, s[1:]) if a != b)


def _one_hot(schedule, M1: int) -> np.ndarray:
    p = np.zeros((len(schedule), M1))
    p[np.arange(len(schedule)), schedule] = 1.0
    return p


def _goal_check(problem: PushProblem) -> None:
    if problem.object.region_residual((problem.goal.x, problem.goal.y)) > 1e-12:
        raise PlanningFailed("goal lies outside the object", status="GoalOutside")


def _trivial_plan(problem: PushProblem, tag: str, t0: float) -> PushPlan | None:
    w = problem.weights
    if distance(problem.start, problem.goal, w.lambda_s, w.lambda_theta) > 0.0:
        return None
    N, M1 = problem.N, problem.M + 1
    P = np.tile(problem.start.as_array(), (N + 1, 1))
    sched = [0] * N
    rep = sqp.SolveReport(np.zeros(0), 0.0, 0.0, 0, 0.0, sqp.SolveStatus.CONVERGED, 0.0)
    return PushPlan(
        P, np.zeros((N, 3)), _one_hot(sched, M1), sched, problem.delta, rep, tag,
        ObjectiveBreakdown(0.0, 0.0, 0.0, 0.0, 0.0), time.perf_counter() - t0, 0.0,
    )


def _mc_gap(problem, poses, xi, p, schedule, cache) -> float:
    """Largest halfspace residual of the used twists against cones rebuilt
    at the poses they start from."""
    cones = build_cones(problem, poses[:-1], schedule, cache)
    worst = -math.inf
    for n, row in enumerate(cones):
        for m, H in enumerate(row):
            if H is None or (schedule is None and p[n, m] <= 1e-9):
                continue
            worst = max(worst, float(np.max(H @ xi[n, m], initial=-math.inf)))
    return worst


def _solve_relinearized(problem, popts: PlannerOptions, schedule=None, regions=None, warm=None, cache=None):
    """Solve with cones rebuilt at the current pose iterate until the twists
    sit in the cones of their own poses (or max_outer is hit)."""
    cache = {} if cache is None else cache
    P_lin = interpolated_poses(problem) if warm is None else np.asarray(warm[0])
    parts = warm
    nlp = rep = None
    gap = math.inf
    k = 0
    iters = 0
    for k in range(1, popts.max_outer + 1):
        cones = build_cones(problem, P_lin[:-1], schedule, cache)
        nlp = PushNLP(problem, popts.assemble, cones, schedule, regions)
        x0 = nlp.initializer() if parts is None else nlp.x_from_parts(*parts)
        rep = sqp.multistart(
            nlp, x0, restarts=popts.restarts, opt_tol=popts.opt_tol, feas_tol=popts.feas_tol,
            max_iter=popts.max_iter, trace_path=popts.trace_path,
        )
        iters += rep.iterations
        P, xi, p, d, T = nlp.parts(rep.x_opt)
        parts = (P, xi, p, d, T)
        gap = _mc_gap(problem, P, xi, p, schedule, cache)
        if gap <= popts.relin_tol or np.max(np.abs(P - P_lin)) <= 1e-12:
            break
        P_lin = P
    return nlp, rep, parts, gap, k, iters


def _finish(problem, popts, plan: PushPlan) -> PushPlan:
    w = problem.weights
    # report the poses the selected twists actually produce; they differ from
    # the solver's pose variables only by the defect tolerance
    plan.poses = euler_poses(problem.start, plan.twists_selected, plan.delta)
    plan.final_distance = distance(plan.poses[-1], problem.goal, w.lambda_s, w.lambda_theta)
    if not plan.converged:
        status = plan.solve_report.status.value if plan.solve_report is not None else "Failed"
        raise PlanningFailed(f"solver finished with status {status}", plan, status)
    if popts.require_goal and plan.final_distance > problem.epsilon:
        raise PlanningFailed(
            f"goal distance {plan.final_distance:.3e} exceeds epsilon {problem.epsilon:.1e}", plan, "GoalMissed"
        )
    return plan


def _choose_regions(problem, poses) -> list | None:
    if problem.object.is_convex:
        return None
    out = []
    for q in poses[1:]:
        res = [float(np.max(r.residual(q[:2]))) for r in problem.object.regions]
        out.append(int(np.argmin(res)))
    return out


def rounding_candidates(p_bar, k: int) -> list[list[int]]:
    """The k schedules with the largest sum_n log p_bar[n, s_n], best first.

    Beam search over steps; exact because the score is a sum over steps.
    Ties resolve towards lower pusher indices, so the first candidate is the
    row-wise argmax."""
    logp = np.log(np.maximum(np.asarray(p_bar, dtype=float), 1e-300))
    beam = [(0.0, [])]
    for row in logp:
        ext = [(sc + float(row[m]), seq + [m]) for sc, seq in beam for m in range(len(row))]
        ext.sort(key=lambda t: (-t[0], t[1]))
        beam = ext[:k]
    return [seq for _, seq in beam]


def plan_relaxed(problem: PushProblem, options: PlannerOptions | None = None) -> PushPlan:
    """Entropy-continuation relaxed solve, then rounding.

    The final relaxed solution is accepted as is when it is one-hot, feasible
    under cones rebuilt at its own poses, and at the goal. Otherwise schedules
    are rounded from the stage-averaged probabilities, best first, and each
    candidate is repaired by frozen-schedule solves. The first candidate with
    a converged repair at the goal wins. Without require_goal the cheapest
    converged plan is returned when no candidate reaches the goal."""
    popts = options or PlannerOptions()
    t0 = time.perf_counter()
    _goal_check(problem)
    triv = _trivial_plan(problem, "Relaxed", t0)
    if triv is not None:
        return triv
    N, M1 = problem.N, problem.M + 1
    w = problem.weights
    cache: dict = {}
    parts = None
    outer = 0
    work = 0
    snapshots = []
    stages = tuple(popts.entropy_continuation) or (1.0,)
    for i, s in enumerate(stages):
        last = i == len(stages) - 1
        staged = problem if last else replace(problem, weights=replace(w, lambda_e=w.lambda_e * s))
        sopts = popts if last else replace(popts, trace_path=None, max_outer=popts.stage_outer)
        nlp, rep, parts, gap, k, it = _solve_relinearized(staged, sopts, warm=parts, cache=cache)
        outer += k
        work += it
        snapshots.append(parts[2])
    P, xi, p, d, T = parts
    schedule = [int(s) for s in np.argmax(p, axis=1)]
    plan = PushPlan(
        P, xi[np.arange(N), schedule], p, schedule, float(d), rep, "Relaxed", nlp.breakdown(rep.x_opt),
        twists_all=xi, outer_iterations=outer, relaxed_report=rep, sqp_iterations=work,
    )
    onehot = _one_hot(schedule, M1)
    exact = float(np.max(np.abs(p - onehot))) <= 1e-9
    state_ok = max(problem.object.region_residual(q[:2]) for q in P[1:]) <= 1e-6
    fallback = []  # converged plans that miss the goal, used when it is not required
    if rep.converged and exact and gap <= 1e-6 and state_ok:
        if distance(P[-1], problem.goal, w.lambda_s, w.lambda_theta) <= problem.epsilon:
            plan.wall_time = time.perf_counter() - t0
            return _finish(problem, popts, plan)
        fallback.append(plan)

    p_bar = np.mean(snapshots, axis=0)
    first_fail = None
    cands = rounding_candidates(p_bar, popts.rounding_candidates)
    if popts.assemble.use_kl:
        # on one-hot rows the KL term is lambda_kl * log(1 / eta) per switch and
        # dominates the objective, so fewer switches go first (rank breaks ties)
        cands.sort(key=count_switches)
    for cand in cands:
        sel = xi[np.arange(N), cand]
        P_round = np.vstack([P[:1], P[0] + d * np.cumsum(sel, axis=0)])
        regions = None
        if not problem.object.is_convex and max(problem.object.region_residual(q[:2]) for q in P_round[1:]) > 1e-6:
            regions = _choose_regions(problem, P_round)
        # repair from the rounded relaxed trajectory and from the straight-line
        # initializer; the frozen-schedule problem has its own local minima
        reached = []
        for warm in ((P_round, xi, _one_hot(cand, M1), d, T), None):
            nlp2, rep2, parts2, gap2, outer2, it2 = _solve_relinearized(problem, popts, cand, regions, warm, cache)
            plan.sqp_iterations += it2
            plan.outer_iterations += outer2
            if gap2 > 1e-6:
                rep2.status = sqp.SolveStatus.LINE_SEARCH_FAIL
            P2, xi2, _, d2, _ = parts2
            trial = PushPlan(
                P2, xi2[np.arange(N), cand], p, cand, float(d2), rep2, "Relaxed", nlp2.breakdown(rep2.x_opt),
                twists_all=xi, regions=regions, repaired=True, relaxed_report=rep,
            )
            trial.final_distance = distance(P2[-1], problem.goal, w.lambda_s, w.lambda_theta)
            if not trial.converged:
                first_fail = first_fail or PlanningFailed(f"solver finished with status {rep2.status.value}", trial,
                                                          rep2.status.value)
            elif trial.final_distance <= problem.epsilon:
                reached.append(trial)
            else:
                fallback.append(trial)
        if reached:
            best = min(reached, key=lambda t: t.objective)
            best.sqp_iterations, best.outer_iterations = plan.sqp_iterations, plan.outer_iterations
            best.wall_time = time.perf_counter() - t0
            return _finish(problem, popts, best)
    if fallback:
        best = min(fallback, key=lambda t: t.objective)
        best.sqp_iterations, best.outer_iterations = plan.sqp_iterations, plan.outer_iterations
        best.wall_time = time.perf_counter() - t0
        return _finish(problem, popts, best)
    raise first_fail or PlanningFailed("no rounding candidate converged", plan, "Infeasible")


def plan_oracle(problem: PushProblem, options: PlannerOptions | None = None, max_assignments: int = 10_000) -> PushPlan:
    """Exact MINLP by enumerating pusher sequences (and region indicators for
    non-convex objects), each solved as a smooth NLP."""
    popts = options or PlannerOptions()
    t0 = time.perf_counter()
    _goal_check(problem)
    triv = _trivial_plan(problem, "Oracle", t0)
    if triv is not None:
        return triv
    N, M1 = problem.N, problem.M + 1
    L = len(problem.object.regions)
    if L > 4:
        raise OracleTooLarge("region enumeration is capped at 4 regions")
    n_regions = 1 if L == 1 else L**N
    if M1**N * n_regions > max_assignments:
        raise OracleTooLarge(f"{M1 ** N * n_regions} assignments exceed the cap of {max_assignments}")
    cache: dict = {}
    best = None
    work = 0
    for sched in itertools.product(range(M1), repeat=N):
        region_sets = [None] if L == 1 else list(itertools.product(range(L), repeat=N))
        for regs in region_sets:
            nlp, rep, parts, gap, outer, it = _solve_relinearized(
                problem, popts, list(sched), None if regs is None else list(regs), cache=cache
            )
            work += it
            if not rep.converged or gap > 1e-6:
                continue
            f = nlp.breakdown(rep.x_opt)
            if best is None or f.total < best[0].total:
                best = (f, nlp, rep, parts, list(sched), regs, outer)
    if best is None:
        raise PlanningFailed("no pusher assignment produced a converged plan", status="Infeasible")
    f, nlp, rep, parts, sched, regs, outer = best
    P, xi, _, d, _ = parts
    plan = PushPlan(
        P, xi[np.arange(N), sched], _one_hot(sched, M1), sched, float(d), rep, "Oracle", f,
        regions=None if regs is None else list(regs), outer_iterations=outer, sqp_iterations=work,
    )
    plan.wall_time = time.perf_counter() - t0
    return _finish(problem, popts, plan)


def plan_rrt_mc(problem: PushProblem, config: RrtConfig | None = None) -> PushPlan:
    """RRT over grasp poses with motion-cone steering.

    Each expansion picks the nearest node under d(., .), a pusher uniformly
    at random, and a twist from that pusher's cone at the node (Dirichlet(1)
    mix of the extreme generators), scaled so the step translates at most
    `step_size` and rotates at most `theta_step` (less when the sample is
    closer). Children outside the object are
    rejected. On timeout the best partial plan rides on PlanningFailed.
    """
    cfg = config or RrtConfig()
    t0 = time.perf_counter()
    _goal_check(problem)
    rng = np.random.default_rng(cfg.seed)
    w = problem.weights
    goal = problem.goal.as_array()
    goal[2] = problem.goal_theta_unwrapped()
    M1 = problem.M + 1
    cap = cfg.max_nodes
    nodes = np.zeros((cap, 3))
    parent = np.full(cap, -1)
    via = np.zeros(cap, dtype=int)
    twist = np.zeros((cap, 3))
    nodes[0] = problem.start.as_array()
    count = 1
    wcs = [generalized_friction_cone(pu) for pu in problem.pushers]
    cone_cache: dict = {}
    delta = problem.delta
    xmin, xmax, ymin, ymax = problem.object.bounding_box()
    best_i = 0
    best_d = distance(nodes[0], goal, w.lambda_s, w.lambda_theta)
    history = [(0, 0.0, best_d)]
    expansions = 0

    def extract(i, reached):
        path = []
        while i > 0:
            path.append(i)
            i = parent[i]
        path.reverse()
        sched = [int(via[j]) for j in path]
        tw = twist[path] if path else np.zeros((0, 3))
        P = euler_poses(nodes[0], tw, delta)
        rep = sqp.SolveReport(
            np.zeros(0), best_d, 0.0, count, time.perf_counter() - t0,
            sqp.SolveStatus.CONVERGED if reached else sqp.SolveStatus.ITER_LIMIT, math.nan,
        )
        plan = PushPlan(
            P, tw, _one_hot(sched, M1) if sched else np.zeros((0, M1)), sched, delta, rep, "RrtMc",
            wall_time=time.perf_counter() - t0, final_distance=distance(P[-1], goal, w.lambda_s, w.lambda_theta),
            nodes=count, history=history,
        )
        return plan

    if best_d <= problem.epsilon:
        return extract(0, True)
    while time.perf_counter() - t0 < cfg.max_time and count < cap:
        if cfg.max_expansions is not None and expansions >= cfg.max_expansions:
            break
        expansions += 1
        if rng.random() < cfg.goal_bias:
            q = goal
        else:
            q = np.array(
                [rng.uniform(xmin, xmax), rng.uniform(ymin, ymax), goal[2] + rng.uniform(-cfg.theta_span, cfg.theta_span)]
            )
        i = kernels.nearest_index(nodes[:count], q, w.lambda_s, w.lambda_theta)
        m = int(rng.integers(M1))
        key = (i, m)
        if key not in cone_cache:
            P = nodes[i]
            cone_cache[key] = motion_cone_or_blocked(
                problem.pushers[m], problem.support, PlanarPose(P[0], P[1], P[2]), problem.object,
                problem.gravity, problem.sweep_samples, wcs[m],
            )
        cone = cone_cache[key]
        if cone.kind == "apex":
            continue
        gens = cone.extreme_generators
        lam = rng.dirichlet(np.ones(len(gens)))
        v = lam @ gens
        # translation limited to step_size and rotation to theta_step, shorter
        # still when the sample is closer than a full step
        unit = max(math.hypot(v[0], v[1]) / cfg.step_size, abs(v[2]) / cfg.theta_step)
        if unit <= 0.0:
            continue
        step = v / unit
        dq = distance(nodes[i], q, w.lambda_s, w.lambda_theta)
        ds = w.lambda_s * math.hypot(step[0], step[1]) + w.lambda_theta * abs(step[2])
        if dq < ds:
            step = step * (dq / ds)
        child = nodes[i] + step
        if problem.object.region_residual(child[:2]) > 0.0:
            continue
        nodes[count] = child
        parent[count] = i
        via[count] = m
        twist[count] = step / delta
        dc = distance(child, goal, w.lambda_s, w.lambda_theta)
        if dc < best_d:
            best_d, best_i = dc, count
            history.append((expansions, time.perf_counter() - t0, dc))
        count += 1
        if dc <= problem.epsilon:
            return extract(count - 1, True)
    plan = extract(best_i, False)
    raise PlanningFailed(f"RRT-MC ran out of budget at goal distance {best_d:.3e}", plan, "Timeout")
