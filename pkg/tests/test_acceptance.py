"""Acceptance suite: one test per criterion, at the stated tolerances.

The planner suites are computed once per session and shared. Expect a long
run (tens of minutes on one core); every test prints its measured numbers.
"""
import csv
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from pushopt.bench import VARIABLE_SETS, ExperimentSpec, run_bench, sample_starts
from pushopt.config import scenario_problem
from pushopt.mechanics import (
    GRAVITY,
    EmptyCone,
    NoStablePush,
    PusherContact,
    force_balance_residual,
    generalized_friction_cone,
    gravity_wrench,
    motion_cone,
    support_adjoint,
)
from pushopt.metrics import distance, rollout
from pushopt.nlp import AssembleOptions, assemble, sigmoid_blend
from pushopt.planners import PlannerOptions, PlanningFailed, RrtConfig, plan_oracle, plan_relaxed, plan_rrt_mc
from pushopt.se2 import PlanarPose

from test_nlp import gradient_errors, random_point

OBJECTS = ("square", "T", "L")
STARTS = 20
SEED = 0

pytestmark = pytest.mark.slow


def report(name, ok, detail):
    print(f"\n[acceptance] {name}: {'PASS' if ok else 'FAIL'} | {detail}")


def _solve(planner, problem, *args):
    t = time.perf_counter()
    try:
        plan, err = planner(problem, *args), None
    except PlanningFailed as exc:
        plan, err = exc.plan, exc
    return plan, err, time.perf_counter() - t


@pytest.fixture(scope="session")
def relaxed_suite():
    """20 seeded starts per object, relaxed planner at default settings."""
    out = {}
    for obj in OBJECTS:
        base, aopts = scenario_problem(obj)
        rows = []
        for s in sample_starts(base, STARTS, SEED):
            problem = replace(base, start=s)
            plan, err, wall = _solve(plan_relaxed, problem, PlannerOptions(assemble=aopts))
            rows.append(dict(problem=problem, plan=plan, error=err, wall=wall))
        out[obj] = rows
    return out


@pytest.fixture(scope="session")
def tightness_suite():
    """30 random instances on the square: N = 2, M alternating 1 and 2, a
    random subset of its pushers, start and goal sampled inside."""
    base, aopts = scenario_problem("square")
    rng = np.random.default_rng(SEED)
    rows = []
    for i in range(30):
        M = 1 + i % 2
        idx = sorted(rng.choice(len(base.pushers), M + 1, replace=False))
        s, g = base.object.sample_interior(rng, 2)
        problem = replace(
            base, pushers=[base.pushers[k] for k in idx], N=2, start=PlanarPose(*s, 0.0), goal=PlanarPose(*g, 0.0)
        )
        opts = PlannerOptions(assemble=aopts, require_goal=False)
        relaxed, rerr, _ = _solve(plan_relaxed, problem, opts)
        oracle, oerr, owall = _solve(plan_oracle, problem, opts)
        rows.append(dict(problem=problem, relaxed=relaxed, rerr=rerr, oracle=oracle, oerr=oerr, oracle_wall=owall))
    return rows


def _converged_relaxed(relaxed_suite, tightness_suite):
    plans = [(r["problem"], r["plan"]) for rows in relaxed_suite.values() for r in rows if r["error"] is None]
    plans += [(r["problem"], r["relaxed"]) for r in tightness_suite if r["rerr"] is None]
    return [(pr, pl) for pr, pl in plans if pl is not None and pl.converged]


def test_goal_attainment(relaxed_suite):
    lines, ok = [], True
    for obj, rows in relaxed_suite.items():
        eps = rows[0]["problem"].epsilon
        hits = sum(1 for r in rows if r["error"] is None and r["plan"].final_distance <= eps)
        slowest = max(r["wall"] for r in rows)
        ok &= hits >= 18 and slowest <= 120.0
        lines.append(f"{obj} {hits}/{len(rows)} (slowest {slowest:.1f} s)")
    report("goal attainment", ok, "; ".join(lines))
    assert ok, lines


def test_speed_vs_sampling_baseline(relaxed_suite):
    lines, ok = [], True
    for obj, rows in relaxed_suite.items():
        d_rel, d_rrt = [], []
        for i, r in enumerate(rows):
            problem = r["problem"]
            plan = r["plan"]
            d_rel.append(plan.final_distance if plan is not None else distance(problem.start, problem.goal))
            cfg = RrtConfig(seed=SEED + i, max_time=r["wall"])
            rrt, _, _ = _solve(plan_rrt_mc, problem, cfg)
            d_rrt.append(rrt.final_distance)
        m_rel, m_rrt = float(np.median(d_rel)), float(np.median(d_rrt))
        ratio = m_rrt / max(m_rel, 1e-300)
        ok &= ratio >= 10.0
        lines.append(f"{obj} median d relaxed {m_rel:.2e} vs RRT-MC {m_rrt:.2e} ({ratio:.1e}x)")
    report("equal wall-clock budget vs RRT-MC", ok, "; ".join(lines))
    assert ok, lines


def test_relaxation_tightness(tightness_suite):
    ratios, bad, slow = [], [], 0
    for i, r in enumerate(tightness_suite):
        slow += r["oracle_wall"] > 60.0
        if r["oerr"] is not None or r["rerr"] is not None:
            bad.append((i, str(r["oerr"] or r["rerr"])))
            continue
        ratios.append(r["relaxed"].objective / r["oracle"].objective)
    worst = max(ratios) if ratios else math.inf
    # a ratio below 1 means the oracle's local solve of the same schedule
    # stopped at a worse point; it is reported, the bound is on the upper side
    ok = not bad and slow == 0 and worst <= 1.05
    report(
        "relaxation tightness", ok,
        f"{len(ratios)}/30 compared, relaxed/oracle objective in [{min(ratios):.6f}, {worst:.4f}], "
        f"oracle over 60 s: {slow}, failures: {bad}",
    )
    assert ok


def test_rounding_feasibility(relaxed_suite, tightness_suite):
    plans = _converged_relaxed(relaxed_suite, tightness_suite)
    worst_mc = worst_state = -math.inf
    for problem, plan in plans:
        r = rollout(plan, problem)
        worst_mc = max(worst_mc, float(np.max(r.mc_violations)))
        worst_state = max(worst_state, float(np.max(r.state_violations)))
    ok = worst_mc <= 1e-6 and worst_state <= 1e-6
    report("rounding feasibility", ok, f"{len(plans)} plans, max MC residual {worst_mc:.2e}, max state residual {worst_state:.2e}")
    assert ok


def test_entropy_concentration(relaxed_suite, tightness_suite):
    plans = _converged_relaxed(relaxed_suite, tightness_suite)
    conc = [float(np.min(np.max(pl.prob_schedule, axis=1))) for _, pl in plans]
    frac = float(np.mean([c >= 0.99 for c in conc]))
    ok = frac >= 0.95
    report("entropy concentration", ok, f"{frac:.1%} of {len(plans)} converged plans have max_m p >= 0.99 on every step "
           f"(lowest {min(conc):.3f})")
    assert ok


def test_variable_set_ablation():
    n = 5
    res = {}
    for obj in OBJECTS:
        base, _ = scenario_problem(obj)
        for name, aopts in VARIABLE_SETS.items():
            for s in sample_starts(base, n, SEED):
                plan, err, wall = _solve(plan_relaxed, replace(base, start=s), PlannerOptions(assemble=aopts, require_goal=False))
                if plan is not None and plan.converged and err is None:
                    res.setdefault((obj, name), []).append((wall, plan.objective))
    lines, ok = [], True
    for obj in OBJECTS:
        med = {k: (np.median([w for w, _ in res.get((obj, k), [(math.nan, math.nan)])]),
                   np.median([f for _, f in res.get((obj, k), [(math.nan, math.nan)])])) for k in VARIABLE_SETS}
        obj_ok = med["xi_p_P"][1] <= 10 * med["xi_p"][1] and med["xi_p_P_T"][1] <= 10 * med["xi_p_T"][1]
        time_ok = med["xi_p_T"][0] <= 1.05 * med["xi_p"][0] and med["xi_p_P_T"][0] <= 1.05 * med["xi_p_P"][0]
        ok &= bool(obj_ok and time_ok)
        lines.append(obj + " " + ", ".join(f"{k} {t:.2f}s/{f:.4g}" for k, (t, f) in med.items()))
    report("variable-set ablation", ok, "; ".join(lines))
    assert ok


def test_switch_reduction_q(tmp_path_factory):
    out = tmp_path_factory.mktemp("q")
    spec = ExperimentSpec(objects=["square"], q_objects=["square"], starts=STARTS, seed=SEED,
                          mu_grid=[0.4, 0.6, 0.8, 0.9], experiments=["q"])
    run_bench(spec, out, workers=1)
    rows = list(csv.DictReader(open(out / "q_curve.csv")))
    q = [float(r["mean_Q_percent"]) for r in rows]
    inversions = sum(1 for a, b in zip(q, q[1:]) if b > a)
    ok = q[0] >= 5.0 and q[3] <= 2.0 and inversions <= 1
    detail = ", ".join(f"Q({r['mu']})={float(r['mean_Q_percent']):.1f}% [{r['switches_plain']}->{r['switches_kl']} "
                       f"over {r['instances']}]" for r in rows)
    report("switch reduction", ok, f"{detail}; inversions {inversions}")
    assert ok


def test_sigmoid_table():
    table = {0.00: (0.982, 0.018), 0.02: (0.500, 0.500), 0.06: (0.999, 0.001)}
    errs = {}
    for x, pair in table.items():
        s = sigmoid_blend(x, 0.02, 200.0)
        errs[x] = float(np.max(np.abs(np.sort([1 - s, s]) - np.sort(pair))))
    ok = all(e <= 5e-4 for e in errs.values())
    report("sigmoid table", ok, ", ".join(f"x={x:.2f} err {e:.2e}" for x, e in errs.items()))
    assert ok, errs


def _random_pusher(rng, half=0.03):
    side = int(rng.integers(4))
    pts, nrm = [], []
    for _ in range(int(rng.integers(1, 4))):
        t = rng.uniform(-half, half)
        p, n = [((t, -half), (0, 1)), ((half, t), (-1, 0)), ((t, half), (0, -1)), ((-half, t), (1, 0))][side]
        pts.append(p)
        nrm.append(n)
    return PusherContact(np.array(pts, float), np.array(nrm, float), rng.uniform(0.1, 0.9))


def _implied_pusher_wrench(t, support, obj, pose):
    """Unit pusher wrench that balances the limit-surface wrench behind twist t."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    tS = np.array([c * t[0] + s * t[1], -s * t[0] + c * t[1], t[2]])
    ws = tS / support.A_diag
    ws /= math.sqrt(ws @ (support.A_diag * ws))
    wp = -(support.friction_scale * support_adjoint(pose) @ ws + gravity_wrench(obj.mass, pose.theta))
    return wp / np.linalg.norm(wp)


def test_mechanics_properties():
    problem, _ = scenario_problem("square")
    sup, obj = problem.support, problem.object
    rng = np.random.default_rng(SEED)
    worst_fb = worst_ls = worst_mono = -math.inf
    grows = built = skipped = 0
    while built < 100:
        pusher = _random_pusher(rng)
        wider = pusher.with_friction(pusher.mu_p * rng.uniform(1.2, 2.0))
        pose = PlanarPose(*rng.uniform(-0.02, 0.02, 2), rng.uniform(-0.5, 0.5))
        try:
            c1 = motion_cone(pusher, sup, pose, obj, GRAVITY)
            c2 = motion_cone(wider, sup, pose, obj, GRAVITY)
        except (NoStablePush, EmptyCone):
            skipped += 1  # no stable push at this pose; nothing to compare
            continue
        built += 1
        mg = gravity_wrench(obj.mass, pose.theta)
        adT = support_adjoint(pose)
        for cone in (c1, c2):
            for w, ws, a in zip(cone.pusher_wrenches, cone.support_wrenches, cone.magnitudes):
                worst_fb = max(worst_fb, force_balance_residual(w, a, ws, sup, mg, adT))
                worst_ls = max(worst_ls, abs(ws @ sup.A @ ws - 1.0))
        # every twist of the lower-friction cone is a stable push under the higher friction
        W1, W2 = generalized_friction_cone(pusher), generalized_friction_cone(wider)
        for t in c1.generators:
            worst_mono = max(worst_mono, float(np.max(W2.residuals(_implied_pusher_wrench(t, sup, obj, pose)))))
        grows += any(np.max(W1.residuals(_implied_pusher_wrench(t, sup, obj, pose))) > 1e-9 for t in c2.generators)
    ok = worst_fb <= 1e-8 and worst_ls <= 1e-9 and worst_mono <= 1e-9
    report("mechanics properties", ok, f"{built} configs ({skipped} without a cone skipped), force balance {worst_fb:.1e}, limit surface {worst_ls:.1e}, "
           f"monotonicity {worst_mono:.1e}, strictly larger cone in {grows}")
    assert ok


def test_gradient_integrity():
    rng = np.random.default_rng(SEED)
    classes = []
    for obj in ("square", "T"):
        problem, _ = scenario_problem(obj)
        for dt in (True, False):
            for ft in (True, False):
                for kl in (False, True):
                    classes.append((f"{obj}/dt{int(dt)}ft{int(ft)}kl{int(kl)}", problem, AssembleOptions(dt, ft, kl), {}))
        classes.append((f"{obj}/frozen", problem, AssembleOptions(), {"schedule": [0, 1, 2]}))
    tee, _ = scenario_problem("T")
    classes.append(("T/regions", tee, AssembleOptions(), {"schedule": [3, 3, 3], "regions": [0, 1, 1]}))
    worst = {}
    for name, problem, opts, kw in classes:
        nlp = assemble(problem, opts, **kw)
        worst[name] = max(max(gradient_errors(nlp, random_point(nlp, rng)).values()) for _ in range(20))
    top = max(worst, key=worst.get)
    ok = worst[top] <= 1e-5
    report("gradient integrity", ok, f"{len(classes)} instance classes x 20 points, worst relative error {worst[top]:.1e} ({top})")
    assert ok
