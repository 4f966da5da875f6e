"""Sequential quadratic programming with a damped-BFGS Hessian model.

The QP subproblems go to the dual active-set kernel in
:mod:`pushopt.kernels`; globalization uses an L1 merit function with
per-constraint penalty weights, backtracking, and a single second-order
correction when the unit step is rejected. Constraint convention:
``ceq(x) == 0`` and ``cin(x) <= 0``.
"""
from __future__ import annotations

import csv
import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels


class SolveStatus(enum.Enum):
    CONVERGED = "Converged"
    ITER_LIMIT = "IterLimit"
    LINE_SEARCH_FAIL = "LineSearchFail"
    INFEASIBLE = "Infeasible"


@dataclass
class SolveReport:
    x_opt: np.ndarray
    objective: float
    max_constraint_violation: float
    iterations: int
    wall_time: float
    status: SolveStatus
    kkt_residual: float = math.inf
    multipliers_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multipliers_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multipliers_bounds: np.ndarray = field(default_factory=lambda: np.zeros(0))
    trace: list = field(default_factory=list)
    hessian: np.ndarray | None = None

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


@dataclass
class FunctionBundle:
    """Minimal bundle of callables for :func:`solve`."""

    f: Callable
    grad: Callable
    n: int
    ceq: Callable | None = None
    jeq: Callable | None = None
    cin: Callable | None = None
    jin: Callable | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        if self.lb is None:
            self.lb = np.full(self.n, -np.inf)
        if self.ub is None:
            self.ub = np.full(self.n, np.inf)
        empty_c = lambda x: np.zeros(0)  # noqa: E731
        empty_j = lambda x: np.zeros((0, self.n))  # noqa: E731
        if self.ceq is None:
            self.ceq, self.jeq = empty_c, empty_j
        if self.cin is None:
            self.cin, self.jin = empty_c, empty_j


class _Eval:
    __slots__ = ("x", "f", "g", "ce", "ci", "Je", "Ji")

    def __init__(self, bundle, x, with_derivs=True):
        self.x = x
        with np.errstate(all="ignore"):
            self.f = float(bundle.f(x))
            self.ce = np.asarray(bundle.ceq(x), dtype=float).reshape(-1)
            self.ci = np.asarray(bundle.cin(x), dtype=float).reshape(-1)
        self.g = self.Je = self.Ji = None
        if with_derivs:
            self.derivs(bundle)

    def derivs(self, bundle):
        n = len(self.x)
        self.g = np.asarray(bundle.grad(self.x), dtype=float).reshape(-1)
        self.Je = np.asarray(bundle.jeq(self.x), dtype=float).reshape(-1, n)
        self.Ji = np.asarray(bundle.jin(self.x), dtype=float).reshape(-1, n)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.f) and bool(np.all(np.isfinite(self.ce))) and bool(np.all(np.isfinite(self.ci)))

    def violation(self) -> float:
        v = 0.0
        if self.ce.size:
            v = max(v, float(np.max(np.abs(self.ce))))
        if self.ci.size:
            v = max(v, float(np.max(self.ci)))
        return v


def _merit(ev: _Eval, rho_e, rho_i) -> float:
    if not ev.finite:
        return math.inf
    return ev.f + float(rho_e @ np.abs(ev.ce)) + float(rho_i @ np.maximum(ev.ci, 0.0))


def _solve_qp(B, ev: _Eval, lb_d, ub_d, penalty: float):
    """QP subproblem; falls back to an elastic (L1-relaxed) version when the
    linearized constraints are inconsistent. Returns d, lam_e, lam_i, lam_b,
    elastic flag and status."""
    n = B.shape[0]
    fin_u = np.isfinite(ub_d)
    fin_l = np.isfinite(lb_d)
    I = np.eye(n)
    Ain = np.vstack([ev.Ji, I[fin_u], -I[fin_l]])
    bin_ = np.concatenate([-ev.ci, ub_d[fin_u], -lb_d[fin_l]])
    d, le, li, st, _ = kernels.qp_solve(B, ev.g, ev.Je, -ev.ce, Ain, bin_)
    mi = ev.Ji.shape[0]
    if st == kernels.QP_OPTIMAL:
        lam_b = np.zeros(n)
        lam_b[fin_u] += li[mi : mi + fin_u.sum()]
        lam_b[fin_l] -= li[mi + fin_u.sum() :]
        return d, le, li[:mi], lam_b, False, st
    if st == kernels.QP_NOT_CONVEX:
        # B lost definiteness; the caller resets it (relaxing would not help)
        return d, le, li[:mi], np.zeros(n), False, st
    # elastic mode: slacks s+ s- on equalities, t on inequalities
    me = ev.Je.shape[0]
    ns = 2 * me + mi
    N = n + ns
    H = np.zeros((N, N))
    H[:n, :n] = B
    H[n:, n:] = 1e-8 * max(1.0, penalty) * np.eye(ns)
    c = np.concatenate([ev.g, np.full(ns, penalty)])
    Aeq = np.hstack([ev.Je, -np.eye(me), np.eye(me), np.zeros((me, mi))])
    Ai = np.hstack([ev.Ji, np.zeros((mi, 2 * me)), -np.eye(mi)])
    Ab = np.hstack([np.vstack([I[fin_u], -I[fin_l]]), np.zeros((fin_u.sum() + fin_l.sum(), ns))])
    As = np.hstack([np.zeros((ns, n)), -np.eye(ns)])
    A_all = np.vstack([Ai, Ab, As])
    b_all = np.concatenate([-ev.ci, ub_d[fin_u], -lb_d[fin_l], np.zeros(ns)])
    z, le, li, st2, _ = kernels.qp_solve(H, c, Aeq, -ev.ce, A_all, b_all)
    if st2 != kernels.QP_OPTIMAL:
        return np.zeros(n), np.zeros(me), np.zeros(mi), np.zeros(n), True, st2
    lam_b = np.zeros(n)
    k = mi
    lam_b[fin_u] += li[k : k + fin_u.sum()]
    k += fin_u.sum()
    lam_b[fin_l] -= li[k : k + fin_l.sum()]
    return z[:n], le, li[:mi], lam_b, True, st2


def solve(
    bundle,
    x0,
    opt_tol: float = 1e-8,
    feas_tol: float = 1e-8,
    max_iter: int = 500,
    trace_path=None,
    hess0: np.ndarray | None = None,
    x_scale=None,
) -> SolveReport:
    """Minimize ``bundle.f`` subject to the bundle's constraints and bounds.

    `x_scale` (default: ``bundle.x_scale`` when present) is a positive
    diagonal scaling; iterations run in ``z = x / x_scale`` and the report
    is mapped back. Never raises on numerical trouble; the outcome is
    carried by ``SolveReport.status``. Deterministic for fixed inputs.
    """
    if x_scale is None:
        x_scale = getattr(bundle, "x_scale", None)
    if x_scale is not None and x_scale is not False:
        sc = np.asarray(x_scale, dtype=float)
        rep = solve(_Scaled(bundle, sc), np.asarray(x0, dtype=float) / sc, opt_tol, feas_tol, max_iter, trace_path, hess0, False)
        rep.x_opt = rep.x_opt * sc
        rep.multipliers_bounds = rep.multipliers_bounds / sc
        return rep
    t_start = time.perf_counter()
    x = np.array(x0, dtype=float).reshape(-1)
    n = x.size
    lb = np.full(n, -np.inf) if bundle.lb is None else np.asarray(bundle.lb, dtype=float)
    ub = np.full(n, np.inf) if bundle.ub is None else np.asarray(bundle.ub, dtype=float)
    x = np.clip(x, lb, ub)
    trace: list[dict] = []

    def report(status, ev, kkt, le, li, lb_m, it, B):
        viol = ev.violation() if ev.finite else math.inf
        rep = SolveReport(
            x_opt=ev.x.copy(),
            objective=ev.f,
            max_constraint_violation=viol,
            iterations=it,
            wall_time=time.perf_counter() - t_start,
            status=status,
            kkt_residual=kkt,
            multipliers_eq=le,
            multipliers_ineq=li,
            multipliers_bounds=lb_m,
            trace=trace,
            hessian=B,
        )
        if trace_path is not None:
            _write_trace(trace_path, trace)
        return rep

    ev = _Eval(bundle, x, with_derivs=False)
    me, mi = ev.ce.size, ev.ci.size
    if not ev.finite:
        return report(SolveStatus.LINE_SEARCH_FAIL, ev, math.inf, np.zeros(me), np.zeros(mi), np.zeros(n), 0, None)
    ev.derivs(bundle)
    if not (np.all(np.isfinite(ev.g)) and np.all(np.isfinite(ev.Je)) and np.all(np.isfinite(ev.Ji))):
        return report(SolveStatus.LINE_SEARCH_FAIL, ev, math.inf, np.zeros(me), np.zeros(mi), np.zeros(n), 0, None)

    B = np.eye(n) if hess0 is None else np.array(hess0, dtype=float)
    fresh_B = hess0 is None
    rho_e = np.zeros(me)
    rho_i = np.zeros(mi)
    le = np.zeros(me)
    li = np.zeros(mi)
    lam_b = np.zeros(n)
    kkt = math.inf
    resets = 0
    stall = 0
    it = 0
    while it < max_iter:
        penalty = 1e3 * max(1.0, float(np.max(rho_e, initial=0.0)), float(np.max(rho_i, initial=0.0)))
        d, le, li, lam_b, elastic, qst = _solve_qp(B, ev, lb - x, ub - x, penalty)
        if qst != kernels.QP_OPTIMAL:
            if resets < 3:
                B = np.eye(n) * max(1.0, float(np.mean(np.abs(np.diag(B)))))
                resets += 1
                continue
            status = SolveStatus.INFEASIBLE if qst == kernels.QP_INFEASIBLE else SolveStatus.LINE_SEARCH_FAIL
            return report(status, ev, kkt, le, li, lam_b, it, B)

        viol = ev.violation()
        grad_l = ev.g + ev.Je.T @ le + ev.Ji.T @ li + lam_b
        kkt = float(np.max(np.abs(grad_l), initial=0.0))
        compl = float(np.max(np.abs(li * ev.ci), initial=0.0))
        if not elastic and viol <= feas_tol and kkt <= opt_tol and compl <= max(opt_tol, 1e-10):
            return report(SolveStatus.CONVERGED, ev, kkt, le, li, lam_b, it, B)
        if viol <= feas_tol:
            est = _kkt_estimate(ev, lb, ub)
            if est is not None and est[0] <= opt_tol:
                return report(SolveStatus.CONVERGED, ev, *est, it, B)
        if elastic and float(np.max(np.abs(d), initial=0.0)) < 1e-14 and viol > feas_tol:
            return report(SolveStatus.INFEASIBLE, ev, kkt, le, li, lam_b, it, B)

        rho_e = np.maximum(np.abs(le), 0.5 * (rho_e + np.abs(le)))
        rho_i = np.maximum(np.abs(li), 0.5 * (rho_i + np.abs(li)))
        phi0 = _merit(ev, rho_e, rho_i)
        lin_ce = ev.ce + ev.Je @ d
        lin_ci = ev.ci + ev.Ji @ d
        D = float(ev.g @ d) + float(rho_e @ (np.abs(lin_ce) - np.abs(ev.ce))) + float(
            rho_i @ (np.maximum(lin_ci, 0.0) - np.maximum(ev.ci, 0.0))
        )
        D = min(D, -1e-20)

        alpha = 1.0
        accepted = None
        tried_soc = False
        # merit values are only known to roundoff; near a solution the
        # predicted decrease drops below that level
        slack = 1e-14 * (1.0 + abs(phi0))
        while alpha >= 1e-10:
            xt = np.clip(x + alpha * d, lb, ub)
            et = _Eval(bundle, xt, with_derivs=False)
            phit = _merit(et, rho_e, rho_i)
            if phit <= phi0 + 1e-4 * alpha * D + slack:
                accepted = et
                break
            if alpha == 1.0 and not tried_soc and et.finite:
                tried_soc = True
                es = _second_order_correction(bundle, ev, et, d, li, lb, ub)
                if es is not None and _merit(es, rho_e, rho_i) <= phi0 + 1e-4 * D + slack:
                    accepted = es
                    break
            if math.isfinite(phit):
                denom = 2.0 * (phit - phi0 - alpha * D)
                a_new = -D * alpha * alpha / denom if denom > 0 else 0.5 * alpha
                alpha = min(0.5 * alpha, max(0.1 * alpha, a_new))
            else:
                alpha *= 0.1
        if accepted is None:
            if viol <= feas_tol:
                est = _kkt_estimate(ev, lb, ub)
                if est is not None and est[0] <= opt_tol:
                    return report(SolveStatus.CONVERGED, ev, *est, it, B)
            if viol <= feas_tol and float(np.max(np.abs(d), initial=0.0)) <= 1e-12 * (1.0 + float(np.max(np.abs(x)))):
                # no measurable progress is possible; stationarity as reported
                status = SolveStatus.CONVERGED if kkt <= opt_tol else SolveStatus.LINE_SEARCH_FAIL
                return report(status, ev, kkt, le, li, lam_b, it, B)
            if resets < 3 and not fresh_B:
                B = np.eye(n) * max(1.0, float(np.mean(np.abs(np.diag(B)))))
                fresh_B = True
                resets += 1
                continue
            return report(SolveStatus.LINE_SEARCH_FAIL, ev, kkt, le, li, lam_b, it, B)

        accepted.derivs(bundle)
        if not (np.all(np.isfinite(accepted.g)) and np.all(np.isfinite(accepted.Je)) and np.all(np.isfinite(accepted.Ji))):
            return report(SolveStatus.LINE_SEARCH_FAIL, ev, kkt, le, li, lam_b, it, B)
        s = accepted.x - x
        y = (accepted.g + accepted.Je.T @ le + accepted.Ji.T @ li) - (ev.g + ev.Je.T @ le + ev.Ji.T @ li)
        sy = float(s @ y)
        if fresh_B and sy > 0:
            B = np.eye(n) * (float(y @ y) / sy)
        fresh_B = False
        Bs = B @ s
        sBs = float(s @ Bs)
        if sBs > 1e-300:
            if sy < 0.2 * sBs:
                theta = 0.8 * sBs / (sBs - sy)
                y = theta * y + (1.0 - theta) * Bs
                sy = float(s @ y)
            if sy > 1e-300:
                B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
                B = 0.5 * (B + B.T)
        phi1 = _merit(accepted, rho_e, rho_i)
        # short steps with no real decrease mean B has gone bad: restart it
        stall = stall + 1 if alpha < 0.1 else 0
        if stall >= 5:
            B = np.eye(n) * max(1.0, float(np.median(np.diag(B))))
            fresh_B = True
            stall = 0
        trace.append(
            {
                "iter": it,
                "objective": accepted.f,
                "violation": accepted.violation(),
                "merit_before": phi0,
                "merit_after": phi1,
                "step": alpha,
                "kkt": kkt,
            }
        )
        x = accepted.x
        ev = accepted
        it += 1

    viol = ev.violation()
    if viol <= feas_tol:
        est = _kkt_estimate(ev, lb, ub)
        if est is not None and est[0] <= opt_tol:
            return report(SolveStatus.CONVERGED, ev, *est, it, B)
    d, le, li, lam_b, elastic, _ = _solve_qp(B, ev, lb - x, ub - x, 1e3)
    grad_l = ev.g + ev.Je.T @ le + ev.Ji.T @ li + lam_b
    kkt = float(np.max(np.abs(grad_l), initial=0.0))
    compl = float(np.max(np.abs(li * ev.ci), initial=0.0))
    if not elastic and viol <= feas_tol and kkt <= opt_tol and compl <= max(opt_tol, 1e-10):
        return report(SolveStatus.CONVERGED, ev, kkt, le, li, lam_b, it, B)
    return report(SolveStatus.ITER_LIMIT, ev, kkt, le, li, lam_b, it, B)


def _kkt_estimate(ev: _Eval, lb, ub, act_tol: float = 1e-7, compl_tol: float = 1e-6):
    """Multipliers at x independent of the Hessian model: least squares on
    the nearly active set, with inequality multipliers kept non-negative.

    Returns (kkt, lam_eq, lam_in, lam_bounds) or None when complementarity
    of the estimate exceeds `compl_tol`.
    """
    n = len(ev.x)
    act_i = np.flatnonzero(ev.ci >= -act_tol)
    with np.errstate(invalid="ignore"):
        at_ub = np.flatnonzero(np.isfinite(ub) & (ev.x >= ub - act_tol * np.maximum(1.0, np.abs(ub))))
        at_lb = np.flatnonzero(np.isfinite(lb) & (ev.x <= lb + act_tol * np.maximum(1.0, np.abs(lb))))
    I = np.eye(n)
    J = np.vstack([ev.Je, ev.Ji[act_i], I[at_ub], -I[at_lb]])
    me = ev.Je.shape[0]
    k = J.shape[0]
    if k == 0:
        kkt = float(np.max(np.abs(ev.g), initial=0.0))
        return kkt, np.zeros(0), np.zeros(ev.ci.size), np.zeros(n)
    G = J @ J.T
    G += (1e-14 * max(1.0, float(np.trace(G)) / k)) * np.eye(k)
    c = J @ ev.g
    A_in = np.hstack([np.zeros((k - me, me)), -np.eye(k - me)])
    lam, _, _, st, _ = kernels.qp_solve(G, c, np.zeros((0, k)), np.zeros(0), A_in, np.zeros(k - me))
    if st != kernels.QP_OPTIMAL:
        return None
    le = lam[:me]
    li = np.zeros(ev.ci.size)
    li[act_i] = lam[me : me + len(act_i)]
    lam_b = np.zeros(n)
    o = me + len(act_i)
    lam_b[at_ub] += lam[o : o + len(at_ub)]
    lam_b[at_lb] -= lam[o + len(at_ub) :]
    compl = float(np.max(np.abs(li * ev.ci), initial=0.0))
    if compl > compl_tol:
        return None
    kkt = float(np.max(np.abs(ev.g + J.T @ lam), initial=0.0))
    return kkt, le, li, lam_b


class _Scaled:
    """View of a bundle in the coordinates z = x / s."""

    def __init__(self, bundle, s):
        self.b, self.s = bundle, s
        self.n = len(s)
        lb = getattr(bundle, "lb", None)
        ub = getattr(bundle, "ub", None)
        self.lb = None if lb is None else np.asarray(lb) / s
        self.ub = None if ub is None else np.asarray(ub) / s

    def f(self, z):
        return self.b.f(z * self.s)

    def grad(self, z):
        return np.asarray(self.b.grad(z * self.s)) * self.s

    def ceq(self, z):
        return self.b.ceq(z * self.s)

    def jeq(self, z):
        return np.atleast_2d(self.b.jeq(z * self.s)).reshape(-1, self.n) * self.s

    def cin(self, z):
        return self.b.cin(z * self.s)

    def jin(self, z):
        return np.atleast_2d(self.b.jin(z * self.s)).reshape(-1, self.n) * self.s


def _second_order_correction(bundle, ev: _Eval, et: _Eval, d, li, lb, ub):
    """Least-norm correction of the constraint values at ``x + d`` using the
    Jacobian of equalities and active inequalities at x."""
    act = (li > 0) | (ev.ci + ev.Ji @ d > -1e-10)
    J = np.vstack([ev.Je, ev.Ji[act]])
    c = np.concatenate([et.ce, et.ci[act]])
    if J.shape[0] == 0:
        return None
    try:
        corr = -J.T @ np.linalg.lstsq(J @ J.T, c, rcond=None)[0]
    except np.linalg.LinAlgError:
        return None
    xs = np.clip(et.x + corr, lb, ub)
    es = _Eval(bundle, xs, with_derivs=False)
    return es if es.finite else None


def _write_trace(path, trace: list[dict]) -> None:
    cols = ["iter", "objective", "violation", "merit_before", "merit_after", "step", "kkt"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in trace:
            w.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in cols})


def multistart(bundle, x0, restarts: int = 0, scale: float = 0.05, **kw) -> SolveReport:
    """Run `solve` from x0 and from `restarts` deterministic perturbations
    (x0 * (1 + scale * sin(k * (i + 1)))) and return the best Converged
    report, or the last report if none converged."""
    best = None
    last = None
    idx = np.arange(1, len(x0) + 1)
    for k in range(restarts + 1):
        xs = np.array(x0, dtype=float) if k == 0 else np.asarray(x0) + scale * np.sin(k * idx) * (
            np.abs(np.asarray(x0)) + 1e-3
        )
        rep = solve(bundle, xs, **kw)
        last = rep
        if rep.converged and (best is None or rep.objective < best.objective):
            best = rep
    return best if best is not None else last
