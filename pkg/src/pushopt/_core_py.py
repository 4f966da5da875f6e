"""Pure Python/numpy versions of the hot kernels.

Every function here has a twin with the same signature in the compiled
``_core`` extension; :mod:`pushopt.kernels` picks one at import time.
"""
from __future__ import annotations

import math

import numpy as np

QP_OPTIMAL = 0
QP_INFEASIBLE = 1
QP_NOT_CONVEX = 2
QP_MAX_ITER = 3


def _seeds(adiag: np.ndarray) -> np.ndarray:
    out = np.zeros((6, 3))
    for i in range(3):
        out[2 * i, i] = 1.0 / math.sqrt(adiag[i])
        out[2 * i + 1, i] = -1.0 / math.sqrt(adiag[i])
    return out


def stable_push_batch(wp, adT, mg, musfn, adiag, tol=1e-12, max_iter=60):
    """Solve ``a*wp + musfn*adT@ws + mg = 0``, ``ws' diag(adiag) ws = 1``, a >= 0
    for each row of `wp` by Newton iteration from six ellipsoid-axis seeds.

    Returns (ws, a, ok, residual) arrays; ``ok`` is 1 where a root with
    non-negative magnitude was found.
    """
    wp = np.ascontiguousarray(wp, dtype=float).reshape(-1, 3)
    adT = np.asarray(adT, dtype=float)
    mg = np.asarray(mg, dtype=float)
    adiag = np.asarray(adiag, dtype=float)
    n = wp.shape[0]
    ws_out = np.zeros((n, 3))
    a_out = np.zeros(n)
    ok = np.zeros(n, dtype=np.int8)
    res_out = np.full(n, np.inf)
    seeds = _seeds(adiag)
    M = musfn * adT
    jac = np.zeros((4, 4))
    jac[:3, :3] = M
    F = np.zeros(4)
    for k in range(n):
        w_p = wp[k]
        wpn = float(w_p @ w_p)
        jac[:3, 3] = w_p
        for seed in seeds:
            w = seed.copy()
            a = -float(w_p @ (M @ w + mg)) / wpn
            res = np.inf
            for _ in range(max_iter):
                F[:3] = a * w_p + M @ w + mg
                F[3] = float(w @ (adiag * w)) - 1.0
                res = float(np.max(np.abs(F)))
                if res <= tol:
                    break
                jac[3, :3] = 2.0 * adiag * w
                try:
                    step = np.linalg.solve(jac, -F)
                except np.linalg.LinAlgError:
                    break
                w = w + step[:3]
                a += step[3]
            if res <= max(tol, 1e-10) and a >= -1e-12:
                ws_out[k] = w
                a_out[k] = max(a, 0.0)
                ok[k] = 1
                res_out[k] = res
                break
    return ws_out, a_out, ok, res_out


def pose_distances(nodes, q, lam_s, lam_theta):
    """Distance from every row of `nodes` (x, y, theta) to pose `q`."""
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 3)
    dx = nodes[:, 0] - q[0]
    dy = nodes[:, 1] - q[1]
    dth = np.remainder(nodes[:, 2] - q[2] + np.pi, 2.0 * np.pi) - np.pi
    return lam_s * np.hypot(dx, dy) + lam_theta * np.abs(dth)


def nearest_index(nodes, q, lam_s, lam_theta):
    return int(np.argmin(pose_distances(nodes, q, lam_s, lam_theta)))


def _givens(a, b):
    h = math.hypot(a, b)
    if h == 0.0:
        return 1.0, 0.0, 0.0
    return a / h, b / h, h


def qp_solve(G, g, Aeq, beq, Ain, bin_, max_iter=0):
    """Dual active-set (Goldfarb-Idnani) solver for the strictly convex QP

        min 0.5 x'Gx + g'x   s.t.  Aeq x = beq,  Ain x <= bin_.

    Returns ``(x, lam_eq, lam_in, status, n_iter)`` with multipliers in the
    convention ``G x + g + Aeq' lam_eq + Ain' lam_in = 0`` and lam_in >= 0.
    """
    G = np.asarray(G, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    Aeq = np.asarray(Aeq, dtype=float).reshape(-1, n)
    Ain = np.asarray(Ain, dtype=float).reshape(-1, n)
    beq = np.asarray(beq, dtype=float).reshape(-1)
    bin_ = np.asarray(bin_, dtype=float).reshape(-1)
    meq, min_ = Aeq.shape[0], Ain.shape[0]
    lam_eq = np.zeros(meq)
    lam_in = np.zeros(min_)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        return np.zeros(n), lam_eq, lam_in, QP_NOT_CONVEX, 0
    Linv = np.linalg.solve(L, np.eye(n))
    J = np.ascontiguousarray(Linv.T)
    x = -J @ (J.T @ g)
    R = np.zeros((n, n))
    q = 0
    active: list[int] = []  # constraint ids; eq are 0..meq-1, ineq are meq + i
    u = np.zeros(n + 1)  # multipliers of active constraints, by position
    sign = np.ones(meq)
    if max_iter <= 0:
        max_iter = 10 * (n + meq + min_) + 50
    it = 0

    def normal(cid):
        if cid < meq:
            return sign[cid] * Aeq[cid], sign[cid] * beq[cid]
        i = cid - meq
        return -Ain[i], -bin_[i]

    def add(d):
        nonlocal q
        for j in range(n - 1, q, -1):
            c, s, h = _givens(d[j - 1], d[j])
            if s == 0.0:
                continue
            d[j - 1], d[j] = h, 0.0
            Jj1 = J[:, j - 1].copy()
            J[:, j - 1] = c * Jj1 + s * J[:, j]
            J[:, j] = -s * Jj1 + c * J[:, j]
        R[: q + 1, q] = d[: q + 1]
        q += 1

    def drop(pos):
        nonlocal q
        R[:, pos : q - 1] = R[:, pos + 1 : q]
        R[:, q - 1] = 0.0
        for j in range(pos, q - 1):
            c, s, h = _givens(R[j, j], R[j + 1, j])
            if s == 0.0:
                continue
            Rj = R[j, j:q].copy()
            R[j, j:q] = c * Rj + s * R[j + 1, j:q]
            R[j + 1, j:q] = -s * Rj + c * R[j + 1, j:q]
            R[j + 1, j] = 0.0
            Jj = J[:, j].copy()
            J[:, j] = c * Jj + s * J[:, j + 1]
            J[:, j + 1] = -s * Jj + c * J[:, j + 1]
        u[pos : q - 1] = u[pos + 1 : q]
        u[q - 1] = 0.0
        del active[pos]
        q -= 1

    def directions(nv):
        d = J.T @ nv
        z = J[:, q:] @ d[q:]
        if q > 0:
            r = np.linalg.solve(np.triu(R[:q, :q]), d[:q]) if q > 1 else d[:1] / R[0, 0]
        else:
            r = np.zeros(0)
        return d, z, r

    for cid in range(meq):
        nv, bv = normal(cid)
        s_p = float(nv @ x - bv)
        if s_p > 0:
            sign[cid] = -1.0
            nv, bv = -nv, -bv
            s_p = -s_p
        d, z, r = directions(nv)
        zn = float(z @ nv)
        if zn <= 1e-14 * max(1.0, float(nv @ nv)):
            if abs(s_p) <= 1e-10 * (1.0 + abs(bv)):
                continue  # linearly dependent but consistent
            return x, lam_eq, lam_in, QP_INFEASIBLE, it
        t = -s_p / zn
        x = x + t * z
        if q > 0:
            u[:q] -= t * r
        add(d)
        active.append(cid)
        u[q - 1] = t
        it += 1

    inactive = np.ones(min_, dtype=bool)
    while True:
        if min_ == 0:
            break
        s_all = bin_ - Ain @ x  # >= 0 feasible
        s_masked = np.where(inactive, s_all, np.inf)
        p = int(np.argmin(s_masked))
        scale = 1.0 + abs(bin_[p]) + float(np.abs(Ain[p]) @ np.abs(x))
        if s_masked[p] >= -1e-12 * scale:
            break
        cid = meq + p
        nv, bv = normal(cid)
        s_p = float(s_all[p])
        u_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                return x, lam_eq, lam_in, QP_MAX_ITER, it
            d, z, r = directions(nv)
            t1, drop_pos = math.inf, -1
            for j in range(q):
                if active[j] >= meq and r[j] > 1e-14:
                    ratio = u[j] / r[j]
                    if ratio < t1:
                        t1, drop_pos = ratio, j
            zn = float(z @ nv)
            t2 = -s_p / zn if zn > 1e-14 * max(1.0, float(nv @ nv)) else math.inf
            t = min(t1, t2)
            if math.isinf(t):
                return x, lam_eq, lam_in, QP_INFEASIBLE, it
            if math.isinf(t2):
                u[:q] -= t * r
                u_p += t
                inactive[active[drop_pos] - meq] = True
                drop(drop_pos)
                continue
            x = x + t * z
            u[:q] -= t * r
            u_p += t
            if t2 <= t1:
                add(d)
                active.append(cid)
                u[q - 1] = u_p
                inactive[p] = False
                break
            inactive[active[drop_pos] - meq] = True
            drop(drop_pos)
            s_p = float(nv @ x - bv)

    for j, cid in enumerate(active):
        if cid < meq:
            lam_eq[cid] = -sign[cid] * u[j]
        else:
            lam_in[cid - meq] = max(u[j], 0.0)
    return x, lam_eq, lam_in, QP_OPTIMAL, it
