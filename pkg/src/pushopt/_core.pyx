# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Same signatures and results as ``_core_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, hypot, fmod, INFINITY, M_PI

cnp.import_array()

DEF QP_OPTIMAL = 0
DEF QP_INFEASIBLE = 1
DEF QP_NOT_CONVEX = 2
DEF QP_MAX_ITER = 3


cdef int _solve4(double[:, ::1] A, double[::1] rhs, double[::1] out) noexcept nogil:
    # Gaussian elimination with partial pivoting on a 4x4 copy.
    cdef double M[4][5]
    cdef int i, j, k, piv
    cdef double best, f, tmp
    for i in range(4):
        for j in range(4):
            M[i][j] = A[i, j]
        M[i][4] = rhs[i]
    for k in range(4):
        piv = k
        best = fabs(M[k][k])
        for i in range(k + 1, 4):
            if fabs(M[i][k]) > best:
                best = fabs(M[i][k])
                piv = i
        if best < 1e-300:
            return 1
        if piv != k:
            for j in range(5):
                tmp = M[k][j]
                M[k][j] = M[piv][j]
                M[piv][j] = tmp
        for i in range(k + 1, 4):
            f = M[i][k] / M[k][k]
            for j in range(k, 5):
                M[i][j] -= f * M[k][j]
    for i in range(3, -1, -1):
        tmp = M[i][4]
        for j in range(i + 1, 4):
            tmp -= M[i][j] * out[j]
        out[i] = tmp / M[i][i]
    return 0


def stable_push_batch(wp, adT, mg, double musfn, adiag, double tol=1e-12, int max_iter=60):
    cdef double[:, ::1] W = np.ascontiguousarray(wp, dtype=np.float64).reshape(-1, 3)
    cdef double[:, ::1] T = np.ascontiguousarray(adT, dtype=np.float64)
    cdef double[::1] g = np.ascontiguousarray(mg, dtype=np.float64)
    cdef double[::1] Ad = np.ascontiguousarray(adiag, dtype=np.float64)
    cdef Py_ssize_t n = W.shape[0]
    ws_np = np.zeros((n, 3))
    a_np = np.zeros(n)
    ok_np = np.zeros(n, dtype=np.int8)
    res_np = np.full(n, np.inf)
    cdef double[:, ::1] ws_out = ws_np
    cdef double[::1] a_out = a_np
    cdef signed char[::1] ok = ok_np
    cdef double[::1] res_out = res_np
    cdef double[:, ::1] jac = np.zeros((4, 4))
    cdef double[::1] F = np.zeros(4)
    cdef double[::1] step = np.zeros(4)
    cdef double M[3][3]
    cdef double w[3]
    cdef double seed[3]
    cdef double a, res, wpn, v, accept_tol
    cdef Py_ssize_t k, i, j, s, it
    cdef int sing
    accept_tol = tol if tol > 1e-10 else 1e-10
    for i in range(3):
        for j in range(3):
            M[i][j] = musfn * T[i, j]
            jac[i, j] = M[i][j]
    for k in range(n):
        wpn = W[k, 0] * W[k, 0] + W[k, 1] * W[k, 1] + W[k, 2] * W[k, 2]
        for i in range(3):
            jac[i, 3] = W[k, i]
        jac[3, 3] = 0.0
        for s in range(6):
            for i in range(3):
                seed[i] = 0.0
            seed[s // 2] = (1.0 if s % 2 == 0 else -1.0) / sqrt(Ad[s // 2])
            for i in range(3):
                w[i] = seed[i]
            v = 0.0
            for i in range(3):
                v += W[k, i] * (M[i][0] * w[0] + M[i][1] * w[1] + M[i][2] * w[2] + g[i])
            a = -v / wpn
            res = INFINITY
            for it in range(max_iter):
                res = 0.0
                for i in range(3):
                    F[i] = a * W[k, i] + M[i][0] * w[0] + M[i][1] * w[1] + M[i][2] * w[2] + g[i]
                    if fabs(F[i]) > res:
                        res = fabs(F[i])
                F[3] = Ad[0] * w[0] * w[0] + Ad[1] * w[1] * w[1] + Ad[2] * w[2] * w[2] - 1.0
                if fabs(F[3]) > res:
                    res = fabs(F[3])
                if res <= tol:
                    break
                for i in range(3):
                    jac[3, i] = 2.0 * Ad[i] * w[i]
                    F[i] = -F[i]
                F[3] = -F[3]
                sing = _solve4(jac, F, step)
                if sing:
                    break
                for i in range(3):
                    w[i] += step[i]
                a += step[3]
            if res <= accept_tol and a >= -1e-12:
                for i in range(3):
                    ws_out[k, i] = w[i]
                a_out[k] = a if a > 0.0 else 0.0
                ok[k] = 1
                res_out[k] = res
                break
    return ws_np, a_np, ok_np, res_np


cdef inline double _wrap(double t) noexcept nogil:
    t = fmod(t + M_PI, 2.0 * M_PI)
    if t < 0:
        t += 2.0 * M_PI
    return t - M_PI


def pose_distances(nodes, q, double lam_s, double lam_theta):
    cdef double[:, ::1] P = np.ascontiguousarray(nodes, dtype=np.float64).reshape(-1, 3)
    cdef double qx = q[0], qy = q[1], qt = q[2]
    cdef Py_ssize_t n = P.shape[0], i
    out_np = np.empty(n)
    cdef double[::1] out = out_np
    for i in range(n):
        out[i] = lam_s * hypot(P[i, 0] - qx, P[i, 1] - qy) + lam_theta * fabs(_wrap(P[i, 2] - qt))
    return out_np


def nearest_index(nodes, q, double lam_s, double lam_theta):
    cdef double[:, ::1] P = np.ascontiguousarray(nodes, dtype=np.float64).reshape(-1, 3)
    cdef double qx = q[0], qy = q[1], qt = q[2]
    cdef Py_ssize_t n = P.shape[0], i, best_i = 0
    cdef double best = INFINITY, d
    for i in range(n):
        d = lam_s * hypot(P[i, 0] - qx, P[i, 1] - qy) + lam_theta * fabs(_wrap(P[i, 2] - qt))
        if d < best:
            best = d
            best_i = i
    return int(best_i)


# --- dense dual active-set QP ---------------------------------------------

cdef class _QPState:
    cdef int n, meq, min_, q
    cdef double[:, ::1] J
    cdef double[:, ::1] R
    cdef double[::1] u
    cdef double[::1] d
    cdef double[::1] z
    cdef double[::1] r
    cdef long[::1] active
    cdef double[::1] sign
    cdef double[:, ::1] Aeq
    cdef double[:, ::1] Ain
    cdef double[::1] beq
    cdef double[::1] bin_
    cdef double[::1] nv

    cdef void load_normal(self, int cid) noexcept nogil:
        cdef int j
        if cid < self.meq:
            for j in range(self.n):
                self.nv[j] = self.sign[cid] * self.Aeq[cid, j]
        else:
            for j in range(self.n):
                self.nv[j] = -self.Ain[cid - self.meq, j]

    cdef double normal_rhs(self, int cid) noexcept nogil:
        if cid < self.meq:
            return self.sign[cid] * self.beq[cid]
        return -self.bin_[cid - self.meq]

    cdef void directions(self) noexcept nogil:
        cdef int i, j, n = self.n, q = self.q
        cdef double acc
        for j in range(n):
            acc = 0.0
            for i in range(n):
                acc += self.J[i, j] * self.nv[i]
            self.d[j] = acc
        for i in range(n):
            acc = 0.0
            for j in range(q, n):
                acc += self.J[i, j] * self.d[j]
            self.z[i] = acc
        for i in range(q - 1, -1, -1):
            acc = self.d[i]
            for j in range(i + 1, q):
                acc -= self.R[i, j] * self.r[j]
            self.r[i] = acc / self.R[i, i]

    cdef void add(self) noexcept nogil:
        cdef int i, j, n = self.n, q = self.q
        cdef double a, b, h, c, s, t
        for j in range(n - 1, q, -1):
            a = self.d[j - 1]
            b = self.d[j]
            if b == 0.0:
                continue
            h = hypot(a, b)
            c = a / h
            s = b / h
            self.d[j - 1] = h
            self.d[j] = 0.0
            for i in range(n):
                t = self.J[i, j - 1]
                self.J[i, j - 1] = c * t + s * self.J[i, j]
                self.J[i, j] = -s * t + c * self.J[i, j]
        for i in range(q + 1):
            self.R[i, q] = self.d[i]
        self.q = q + 1

    cdef void drop(self, int pos) noexcept nogil:
        cdef int i, j, k, n = self.n, q = self.q
        cdef double a, b, h, c, s, t
        for j in range(pos, q - 1):
            for i in range(n):
                self.R[i, j] = self.R[i, j + 1]
            self.u[j] = self.u[j + 1]
            self.active[j] = self.active[j + 1]
        for i in range(n):
            self.R[i, q - 1] = 0.0
        self.u[q - 1] = 0.0
        for j in range(pos, q - 1):
            a = self.R[j, j]
            b = self.R[j + 1, j]
            if b == 0.0:
                continue
            h = hypot(a, b)
            c = a / h
            s = b / h
            for k in range(j, q - 1):
                t = self.R[j, k]
                self.R[j, k] = c * t + s * self.R[j + 1, k]
                self.R[j + 1, k] = -s * t + c * self.R[j + 1, k]
            self.R[j + 1, j] = 0.0
            for i in range(n):
                t = self.J[i, j]
                self.J[i, j] = c * t + s * self.J[i, j + 1]
                self.J[i, j + 1] = -s * t + c * self.J[i, j + 1]
        self.q = q - 1


def qp_solve(G, g, Aeq, beq, Ain, bin_, int max_iter=0):
    g_np = np.ascontiguousarray(g, dtype=np.float64).reshape(-1)
    cdef int n = g_np.shape[0]
    Aeq_np = np.ascontiguousarray(np.asarray(Aeq, dtype=np.float64).reshape(-1, n))
    Ain_np = np.ascontiguousarray(np.asarray(Ain, dtype=np.float64).reshape(-1, n))
    cdef int meq = Aeq_np.shape[0], min_ = Ain_np.shape[0]
    lam_eq = np.zeros(meq)
    lam_in = np.zeros(min_)
    try:
        L = np.linalg.cholesky(np.asarray(G, dtype=np.float64))
    except np.linalg.LinAlgError:
        return np.zeros(n), lam_eq, lam_in, QP_NOT_CONVEX, 0
    Linv = np.linalg.solve(L, np.eye(n))

    cdef _QPState st = _QPState()
    st.n = n
    st.meq = meq
    st.min_ = min_
    st.q = 0
    st.J = np.ascontiguousarray(Linv.T)
    st.R = np.zeros((n, n))
    st.u = np.zeros(n + 1)
    st.d = np.zeros(n)
    st.z = np.zeros(n)
    st.r = np.zeros(n + 1)
    st.active = np.zeros(n + 1, dtype=np.int_)
    st.sign = np.ones(max(meq, 1))
    st.Aeq = Aeq_np
    st.Ain = Ain_np
    st.beq = np.ascontiguousarray(beq, dtype=np.float64).reshape(-1)
    st.bin_ = np.ascontiguousarray(bin_, dtype=np.float64).reshape(-1)
    st.nv = np.zeros(n)
    x_np = -st.J.base @ (st.J.base.T @ g_np) if n > 0 else np.zeros(0)
    x_np = np.ascontiguousarray(x_np)
    cdef double[::1] x = x_np
    inactive_np = np.ones(min_, dtype=np.int8)
    cdef signed char[::1] inactive = inactive_np
    cdef int it = 0, cid, p, j, i, drop_pos
    cdef double s_p, bv, zn, nn, t, t1, t2, u_p, ratio, best, sc, sv
    if max_iter <= 0:
        max_iter = 10 * (n + meq + min_) + 50

    for cid in range(meq):
        st.load_normal(cid)
        bv = st.normal_rhs(cid)
        s_p = -bv
        for j in range(n):
            s_p += st.nv[j] * x[j]
        if s_p > 0:
            st.sign[cid] = -1.0
            st.load_normal(cid)
            bv = -bv
            s_p = -s_p
        st.directions()
        zn = 0.0
        nn = 0.0
        for j in range(n):
            zn += st.z[j] * st.nv[j]
            nn += st.nv[j] * st.nv[j]
        if zn <= 1e-14 * (nn if nn > 1.0 else 1.0):
            if fabs(s_p) <= 1e-10 * (1.0 + fabs(bv)):
                continue
            return x_np, lam_eq, lam_in, QP_INFEASIBLE, it
        t = -s_p / zn
        for j in range(n):
            x[j] += t * st.z[j]
        for j in range(st.q):
            st.u[j] -= t * st.r[j]
        st.add()
        st.active[st.q - 1] = cid
        st.u[st.q - 1] = t
        it += 1

    while min_ > 0:
        p = -1
        best = 0.0
        for i in range(min_):
            if not inactive[i]:
                continue
            sv = st.bin_[i]
            sc = 1.0 + fabs(st.bin_[i])
            for j in range(n):
                sv -= st.Ain[i, j] * x[j]
                sc += fabs(st.Ain[i, j] * x[j])
            if sv < -1e-12 * sc and (p < 0 or sv < best):
                best = sv
                p = i
        if p < 0:
            break
        cid = meq + p
        st.load_normal(cid)
        bv = st.normal_rhs(cid)
        s_p = best
        u_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                return x_np, lam_eq, lam_in, QP_MAX_ITER, it
            st.directions()
            t1 = INFINITY
            drop_pos = -1
            for j in range(st.q):
                if st.active[j] >= meq and st.r[j] > 1e-14:
                    ratio = st.u[j] / st.r[j]
                    if ratio < t1:
                        t1 = ratio
                        drop_pos = j
            zn = 0.0
            nn = 0.0
            for j in range(n):
                zn += st.z[j] * st.nv[j]
                nn += st.nv[j] * st.nv[j]
            if zn > 1e-14 * (nn if nn > 1.0 else 1.0):
                t2 = -s_p / zn
            else:
                t2 = INFINITY
            t = t1 if t1 < t2 else t2
            if t == INFINITY:
                return x_np, lam_eq, lam_in, QP_INFEASIBLE, it
            if t2 == INFINITY:
                for j in range(st.q):
                    st.u[j] -= t * st.r[j]
                u_p += t
                inactive[st.active[drop_pos] - meq] = 1
                st.drop(drop_pos)
                continue
            for j in range(n):
                x[j] += t * st.z[j]
            for j in range(st.q):
                st.u[j] -= t * st.r[j]
            u_p += t
            if t2 <= t1:
                st.add()
                st.active[st.q - 1] = cid
                st.u[st.q - 1] = u_p
                inactive[p] = 0
                break
            inactive[st.active[drop_pos] - meq] = 1
            st.drop(drop_pos)
            s_p = -bv
            for j in range(n):
                s_p += st.nv[j] * x[j]

    for j in range(st.q):
        cid = st.active[j]
        if cid < meq:
            lam_eq[cid] = -st.sign[cid] * st.u[j]
        else:
            lam_in[cid - meq] = st.u[j] if st.u[j] > 0.0 else 0.0
    return x_np, lam_eq, lam_in, QP_OPTIMAL, it
