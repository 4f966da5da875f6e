"""Decision vector layout, objective terms and constraints of the pushing NLP.

The problem is written over an internal "full" vector

    y = [P_1..P_N (3N) | xi_n^m (3N(M+1)) | p_n^m (N(M+1)) | delta | T]

and every function is evaluated in y together with its y-gradient. The
optimizer's decision vector x is mapped to y by :meth:`PushNLP.expand`,
which is a constant selection for direct transcription and the Euler
roll-forward for single shooting; derivatives are chained through dy/dx.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .mechanics import GRAVITY, DEFAULT_SWEEP_SAMPLES, PusherContact, SupportModel
from .se2 import ConfigError, PlanarPose, PolygonObject, finite_difference_twist, wrap_angle

LOG_ETA = 1e-12
XI_BOUND = (1.0, 1.0, 50.0)


@dataclass(frozen=True)
class Weights:
    lambda_p: float = 0.1
    lambda_e: float = 0.1
    lambda_kl: float = 0.1
    lambda_s: float = 0.9
    lambda_theta: float = 0.1

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not (isinstance(v, (int, float)) and v >= 0 and math.isfinite(v)):
                raise ConfigError(f"weights.{k}: must be a finite non-negative number")


@dataclass(frozen=True)
class AssembleOptions:
    direct_transcription: bool = True
    free_time: bool = True
    use_kl: bool = False


@dataclass(eq=False)
class PushProblem:
    object: PolygonObject
    pushers: list
    support: SupportModel
    start: PlanarPose
    goal: PlanarPose
    N: int = 3
    T: float = 2.0
    weights: Weights = field(default_factory=Weights)
    epsilon: float = 1e-4
    gravity: tuple = GRAVITY
    sweep_samples: int = DEFAULT_SWEEP_SAMPLES
    dist_eta: float = 1e-6  # smoothing of the norms in d(.,.)
    kl_eta: float = 1e-6  # smoothing inside the KL logarithms of the objective
    name: str = "problem"

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ConfigError("N: need an integer >= 2")
        self.N = int(self.N)
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigError("T: must be a positive number of seconds")
        if not self.epsilon > 0:
            raise ConfigError("epsilon: must be positive")
        if not self.pushers:
            raise ConfigError("pushers: at least one pusher required")
        self.pushers = list(self.pushers)

    @property
    def M(self) -> int:
        return len(self.pushers) - 1

    @property
    def delta(self) -> float:
        return self.T / (self.N - 1)

    def with_friction(self, mu_p: float) -> "PushProblem":
        return replace(self, pushers=[p.with_friction(mu_p) for p in self.pushers])

    def goal_theta_unwrapped(self) -> float:
        """Goal angle shifted by 2 pi k to lie closest to the start angle."""
        return self.start.theta + wrap_angle(self.goal.theta - self.start.theta)


@dataclass(frozen=True)
class ObjectiveBreakdown:
    terminal: float
    path: float
    entropy: float  # lambda_e * sum p log p (<= 0); the objective adds -entropy
    kl: float
    total: float

    def as_dict(self) -> dict:
        return dict(terminal=self.terminal, path=self.path, entropy=self.entropy, kl=self.kl, total=self.total)


# ---------------------------------------------------------------- scalar terms


def entropy_cost(probs, eta: float = LOG_ETA) -> float:
    """sum p log(p + eta) over all entries (non-positive)."""
    p = np.asarray(probs, dtype=float)
    return float(np.sum(p * np.log(p + eta)))


def kl_cost(probs, eta: float = LOG_ETA) -> float:
    """sum over consecutive rows of KL(p_{n+1} || p_n), eta-smoothed."""
    p = np.atleast_2d(np.asarray(probs, dtype=float))
    a, b = p[1:], p[:-1]
    return float(np.sum(a * (np.log(a + eta) - np.log(b + eta))))


def dynamics_defect(poses, twists, probs, delta: float) -> np.ndarray:
    """Euler defects P_{n+1} - P_n - delta sum_m p_n^m xi_n^m, flattened.

    `poses` holds P_0..P_N (N+1, 3), `twists` is (N, M+1, 3), `probs` (N, M+1).
    """
    P = np.asarray(poses, dtype=float)
    xi = np.asarray(twists, dtype=float)
    p = np.asarray(probs, dtype=float)
    step = np.einsum("nm,nmk->nk", p, xi)
    return (P[1:] - P[:-1] - delta * step).reshape(-1)


def state_constraint_convex(pose, region) -> np.ndarray:
    q = np.asarray(pose, dtype=float)[:2]
    return region.A @ q - region.b


def sigmoid_blend(x: float, breakpoint: float, alpha: float) -> float:
    z = -alpha * (x - breakpoint)
    if z >= 0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def blend_weights(x: float, breaks: Sequence[float], alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Weights w_l = prod_{j<l} s_j prod_{j>=l} (1 - s_j) of each region and
    their derivatives in x."""
    s = _sigmoid(alpha * (x - np.asarray(breaks, dtype=float)))
    ds = alpha * s * (1.0 - s)
    L = len(breaks) + 1
    w = np.ones(L)
    dw = np.zeros(L)
    for l in range(L):
        for j in range(len(breaks)):
            f, df = (s[j], ds[j]) if j < l else (1.0 - s[j], -ds[j])
            dw[l] = dw[l] * f + w[l] * df
            w[l] *= f
    return w, dw


def _check_regions(obj: PolygonObject) -> int:
    rows = {len(r.b) for r in obj.regions}
    if len(rows) != 1:
        raise ConfigError("regions: the blended state constraint needs equal row counts in every region")
    if len(obj.regions) > 1 and len(obj.blend_breaks) != len(obj.regions) - 1:
        raise ConfigError("blend_breaks: count must be one less than the number of regions")
    return rows.pop()


def state_constraint_nonconvex(pose, obj: PolygonObject, alpha: float | None = None) -> np.ndarray:
    """Row-wise sigmoid blend of the per-region residuals along x."""
    _check_regions(obj)
    q = np.asarray(pose, dtype=float)[:2]
    a = obj.alpha if alpha is None else alpha
    w, _ = blend_weights(q[0], obj.blend_breaks, a)
    return sum(w[l] * (r.A @ q - r.b) for l, r in enumerate(obj.regions))


def _blend_rows(q, obj: PolygonObject) -> tuple[np.ndarray, np.ndarray]:
    """Blended residual rows and their (rows, 2) Jacobian in (x, y)."""
    w, dw = blend_weights(q[0], obj.blend_breaks, obj.alpha)
    val = np.zeros(len(obj.regions[0].b))
    jac = np.zeros((len(val), 2))
    for l, r in enumerate(obj.regions):
        f = r.A @ q - r.b
        val += w[l] * f
        jac += w[l] * r.A
        jac[:, 0] += dw[l] * f
    return val, jac


def smooth_norm(v, eta: float) -> tuple[float, np.ndarray]:
    """sqrt(|v|^2 + eta^2) - eta and its gradient."""
    v = np.asarray(v, dtype=float)
    s = math.sqrt(float(v @ v) + eta * eta)
    return s - eta, v / s


def _dist_and_grad(diff: np.ndarray, w: Weights, eta: float) -> tuple[float, np.ndarray]:
    a, ga = smooth_norm(diff[:2], eta)
    b, gb = smooth_norm(diff[2:3], eta)
    g = np.concatenate([w.lambda_s * ga, w.lambda_theta * gb])
    return w.lambda_s * a + w.lambda_theta * b, g


# ---------------------------------------------------------------- the bundle


class PushNLP:
    """Callable bundle over a flat decision vector for one fixed set of cones.

    cones[n][m] is the (H, 3) halfspace matrix of pusher m on segment n, or
    None where that twist is not a decision variable. A fixed `schedule`
    freezes the probabilities one-hot; fixed `regions` replace the blended
    state constraint with the exact constraint of region regions[n - 1] at
    pose n.
    """

    def __init__(
        self,
        problem: PushProblem,
        options: AssembleOptions,
        cones,
        schedule: Sequence[int] | None = None,
        regions: Sequence[int] | None = None,
    ):
        self.problem = problem
        self.options = options
        self.schedule = None if schedule is None else [int(s) for s in schedule]
        self.regions = None if regions is None else [int(r) for r in regions]
        N, M1 = problem.N, problem.M + 1
        self.N, self.M1 = N, M1
        if len(cones) != N:
            raise ValueError("cones: need one entry per segment")
        self.cones = cones
        self._rows = _check_regions(problem.object) if self.regions is None and not problem.object.is_convex else None
        self.goal = np.array([problem.goal.x, problem.goal.y, problem.goal_theta_unwrapped()])
        self.P0 = problem.start.as_array()

        # y layout
        self.iP = np.arange(3 * N)
        self.iX = 3 * N + np.arange(3 * N * M1)
        self.ip = 3 * N + 3 * N * M1 + np.arange(N * M1)
        self.id = 3 * N + 4 * N * M1
        self.iT = self.id + 1
        self.ny = self.iT + 1

        # free twists
        if self.schedule is None:
            self.twist_pairs = [(n, m) for n in range(N) for m in range(M1)]
            self.prob_vars = M1 > 1
            self.p_const = np.full((N, M1), 1.0 / M1) if M1 > 1 else np.ones((N, 1))
        else:
            if len(self.schedule) != N or any(not 0 <= s < M1 for s in self.schedule):
                raise ValueError("schedule: need N pusher indices in range")
            self.twist_pairs = [(n, self.schedule[n]) for n in range(N)]
            self.prob_vars = False
            self.p_const = np.zeros((N, M1))
            self.p_const[np.arange(N), self.schedule] = 1.0
        for n, m in self.twist_pairs:
            if cones[n][m] is None:
                raise ValueError(f"cones: missing cone for segment {n}, pusher {m}")

        # x layout
        k = 0
        self.dt = options.direct_transcription
        self.xP = np.arange(k, k + 3 * N) if self.dt else np.zeros(0, dtype=int)
        k += len(self.xP)
        self.xX = np.arange(k, k + 3 * len(self.twist_pairs))
        k += len(self.xX)
        self.xp = np.arange(k, k + N * M1) if self.prob_vars else np.zeros(0, dtype=int)
        k += len(self.xp)
        if options.free_time:
            self.xd, self.xT = k, k + 1
            k += 2
        else:
            self.xd = self.xT = None
        self.n = k

        # constant part of dy/dx
        E = np.zeros((self.ny, self.n))
        if self.dt:
            E[self.iP, self.xP] = 1.0
        for j, (n, m) in enumerate(self.twist_pairs):
            base = self.iX[0] + 3 * (n * M1 + m)
            E[base : base + 3, self.xX[3 * j : 3 * j + 3]] = np.eye(3)
        if self.prob_vars:
            E[self.ip, self.xp] = 1.0
        if options.free_time:
            E[self.id, self.xd] = 1.0
            E[self.iT, self.xT] = 1.0
        self._E = E

        # bounds
        xmin, xmax, ymin, ymax = problem.object.bounding_box()
        pad = 0.5 * max(xmax - xmin, ymax - ymin)
        lb = np.full(self.n, -np.inf)
        ub = np.full(self.n, np.inf)
        if self.dt:
            lb[self.xP] = np.tile([xmin - pad, ymin - pad, -4 * math.pi], N)
            ub[self.xP] = np.tile([xmax + pad, ymax + pad, 4 * math.pi], N)
        xb = np.array(XI_BOUND)
        lb[self.xX] = np.tile(-xb, len(self.twist_pairs))
        ub[self.xX] = np.tile(xb, len(self.twist_pairs))
        if self.prob_vars:
            lb[self.xp] = 0.0
            ub[self.xp] = 1.0
        if options.free_time:
            T0 = problem.T
            lb[self.xT], ub[self.xT] = 0.05 * T0, 20.0 * T0
            lb[self.xd], ub[self.xd] = 0.05 * T0 / (N - 1), 20.0 * T0 / (N - 1)
        self.lb, self.ub = lb, ub

        # diagonal scaling handed to the solver
        half = 0.5 * max(xmax - xmin, ymax - ymin)
        sc = np.ones(self.n)
        if self.dt:
            sc[self.xP] = np.tile([half, half, 1.0], N)
        sc[self.xX] = np.tile([half / problem.delta, half / problem.delta, 1.0 / problem.delta], len(self.twist_pairs))
        if options.free_time:
            sc[self.xT] = problem.T
            sc[self.xd] = problem.delta
        self.x_scale = sc

        # inequality structure: mc rows per free twist, then state rows per pose
        self._mc_blocks = []
        r = 0
        for n, m in self.twist_pairs:
            H = np.asarray(cones[n][m], dtype=float)
            self._mc_blocks.append((r, H, self.iX[0] + 3 * (n * M1 + m)))
            r += len(H)
        self.n_mc = r
        self._state_rows = []
        for n in range(1, N + 1):
            if self.regions is not None:
                reg = problem.object.regions[self.regions[n - 1]]
                self._state_rows.append((r, n, reg))
                r += len(reg.b)
            elif problem.object.is_convex:
                reg = problem.object.regions[0]
                self._state_rows.append((r, n, reg))
                r += len(reg.b)
            else:
                self._state_rows.append((r, n, None))
                r += self._rows
        self.n_state = r - self.n_mc
        # per-step displacement rows |delta * xi| <= step_cap for every free
        # twist; without them a vanishing p times a large delta * xi still moves
        # the object and the relaxation stops meaning anything
        self.step_cap = np.array([2.0 * half, 2.0 * half, math.pi])
        self._step_rows = []
        for n, m in self.twist_pairs:
            self._step_rows.append((r, self.iX[0] + 3 * (n * M1 + m)))
            r += 6
        self.n_in = r
        self.n_eq = (N if self.prob_vars else 0) + (3 * N if self.dt else 0) + (1 if options.free_time else 0)
        self._cache_x = None
        self._cache = None

    # ---------------------------------------------------------- x <-> y

    def split_y(self, y):
        N, M1 = self.N, self.M1
        P = np.vstack([self.P0, y[self.iP].reshape(N, 3)])
        xi = y[self.iX].reshape(N, M1, 3)
        p = y[self.ip].reshape(N, M1)
        return P, xi, p, y[self.id], y[self.iT]

    def expand(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if self._cache_x is not None and np.array_equal(x, self._cache_x):
            return self._cache
        N, M1 = self.N, self.M1
        y = self._E @ x
        if not self.prob_vars:
            y[self.ip] = self.p_const.reshape(-1)
        if not self.options.free_time:
            y[self.iT] = self.problem.T
            y[self.id] = self.problem.delta
        E = self._E
        if not self.dt:
            E = E.copy()
            xi = y[self.iX].reshape(N, M1, 3)
            p = y[self.ip].reshape(N, M1)
            d = y[self.id]
            P = self.P0.copy()
            # rows of dP_k/dx accumulate over earlier segments
            acc = np.zeros((3, self.n))
            for k in range(N):
                step = p[k] @ xi[k]
                P = P + d * step
                y[self.iP[3 * k : 3 * k + 3]] = P
                for m in range(M1):
                    bx = self.iX[0] + 3 * (k * M1 + m)
                    acc += d * p[k, m] * E[bx : bx + 3]
                    acc += np.outer(d * xi[k, m], E[self.ip[k * M1 + m]])
                acc += np.outer(step, E[self.id])
                E[self.iP[3 * k : 3 * k + 3]] = acc
        self._cache_x = x.copy()
        self._cache = (y, E)
        return y, E

    def x_from_parts(self, P, xi, p=None, delta=None, T=None) -> np.ndarray:
        """Pack poses P_0..P_N, twists (N, M+1, 3), probs and time into x."""
        x = np.zeros(self.n)
        P = np.asarray(P, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if self.dt:
            x[self.xP] = P[1:].reshape(-1)
        for j, (n, m) in enumerate(self.twist_pairs):
            x[self.xX[3 * j : 3 * j + 3]] = xi[n, m]
        if self.prob_vars:
            x[self.xp] = np.asarray(p, dtype=float).reshape(-1)
        if self.options.free_time:
            T = self.problem.T if T is None else T
            x[self.xT] = T
            x[self.xd] = T / (self.N - 1) if delta is None else delta
        return np.clip(x, self.lb, self.ub)

    def parts(self, x):
        y, _ = self.expand(x)
        return self.split_y(y)

    def initializer(self) -> np.ndarray:
        """Linear pose interpolation, finite-difference twists, uniform probs."""
        N = self.N
        P = np.array([self.P0 + (self.goal - self.P0) * (k / N) for k in range(N + 1)])
        d = self.problem.delta
        xi = np.zeros((N, self.M1, 3))
        for k in range(N):
            tw = finite_difference_twist(
                PlanarPose(*P[k]), PlanarPose(P[k + 1][0], P[k + 1][1], P[k + 1][2]), d
            ).as_array()
            # the stored poses wrap theta; the planner works with unwrapped values
            tw[2] = (P[k + 1, 2] - P[k, 2]) / d if abs(P[k + 1, 2] - P[k, 2]) > math.pi else tw[2]
            xi[k, :] = tw
        p = np.full((N, self.M1), 1.0 / self.M1)
        return self.x_from_parts(P, xi, p)

    # ---------------------------------------------------------- objective

    def _objective_y(self, y):
        w = self.problem.weights
        eta = self.problem.dist_eta
        P, xi, p, _, _ = self.split_y(y)
        g = np.zeros(self.ny)
        N, M1 = self.N, self.M1
        term, gt = _dist_and_grad(P[N] - self.goal, w, eta)
        g[self.iP[3 * (N - 1) : 3 * N]] += gt
        path = 0.0
        for k in range(N):
            v, gk = _dist_and_grad(P[k + 1] - P[k], w, eta)
            path += w.lambda_p * v
            g[self.iP[3 * k : 3 * k + 3]] += w.lambda_p * gk
            if k > 0:
                g[self.iP[3 * (k - 1) : 3 * k]] -= w.lambda_p * gk
        ent = 0.0
        kl = 0.0
        if self.prob_vars:
            lg = np.log(p + LOG_ETA)
            ent = w.lambda_e * float(np.sum(p * lg))
            g[self.ip] += -w.lambda_e * (lg + p / (p + LOG_ETA)).reshape(-1)
            if self.options.use_kl and N > 1:
                a, b = p[1:], p[:-1]
                ke = self.problem.kl_eta
                la, lb = np.log(a + ke), np.log(b + ke)
                kl = w.lambda_kl * float(np.sum(a * (la - lb)))
                gp = np.zeros((N, M1))
                gp[1:] += w.lambda_kl * (la - lb + a / (a + ke))
                gp[:-1] += -w.lambda_kl * a / (b + ke)
                g[self.ip] += gp.reshape(-1)
        else:
            ent = w.lambda_e * entropy_cost(p)
            if self.options.use_kl:
                kl = w.lambda_kl * kl_cost(p, self.problem.kl_eta)
        total = term + path - ent + kl
        return ObjectiveBreakdown(term, path, ent, kl, total), g

    def f(self, x) -> float:
        y, _ = self.expand(x)
        return self._objective_y(y)[0].total

    def grad(self, x) -> np.ndarray:
        y, E = self.expand(x)
        return self._objective_y(y)[1] @ E

    def breakdown(self, x) -> ObjectiveBreakdown:
        y, _ = self.expand(x)
        return self._objective_y(y)[0]

    # ---------------------------------------------------------- constraints

    def _eq_y(self, y):
        N, M1 = self.N, self.M1
        P, xi, p, d, T = self.split_y(y)
        vals, rows = [], []
        if self.prob_vars:
            vals.append(p.sum(axis=1) - 1.0)
            J = np.zeros((N, self.ny))
            for k in range(N):
                J[k, self.ip[k * M1 : (k + 1) * M1]] = 1.0
            rows.append(J)
        if self.dt:
            vals.append(dynamics_defect(P, xi, p, d))
            J = np.zeros((3 * N, self.ny))
            for k in range(N):
                r = slice(3 * k, 3 * k + 3)
                J[r, self.iP[3 * k : 3 * k + 3]] = np.eye(3)
                if k > 0:
                    J[r, self.iP[3 * (k - 1) : 3 * k]] = -np.eye(3)
                for m in range(M1):
                    bx = self.iX[0] + 3 * (k * M1 + m)
                    J[r, bx : bx + 3] = -d * p[k, m] * np.eye(3)
                    J[r, self.ip[k * M1 + m]] = -d * xi[k, m]
                J[r, self.id] = -(p[k] @ xi[k])
            rows.append(J)
        if self.options.free_time:
            vals.append(np.array([d * (N - 1) - T]))
            J = np.zeros((1, self.ny))
            J[0, self.id] = N - 1
            J[0, self.iT] = -1.0
            rows.append(J)
        if not vals:
            return np.zeros(0), np.zeros((0, self.ny))
        return np.concatenate(vals), np.vstack(rows)

    def _in_y(self, y):
        P = np.vstack([self.P0, y[self.iP].reshape(self.N, 3)])
        c = np.zeros(self.n_in)
        J = np.zeros((self.n_in, self.ny))
        for r, H, bx in self._mc_blocks:
            c[r : r + len(H)] = H @ y[bx : bx + 3]
            J[r : r + len(H), bx : bx + 3] = H
        for r, n, reg in self._state_rows:
            q = P[n, :2]
            cols = self.iP[3 * (n - 1) : 3 * (n - 1) + 2]
            if reg is not None:
                k = len(reg.b)
                c[r : r + k] = reg.A @ q - reg.b
                J[r : r + k, cols] = reg.A
            else:
                v, jq = _blend_rows(q, self.problem.object)
                c[r : r + len(v)] = v
                J[r : r + len(v), cols] = jq
        d = y[self.id]
        for r, bx in self._step_rows:
            xi = y[bx : bx + 3]
            c[r : r + 3] = d * xi - self.step_cap
            c[r + 3 : r + 6] = -d * xi - self.step_cap
            for k in range(3):
                J[r + k, bx + k], J[r + k, self.id] = d, xi[k]
                J[r + 3 + k, bx + k], J[r + 3 + k, self.id] = -d, -xi[k]
        return c, J

    def ceq(self, x):
        y, _ = self.expand(x)
        return self._eq_y(y)[0]

    def jeq(self, x):
        y, E = self.expand(x)
        return self._eq_y(y)[1] @ E

    def cin(self, x):
        y, _ = self.expand(x)
        return self._in_y(y)[0]

    def jin(self, x):
        y, E = self.expand(x)
        return self._in_y(y)[1] @ E

    def mc_residuals(self, x) -> np.ndarray:
        return self.cin(x)[: self.n_mc]

    def state_residuals(self, x) -> np.ndarray:
        return self.cin(x)[self.n_mc : self.n_mc + self.n_state]


def assemble(
    problem: PushProblem,
    options: AssembleOptions = AssembleOptions(),
    cones=None,
    schedule=None,
    regions=None,
) -> PushNLP:
    """Bundle for `problem`. Without explicit `cones`, every motion cone is
    built at the initializer's interpolated poses."""
    if cones is None:
        cones = build_cones(problem, interpolated_poses(problem)[:-1], schedule)
    return PushNLP(problem, options, cones, schedule, regions)


def interpolated_poses(problem: PushProblem) -> np.ndarray:
    P0 = problem.start.as_array()
    G = np.array([problem.goal.x, problem.goal.y, problem.goal_theta_unwrapped()])
    return np.array([P0 + (G - P0) * (k / problem.N) for k in range(problem.N + 1)])


def build_cones(problem: PushProblem, poses, schedule=None, cache=None):
    """Halfspace matrices cones[n][m] at poses[n]; pushers without a motion
    cone at that pose (no stable push) get the apex cone (twist pinned to zero)."""
    from .mechanics import generalized_friction_cone, motion_cone_or_blocked

    wcs = [generalized_friction_cone(p) for p in problem.pushers]
    out = []
    for n, pose in enumerate(poses):
        P = PlanarPose(float(pose[0]), float(pose[1]), float(pose[2]))
        row = []
        for m, pusher in enumerate(problem.pushers):
            if schedule is not None and schedule[n] != m:
                row.append(None)
                continue
            key = (m, round(P.x, 15), round(P.y, 15), round(P.theta, 15))
            if cache is not None and key in cache:
                row.append(cache[key])
                continue
            mc = motion_cone_or_blocked(
                pusher, problem.support, P, problem.object, problem.gravity, problem.sweep_samples, wcs[m]
            )
            if cache is not None:
                cache[key] = mc.halfspaces
            row.append(mc.halfspaces)
        out.append(row)
    return out
