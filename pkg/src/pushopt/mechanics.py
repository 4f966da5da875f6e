"""Friction cones, ellipsoidal limit surface, stable-push force balance and
polyhedral motion cones.

Frames: O is the object frame (origin at the centre of mass). S is the
support (gripper) frame, located at the grasp position (x, y) of a
:class:`PlanarPose` and rotated by its theta relative to O. The gripper is
fixed in the world, so S is also the world frame and gravity is constant in
S. A support wrench w_s acts on the object; the limit-surface normal
``A w_s`` is the direction in which the support slides relative to the
object. Motion-cone generators are returned as rates of the grasp pose
(dx, dy, dtheta) expressed in O, which is exactly the quantity integrated by
the planner's Euler dynamics.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .se2 import (
    ConfigError,
    PlanarPose,
    PlanarTwist,
    PlanarWrench,
    PolygonObject,
    adjoint_from_frame,
    rotation,
)

GRAVITY = (0.0, -9.81)
DEFAULT_SWEEP_SAMPLES = 8


class NoStablePush(RuntimeError):
    """The pusher wrench cannot be balanced by a sliding support wrench."""


class EmptyCone(RuntimeError):
    """Fewer than two distinct twist directions survived the sweep."""


@dataclass(frozen=True, eq=False)
class PusherContact:
    points: np.ndarray
    normals: np.ndarray
    mu_p: float
    name: str = "pusher"

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        nrm = np.atleast_2d(np.asarray(self.normals, dtype=float))
        if pts.shape[1] != 2 or pts.shape != nrm.shape or len(pts) < 1:
            raise ConfigError("contacts: need K >= 1 points and matching normals of shape (K, 2)")
        if np.any(np.abs(np.linalg.norm(nrm, axis=1) - 1.0) > 1e-9):
            raise ConfigError("contacts: normals must be unit length")
        if not self.mu_p > 0:
            raise ConfigError("mu_p: must be positive")
        pts.setflags(write=False)
        nrm.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "normals", nrm)
        object.__setattr__(self, "mu_p", float(self.mu_p))

    def with_friction(self, mu_p: float) -> "PusherContact":
        return PusherContact(self.points, self.normals, mu_p, self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "contacts": [{"point": p.tolist(), "normal": n.tolist()} for p, n in zip(self.points, self.normals)],
            "mu_p": self.mu_p,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PusherContact":
        try:
            contacts = d["contacts"]
            pts = [c["point"] for c in contacts]
            nrm = [c["normal"] for c in contacts]
            return cls(np.array(pts, float), np.array(nrm, float), float(d["mu_p"]), str(d.get("name", "pusher")))
        except KeyError as exc:
            raise ConfigError(f"pusher definition: missing field {exc.args[0]!r}") from None

    @classmethod
    def load(cls, path: str | Path) -> "PusherContact":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SupportModel:
    mu_s: float
    F_N: float
    r: float
    e: float

    def __post_init__(self):
        for name in ("mu_s", "F_N", "r"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name}: must be positive, got {v!r}")
        if not 0.0 <= self.e <= 1.0:
            raise ConfigError(f"e: must lie in [0, 1], got {self.e!r}")
        if self.e == 0.0:
            raise ConfigError("e: zero pressure constant makes the limit surface degenerate")

    @property
    def A_diag(self) -> np.ndarray:
        return np.array([1.0, 1.0, (self.r * self.e) ** -2])

    @property
    def A(self) -> np.ndarray:
        return np.diag(self.A_diag)

    @property
    def friction_scale(self) -> float:
        return self.mu_s * self.F_N

    def to_dict(self) -> dict:
        return {"mu_s": self.mu_s, "F_N": self.F_N, "r": self.r, "e": self.e}

    @classmethod
    def from_dict(cls, d: dict) -> "SupportModel":
        try:
            return cls(float(d["mu_s"]), float(d["F_N"]), float(d["r"]), float(d["e"]))
        except KeyError as exc:
            raise ConfigError(f"support definition: missing field {exc.args[0]!r}") from None

    @classmethod
    def load(cls, path: str | Path) -> "SupportModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --- polyhedral cones -----------------------------------------------------


def _unit_rows(V: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(V, axis=1)
    return V / n[:, None]


def _dedup(U: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    keep: list[int] = []
    for i in range(len(U)):
        if all(np.max(np.abs(U[i] - U[j])) > tol for j in keep):
            keep.append(i)
    return np.array(keep, dtype=int)


def _hull2d(P: np.ndarray) -> list[int]:
    """Monotone-chain convex hull, CCW, collinear points dropped."""
    order = sorted(range(len(P)), key=lambda i: (P[i, 0], P[i, 1]))
    if len(order) <= 2:
        return order

    def cross(o, a, b):
        return (P[a, 0] - P[o, 0]) * (P[b, 1] - P[o, 1]) - (P[a, 1] - P[o, 1]) * (P[b, 0] - P[o, 0])

    lower: list[int] = []
    for i in order:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], i) <= 1e-15:
            lower.pop()
        lower.append(i)
    upper: list[int] = []
    for i in reversed(order):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], i) <= 1e-15:
            upper.pop()
        upper.append(i)
    return lower[:-1] + upper[:-1]


def conic_hull(V: np.ndarray, scale=None, flat_tol: float = 1e-10) -> tuple[list[int], np.ndarray, str]:
    """Extreme rays and facet normals of the cone spanned by the rows of `V`.

    The hull is computed in coordinates ``v * scale`` (default: unscaled) so
    mixed-unit vectors can be balanced; normals are mapped back. Returns
    ``(extreme, normals, kind)`` where ``extreme`` indexes V in cyclic (or
    end-to-end for a flat wedge) order, ``normals`` are unit rows with the
    cone equal to ``{v : normals @ v <= 0}``, and ``kind`` is one of
    ``"ray"``, ``"wedge"``, ``"solid"``, or ``"nonpointed"`` / ``"full"`` when
    the generators contain a line (``"full"``: they span every direction and
    there are no normals).
    """
    D = np.ones(V.shape[1]) if scale is None else np.asarray(scale, dtype=float)
    extreme, normals, kind = _conic_hull_unit(_unit_rows(V * D), flat_tol)
    normals = _unit_rows(normals * D)
    return extreme, normals, kind


def _pointing_axis(U: np.ndarray) -> np.ndarray:
    """Unit axis a maximizing min_i U_i . a (the max-margin direction), from
    the QP  min |a|^2  s.t.  U a >= 1."""
    n = U.shape[1]
    a, _, _, st, _ = kernels.qp_solve(np.eye(n), np.zeros(n), np.zeros((0, n)), np.zeros(0), -U, -np.ones(len(U)))
    if st != kernels.QP_OPTIMAL or not np.all(np.isfinite(a)):
        raise ValueError("cone is not pointed")
    axis = a / np.linalg.norm(a)
    if np.min(U @ axis) <= 1e-9:
        raise ValueError("cone is not pointed")
    return axis


def _facets_by_pairs(U: np.ndarray, tol: float = 1e-9) -> tuple[list[int], np.ndarray, str]:
    """Facets of a cone that contains a line: every plane through two
    generators with all generators on one side. No facet means the cone is
    the whole space. Such a cone has no extreme rays, so every generator is
    returned."""
    normals: list[np.ndarray] = []
    m = len(U)
    for i in range(m):
        for j in range(i + 1, m):
            nrm = np.cross(U[i], U[j])
            ln = np.linalg.norm(nrm)
            if ln < 1e-9:
                continue
            nrm /= ln
            r = U @ nrm
            if np.max(r) > tol:
                if np.min(r) < -tol:
                    continue
                nrm, r = -nrm, -r
            if any(np.max(np.abs(nrm - q)) < 1e-9 for q in normals):
                continue
            normals.append(nrm)
    H = np.array(normals) if normals else np.zeros((0, 3))
    return list(range(m)), H, "nonpointed" if normals else "full"


def _conic_hull_unit(U: np.ndarray, flat_tol: float) -> tuple[list[int], np.ndarray, str]:
    m = U.shape[0]
    try:
        axis = _pointing_axis(U)
    except ValueError:
        return _facets_by_pairs(U)
    if m == 1:
        g = U[0]
        e1 = np.cross(g, [1.0, 0.0, 0.0] if abs(g[0]) < 0.9 else [0.0, 1.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(g, e1)
        return [0], np.array([e1, -e1, e2, -e2, -g]), "ray"
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    h = U @ axis
    P = np.column_stack([(U @ e1) / h, (U @ e2) / h])
    # flatness: spread of projected points about their principal line
    c = P.mean(axis=0)
    _, sv, vt = np.linalg.svd(P - c, full_matrices=False)
    if sv[0] < 1e-12:
        return [0], _conic_hull_unit(U[:1], flat_tol)[1], "ray"
    spread = np.max(np.abs((P - c) @ vt[1])) if len(sv) > 1 else 0.0
    if spread <= flat_tol:
        t = (P - c) @ vt[0]
        lo, hi = int(np.argmin(t)), int(np.argmax(t))
        g_lo, g_hi = U[lo], U[hi]
        n_p = np.cross(g_lo, g_hi)
        n_p /= np.linalg.norm(n_p)
        a = np.cross(n_p, g_lo)
        a /= np.linalg.norm(a)
        if a @ g_hi > 0:
            a = -a
        b = np.cross(n_p, g_hi)
        b /= np.linalg.norm(b)
        if b @ g_lo > 0:
            b = -b
        return [lo, hi], np.array([n_p, -n_p, a, b]), "wedge"
    hull = _hull2d(P)
    normals = []
    k = len(hull)
    # the max-margin axis can sit on the boundary; orient with a strictly
    # interior direction instead
    inner = U[hull].mean(axis=0)
    for i in range(k):
        gi, gj = U[hull[i]], U[hull[(i + 1) % k]]
        nrm = np.cross(gi, gj)
        nrm /= np.linalg.norm(nrm)
        if nrm @ inner > 0:
            nrm = -nrm
        normals.append(nrm)
    return hull, np.array(normals), "solid"


@dataclass(frozen=True, eq=False)
class WrenchCone:
    generators: np.ndarray  # (G, 3) unit wrench rays, extreme and ordered
    halfspaces: np.ndarray  # (H, 3) unit normals, cone = {w : H w <= 0}
    kind: str = "solid"

    def residuals(self, w) -> np.ndarray:
        return self.halfspaces @ np.asarray(w, dtype=float)

    def boundary_pairs(self) -> list[tuple[int, int]]:
        g = len(self.generators)
        if self.kind == "ray" or g < 2:
            return []
        if self.kind == "wedge":
            return [(0, 1)]
        return [(i, (i + 1) % g) for i in range(g)]


@dataclass(frozen=True)
class StablePushSolution:
    w_s_hat: np.ndarray  # unit support wrench in S, on the limit surface
    a: float  # pusher wrench magnitude
    twist_dir: PlanarTwist  # normalize(A w_s_hat), in S
    residual: float = 0.0


@dataclass(frozen=True, eq=False)
class MotionCone:
    """Polyhedral motion cone in grasp-pose-rate coordinates (object frame)."""

    generators: np.ndarray  # (G, 3) unit twists
    halfspaces: np.ndarray  # (H, 3) unit normals; cone = {xi : H xi <= 0}
    kind: str
    pose: PlanarPose
    pusher_wrenches: np.ndarray  # (G, 3) unit pusher wrench behind each generator
    support_wrenches: np.ndarray  # (G, 3) limit-surface wrench in S for each generator
    magnitudes: np.ndarray  # (G,) pusher magnitude a for each generator
    extreme: tuple[int, ...] = ()

    @property
    def extreme_generators(self) -> np.ndarray:
        return self.generators[list(self.extreme)] if self.extreme else self.generators


def friction_cone_edges(contact_point, normal, mu_p: float) -> tuple[PlanarWrench, PlanarWrench]:
    """Edge forces of a point-contact friction cone as object-frame wrenches.

    The local contact frame has its first axis along the inward normal, so
    the edges are unit forces at +/- arctan(mu_p) about it.
    """
    beta = math.atan(max(mu_p, 0.0))
    nx, ny = float(normal[0]), float(normal[1])
    ad = adjoint_from_frame(contact_point, math.atan2(ny, nx))
    edges = []
    for s in (1.0, -1.0):
        f_local = np.array([math.cos(beta), s * math.sin(beta), 0.0])
        edges.append(PlanarWrench.from_array(ad @ f_local))
    return edges[0], edges[1]


def generalized_friction_cone(pusher: PusherContact) -> WrenchCone:
    rays = []
    for p, n in zip(pusher.points, pusher.normals):
        e1, e2 = friction_cone_edges(p, n, pusher.mu_p)
        rays.extend([e1.as_array(), e2.as_array()])
    U = _unit_rows(np.array(rays))
    U = U[_dedup(U)]
    order, normals, kind = conic_hull(U)
    return WrenchCone(U[order], normals, kind)


def gravity_wrench(mass: float, theta: float, gravity: Sequence[float] = GRAVITY) -> np.ndarray:
    """Weight of the object as an object-frame wrench at the centre of mass."""
    f = mass * (rotation(theta) @ np.asarray(gravity, dtype=float))
    return np.array([f[0], f[1], 0.0])


def support_adjoint(pose: PlanarPose) -> np.ndarray:
    """Ad^T mapping support-frame wrenches to the object frame."""
    return adjoint_from_frame((pose.x, pose.y), pose.theta)


def solve_stable_push(
    w_p_hat,
    support: SupportModel,
    gravity_wrench,
    adjoint: np.ndarray | None = None,
) -> StablePushSolution:
    """Force balance of a stable push with a sliding support.

    Solves ``a w_p + mu_s F_N Ad^T w_s + m g = 0`` with ``w_s' A w_s = 1``
    and ``a >= 0`` by Newton iteration (six seeds on the ellipsoid axes).
    """
    wp = np.asarray(w_p_hat.as_array() if isinstance(w_p_hat, PlanarWrench) else w_p_hat, dtype=float)
    mg = np.asarray(
        gravity_wrench.as_array() if isinstance(gravity_wrench, PlanarWrench) else gravity_wrench, dtype=float
    )
    adT = np.eye(3) if adjoint is None else np.asarray(adjoint, dtype=float)
    ws, a, ok, res = kernels.stable_push_batch(wp[None, :], adT, mg, support.friction_scale, support.A_diag)
    if not ok[0]:
        raise NoStablePush("push cannot be balanced by the support")
    w = ws[0]
    t = support.A_diag * w
    return StablePushSolution(w, float(a[0]), PlanarTwist.from_array(t / np.linalg.norm(t)), float(res[0]))


def force_balance_residual(w_p_hat, a: float, w_s, support: SupportModel, gravity_wrench, adjoint=None) -> float:
    adT = np.eye(3) if adjoint is None else np.asarray(adjoint, dtype=float)
    r = a * np.asarray(w_p_hat, float) + support.friction_scale * adT @ np.asarray(w_s, float) + np.asarray(
        gravity_wrench, float
    )
    return float(np.max(np.abs(r)))


def twist_scale(support: SupportModel) -> np.ndarray:
    """Coordinate scaling (1, 1, r e) that balances translation and rotation
    rates on the limit surface."""
    return np.array([1.0, 1.0, support.r * support.e])


def sweep_wrenches(cone: WrenchCone, samples: int = DEFAULT_SWEEP_SAMPLES) -> np.ndarray:
    """Extreme rays of the pusher cone plus `samples` rays along each boundary
    facet between adjacent extreme rays."""
    out = [g for g in cone.generators]
    for i, j in cone.boundary_pairs():
        gi, gj = cone.generators[i], cone.generators[j]
        for k in range(1, samples + 1):
            t = k / (samples + 1)
            v = (1.0 - t) * gi + t * gj
            out.append(v / np.linalg.norm(v))
    return np.array(out)


def motion_cone(
    pusher: PusherContact,
    support: SupportModel,
    pose: PlanarPose,
    obj: PolygonObject,
    gravity: Sequence[float] = GRAVITY,
    samples: int = DEFAULT_SWEEP_SAMPLES,
    wrench_cone: WrenchCone | None = None,
) -> MotionCone:
    """Polyhedral motion cone of `pusher` with the gripper at `pose`."""
    wc = wrench_cone if wrench_cone is not None else generalized_friction_cone(pusher)
    W = sweep_wrenches(wc, samples)
    adT = support_adjoint(pose)
    mg = gravity_wrench(obj.mass, pose.theta, gravity)
    ws, a, ok, _ = kernels.stable_push_batch(W, adT, mg, support.friction_scale, support.A_diag)
    if not np.all(ok):
        raise NoStablePush(f"{int(np.sum(ok == 0))} swept pusher wrenches cannot be balanced at {pose}")
    tw = ws * support.A_diag
    tw = _unit_rows(tw)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    gen = np.column_stack([c * tw[:, 0] - s * tw[:, 1], s * tw[:, 0] + c * tw[:, 1], tw[:, 2]])
    keep = _dedup(gen, 1e-10)
    if len(keep) < 2:
        raise EmptyCone(f"motion cone at {pose} has fewer than 2 distinct directions")
    gen, W, ws, a = gen[keep], W[keep], ws[keep], a[keep]
    try:
        extreme, normals, kind = conic_hull(gen, scale=twist_scale(support))
    except ValueError as exc:
        raise EmptyCone(str(exc)) from None
    return MotionCone(gen, normals, kind, pose, W, ws, a, tuple(int(i) for i in extreme))


def mc_membership(xi, cone: MotionCone) -> np.ndarray:
    """Halfspace residuals ``n_j . xi``; xi is in the cone iff all are <= 0."""
    v = xi.as_array() if isinstance(xi, PlanarTwist) else np.asarray(xi, dtype=float)
    return cone.halfspaces @ v


# generator rows are grasp-pose rates; halfspace rows are unit normals in the same space
CONE_CSV_COLUMNS = ("vx_m_per_s", "vy_m_per_s", "omega_rad_per_s")


def export_cone_csv(cone: MotionCone, path: str | Path) -> None:
    """Write generators and halfspace normals as rows tagged by kind."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "index", *CONE_CSV_COLUMNS])
        for i, g in enumerate(cone.generators):
            w.writerow(["generator", i, *(repr(float(v)) for v in g)])
        for i, h in enumerate(cone.halfspaces):
            w.writerow(["halfspace", i, *(repr(float(v)) for v in h)])


def read_cone_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    gens, hs = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            v = [float(row[c]) for c in CONE_CSV_COLUMNS]
            (gens if row["kind"] == "generator" else hs).append(v)
    return np.array(gens), np.array(hs)


def blocked_cone(pose: PlanarPose) -> MotionCone:
    """Apex-only cone ({0}) used for a pusher that has no motion cone at
    `pose`; membership then pins the twist to zero."""
    H = np.vstack([np.eye(3), -np.eye(3)])
    z = np.zeros((0, 3))
    return MotionCone(z, H, "apex", pose, z, z, np.zeros(0))


def motion_cone_or_blocked(pusher, support, pose, obj, gravity=GRAVITY, samples=DEFAULT_SWEEP_SAMPLES, wrench_cone=None):
    try:
        return motion_cone(pusher, support, pose, obj, gravity, samples, wrench_cone)
    except (NoStablePush, EmptyCone):
        return blocked_cone(pose)
