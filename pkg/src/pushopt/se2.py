"""Planar rigid-body geometry: poses, twists, wrenches, adjoints and polygons.

Frame convention used throughout the package: a single abstract plane with
axes (1, 2) and rotation about the normal. Twists are (v1, v2, omega),
wrenches are (f1, f2, tau) with tau = r1 * f2 - r2 * f1.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised when user supplied geometry or configuration is invalid."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    t = math.remainder(float(theta), 2.0 * math.pi)
    if t <= -math.pi:
        t += 2.0 * math.pi
    return t


def _check_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ConfigError(f"{name}: non-finite value {v!r}")


@dataclass(frozen=True)
class PlanarPose:
    """Grasp pose: position (x, y) of the support contact in the object frame
    and relative orientation theta."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        _check_finite("PlanarPose", self.x, self.y, self.theta)
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @classmethod
    def identity(cls) -> "PlanarPose":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, a) -> "PlanarPose":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def inverse(self) -> "PlanarPose":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return PlanarPose(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)


@dataclass(frozen=True)
class PlanarTwist:
    v1: float
    v2: float
    omega: float

    def __post_init__(self):
        _check_finite("PlanarTwist", self.v1, self.v2, self.omega)

    @classmethod
    def from_array(cls, a) -> "PlanarTwist":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.v1, self.v2, self.omega], dtype=float)


@dataclass(frozen=True)
class PlanarWrench:
    f1: float
    f2: float
    tau: float

    def __post_init__(self):
        _check_finite("PlanarWrench", self.f1, self.f2, self.tau)

    @classmethod
    def from_array(cls, a) -> "PlanarWrench":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.f1, self.f2, self.tau], dtype=float)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def adjoint_from_frame(origin: Sequence[float], rotation_angle: float) -> np.ndarray:
    """Transpose adjoint mapping a wrench given in a local frame (located at
    `origin`, rotated by `rotation_angle`) to the parent frame.

    Forces are rotated; the torque picks up ``r x f``.
    """
    ox, oy = float(origin[0]), float(origin[1])
    _check_finite("adjoint_from_frame", ox, oy, rotation_angle)
    c, s = math.cos(rotation_angle), math.sin(rotation_angle)
    # tau' = tau + ox * f2' - oy * f1' with f' = R f
    return np.array(
        [
            [c, -s, 0.0],
            [s, c, 0.0],
            [ox * s - oy * c, ox * c + oy * s, 1.0],
        ]
    )


def pose_compose(a: PlanarPose, b: PlanarPose) -> PlanarPose:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return PlanarPose(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta)


def _v_matrix(w: float) -> np.ndarray:
    if abs(w) < 1e-9:
        # series expansion keeps the map smooth through w = 0
        a = 1.0 - w * w / 6.0
        b = w / 2.0 - w ** 3 / 24.0
    else:
        a = math.sin(w) / w
        b = (1.0 - math.cos(w)) / w
    return np.array([[a, -b], [b, a]])


def se2_exp(xi: PlanarTwist) -> PlanarPose:
    """Group exponential of a body twist over unit time."""
    t = _v_matrix(xi.omega) @ np.array([xi.v1, xi.v2])
    return PlanarPose(t[0], t[1], xi.omega)


def se2_log(p: PlanarPose) -> PlanarTwist:
    v = np.linalg.solve(_v_matrix(p.theta), p.position)
    return PlanarTwist(v[0], v[1], p.theta)


def finite_difference_twist(p_prev: PlanarPose, p_next: PlanarPose, dt: float) -> PlanarTwist:
    """Body twist that carries `p_prev` to `p_next` in `dt` seconds."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    rel = pose_compose(p_prev.inverse(), p_next)
    return PlanarTwist.from_array(se2_log(rel).as_array() / dt)


# --- polygons -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConvexRegion:
    """Bounded convex polygon {q : A q <= b} with unit-normalized rows."""

    A: np.ndarray
    b: np.ndarray
    indicator: int | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[1] != 2 or A.shape[0] != b.shape[0]:
            raise ConfigError(f"region: A must be (I, 2) matching b, got {A.shape} and {b.shape}")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms < 1e-12):
            raise ConfigError("region: zero halfspace normal")
        A = A / norms[:, None]
        b = b / norms
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if not self._bounded():
            raise ConfigError("region: halfspaces do not bound a polygon")
        if len(self.vertices()) == 0:
            raise ConfigError("region: empty intersection")

    @classmethod
    def from_box(cls, xmin: float, xmax: float, ymin: float, ymax: float) -> "ConvexRegion":
        A = [[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]]
        return cls(np.array(A), np.array([-xmin, xmax, -ymin, ymax]))

    def _bounded(self) -> bool:
        ang = np.sort(np.arctan2(self.A[:, 1], self.A[:, 0]))
        gaps = np.diff(np.concatenate([ang, ang[:1] + 2 * np.pi]))
        return bool(np.all(gaps < np.pi - 1e-12))

    def vertices(self) -> np.ndarray:
        """Vertices of the region (unordered), by pairwise line intersection."""
        pts = []
        n = len(self.b)
        for i in range(n):
            for j in range(i + 1, n):
                M = self.A[[i, j]]
                if abs(np.linalg.det(M)) < 1e-12:
                    continue
                q = np.linalg.solve(M, self.b[[i, j]])
                if np.all(self.A @ q - self.b <= 1e-12):
                    pts.append(q)
        return np.array(pts).reshape(-1, 2)

    def residual(self, q) -> np.ndarray:
        return self.A @ np.asarray(q, dtype=float)[:2] - self.b

    def contains(self, q, tol: float = 1e-12) -> bool:
        return bool(np.all(self.residual(q) <= tol))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def point_in_polygon(p, poly: "PolygonObject | np.ndarray", tol: float = 1e-12) -> bool:
    """Even-odd test; points on the boundary count as inside."""
    verts = poly.vertices if isinstance(poly, PolygonObject) else np.asarray(poly, float)
    px, py = float(p[0]), float(p[1])
    n = len(verts)
    inside = False
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        # boundary check: collinear and within the segment's box
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        seg = math.hypot(bx - ax, by - ay)
        if abs(cross) <= tol * max(seg, 1.0) and min(ax, bx) - tol <= px <= max(ax, bx) + tol \
                and min(ay, by) - tol <= py <= max(ay, by) + tol:
            return True
        if (ay > py) != (by > py):
            xint = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < xint:
                inside = not inside
    return inside


@dataclass(frozen=True, eq=False)
class PolygonObject:
    """Grasped object: simple CCW polygon with a user supplied convex cover.

    Regions are ordered along the x axis; ``blend_breaks[l]`` is the seam
    between region l and l + 1 used by the smoothed state constraint.
    """

    vertices: np.ndarray
    mass: float
    regions: tuple[ConvexRegion, ...]
    blend_breaks: tuple[float, ...] = ()
    alpha: float = 200.0
    name: str = "object"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ConfigError("vertices: need at least 3 points of shape (I, 2)")
        if not np.all(np.isfinite(v)):
            raise ConfigError("vertices: non-finite coordinates")
        if signed_area(v) <= 0:
            raise ConfigError("vertices: polygon must be counter-clockwise")
        n = len(v)
        for i in range(n):
            for j in range(i + 1, n):
                if abs(i - j) in (1, n - 1):
                    continue
                if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise ConfigError("vertices: polygon self-intersects")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        if not self.mass >= 0:
            raise ConfigError("mass_kg: must be non-negative")
        regions = tuple(self.regions)
        if not regions:
            raise ConfigError("regions: at least one convex region required")
        object.__setattr__(self, "regions", regions)
        breaks = tuple(float(x) for x in self.blend_breaks)
        if len(regions) > 1 and len(breaks) != len(regions) - 1:
            raise ConfigError(
                f"blend_breaks: need {len(regions) - 1} breakpoints for {len(regions)} regions"
            )
        if any(b2 <= b1 for b1, b2 in zip(breaks, breaks[1:])):
            raise ConfigError("blend_breaks: must be strictly increasing")
        object.__setattr__(self, "blend_breaks", breaks)

    @property
    def is_convex(self) -> bool:
        return len(self.regions) == 1

    def bounding_box(self) -> tuple[float, float, float, float]:
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])

    def contains(self, p) -> bool:
        return point_in_polygon(p, self)

    def region_residual(self, p) -> float:
        """Exact membership residual: min over regions of the max row residual
        (<= 0 iff the point lies in some region)."""
        return float(min(np.max(r.residual(p)) for r in self.regions))

    def sample_interior(self, rng: np.random.Generator, count: int, margin: float = 0.0) -> np.ndarray:
        """Rejection-sample `count` points inside the region cover, at least
        `margin` away from every region boundary they belong to."""
        xmin, xmax, ymin, ymax = self.bounding_box()
        out = []
        while len(out) < count:
            q = rng.uniform([xmin, ymin], [xmax, ymax])
            if any(np.all(r.residual(q) <= -margin) for r in self.regions):
                out.append(q)
        return np.array(out)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "vertices": self.vertices.tolist(),
            "mass_kg": self.mass,
            "regions": [{"A": r.A.tolist(), "b": r.b.tolist()} for r in self.regions],
            "blend_breaks": list(self.blend_breaks),
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolygonObject":
        try:
            regions = tuple(ConvexRegion(np.array(r["A"]), np.array(r["b"])) for r in d["regions"])
            return cls(
                vertices=np.array(d["vertices"], dtype=float),
                mass=float(d["mass_kg"]),
                regions=regions,
                blend_breaks=tuple(d.get("blend_breaks", ())),
                alpha=float(d.get("alpha", 200.0)),
                name=str(d.get("name", "object")),
            )
        except KeyError as exc:
            raise ConfigError(f"object definition: missing field {exc.args[0]!r}") from None

    @classmethod
    def load(cls, path: str | Path) -> "PolygonObject":
        return cls.from_dict(json.loads(Path(path).read_text()))
