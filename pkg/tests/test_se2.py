import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pushopt.se2 import (
    ConfigError,
    ConvexRegion,
    PlanarPose,
    PlanarTwist,
    PolygonObject,
    adjoint_from_frame,
    finite_difference_twist,
    pose_compose,
    se2_exp,
    se2_log,
    wrap_angle,
)

angles = st.floats(-math.pi, math.pi, allow_nan=False)
coords = st.floats(-1.0, 1.0, allow_nan=False)
poses = st.builds(PlanarPose, coords, coords, angles)


def close_pose(a, b, tol=1e-10):
    d = a.as_array() - b.as_array()
    d[2] = wrap_angle(d[2])
    return np.max(np.abs(d)) <= tol


def test_adjoint_identity():
    assert np.allclose(adjoint_from_frame((0.0, 0.0), 0.0), np.eye(3))


def test_adjoint_offset_force_torque():
    d = 0.3
    w = adjoint_from_frame((0.0, d), 0.0) @ np.array([1.0, 0.0, 0.0])
    assert np.allclose(w, [1.0, 0.0, -d])


def test_adjoint_rejects_nonfinite():
    with pytest.raises(ConfigError):
        adjoint_from_frame((math.nan, 0.0), 0.0)


def test_wrap_angle_range():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


@given(poses)
def test_compose_identity(p):
    assert close_pose(pose_compose(PlanarPose.identity(), p), p)


@given(poses)
def test_compose_inverse(p):
    assert close_pose(pose_compose(p, p.inverse()), PlanarPose.identity())


@given(angles, angles)
def test_compose_rotations(a, b):
    c = pose_compose(PlanarPose(0, 0, a), PlanarPose(0, 0, b))
    assert abs(wrap_angle(c.theta - (a + b))) < 1e-12
    assert -math.pi < c.theta <= math.pi


def test_fd_twist_zero():
    p = PlanarPose(0.1, -0.2, 0.4)
    assert np.allclose(finite_difference_twist(p, p, 0.5).as_array(), 0.0)


def test_fd_twist_translation():
    tw = finite_difference_twist(PlanarPose.identity(), PlanarPose(0.02, 0, 0), 1.0)
    assert np.allclose(tw.as_array(), [0.02, 0, 0])


def test_fd_twist_quarter_turn_roundtrip():
    a, b = PlanarPose(0.1, 0.2, 0.3), PlanarPose(-0.1, 0.4, 0.3 + math.pi / 2)
    tw = finite_difference_twist(a, b, 1.0)
    assert close_pose(se2_exp(tw), pose_compose(a.inverse(), b))


def test_fd_twist_bad_dt():
    with pytest.raises(ValueError):
        finite_difference_twist(PlanarPose.identity(), PlanarPose.identity(), 0.0)


@settings(max_examples=50)
@given(coords, coords, st.floats(-3.0, 3.0))
def test_exp_log_roundtrip(v1, v2, w):
    tw = PlanarTwist(v1, v2, w)
    assert np.allclose(se2_log(se2_exp(tw)).as_array(), tw.as_array(), atol=1e-9)


def test_small_rotation_exp_is_smooth():
    a = se2_exp(PlanarTwist(0.1, 0.0, 1e-12)).as_array()
    b = se2_exp(PlanarTwist(0.1, 0.0, 0.0)).as_array()
    assert np.allclose(a, b, atol=1e-12)


def test_square_membership(square):
    obj = square[0].object
    assert obj.contains((0.0, 0.0))
    lo = obj.vertices.min(axis=0)
    hi = obj.vertices.max(axis=0)
    assert not obj.contains(2 * (hi - lo))


def test_tee_vertex_is_inside(tee):
    obj = tee[0].object
    for v in obj.vertices:
        assert obj.contains(v)


def test_region_cover_matches_polygon(ell, rng):
    obj = ell[0].object
    xmin, xmax, ymin, ymax = obj.bounding_box()
    for q in rng.uniform([xmin, ymin], [xmax, ymax], (500, 2)):
        if abs(obj.region_residual(q)) < 1e-9:
            continue
        assert obj.contains(q) == (obj.region_residual(q) <= 0)


def test_polygon_validation():
    box = ConvexRegion.from_box(0, 1, 0, 1)
    with pytest.raises(ConfigError, match="counter-clockwise"):
        PolygonObject(np.array([[0, 0], [0, 1], [1, 1], [1, 0]]), 1.0, (box,))
    with pytest.raises(ConfigError, match="self-intersects"):
        star = [(math.cos(k * 4 * math.pi / 5), math.sin(k * 4 * math.pi / 5)) for k in range(5)]
        PolygonObject(np.array(star), 1.0, (box,))
    with pytest.raises(ConfigError, match="mass"):
        PolygonObject(np.array([[0, 0], [1, 0], [1, 1], [0, 1]]), -1.0, (box,))


def test_region_validation():
    with pytest.raises(ConfigError, match="bound"):
        ConvexRegion(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1.0, 1.0]))
    r = ConvexRegion.from_box(-0.03, 0.03, -0.03, 0.03)
    assert np.allclose(r.residual((0, 0)), -0.03)
    assert np.isclose(np.max(r.residual((0.03, 0.0))), 0.0)
    assert np.isclose(np.max(r.residual((0.05, 0.0))), 0.02)


def test_object_dict_roundtrip(tee):
    obj = tee[0].object
    again = PolygonObject.from_dict(obj.to_dict())
    assert np.array_equal(again.vertices, obj.vertices)
    assert again.blend_breaks == obj.blend_breaks
