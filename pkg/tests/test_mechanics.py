import math

import numpy as np
import pytest

from pushopt.mechanics import (
    GRAVITY,
    PusherContact,
    SupportModel,
    blocked_cone,
    conic_hull,
    export_cone_csv,
    force_balance_residual,
    friction_cone_edges,
    generalized_friction_cone,
    gravity_wrench,
    mc_membership,
    motion_cone,
    read_cone_csv,
    solve_stable_push,
    support_adjoint,
)
from pushopt.se2 import ConfigError, PlanarPose

CENTER_PUSH = PusherContact(np.array([[0.0, -0.03]]), np.array([[0.0, 1.0]]), 0.5)


def test_friction_edges_45_degrees():
    e1, e2 = friction_cone_edges((0.0, 0.0), (0.0, 1.0), 1.0)
    got = sorted([tuple(np.round(e.as_array(), 12)) for e in (e1, e2)])
    s = 1 / math.sqrt(2)
    assert np.allclose(got, [(-s, s, 0.0), (s, s, 0.0)])


def test_friction_edges_collapse_without_friction():
    e1, e2 = friction_cone_edges((0.0, 0.0), (0.0, 1.0), 1e-12)
    assert np.allclose(e1.as_array(), [0, 1, 0])
    assert np.allclose(e2.as_array(), [0, 1, 0])


def test_single_contact_two_generators():
    assert len(generalized_friction_cone(CENTER_PUSH).generators) == 2


def test_duplicate_contacts_dedup():
    p = PusherContact(np.array([[0.0, -0.03]] * 2), np.array([[0.0, 1.0]] * 2), 0.5)
    assert len(generalized_friction_cone(p).generators) == 2


def test_pusher_validation():
    with pytest.raises(ConfigError, match="mu_p"):
        PusherContact(np.array([[0.0, 0.0]]), np.array([[0.0, 1.0]]), 0.0)
    with pytest.raises(ConfigError, match="unit"):
        PusherContact(np.array([[0.0, 0.0]]), np.array([[0.0, 2.0]]), 0.5)


def test_support_validation():
    with pytest.raises(ConfigError, match="mu_s"):
        SupportModel(0.0, 10.0, 0.02, 0.6)
    with pytest.raises(ConfigError, match="e:"):
        SupportModel(0.5, 10.0, 0.02, 1.5)


def test_stable_push_balances(square):
    sup = square[0].support
    mg = gravity_wrench(0.1, 0.3)
    wp = np.array([0.0, 1.0, 0.01])
    wp /= np.linalg.norm(wp)
    adT = support_adjoint(PlanarPose(0.01, -0.005, 0.3))
    sol = solve_stable_push(wp, sup, mg, adT)
    assert sol.a >= 0
    assert abs(sol.w_s_hat @ sup.A @ sol.w_s_hat - 1.0) <= 1e-9
    assert force_balance_residual(wp, sol.a, sol.w_s_hat, sup, mg, adT) <= 1e-8


def test_center_push_translates_without_gravity(square):
    problem = square[0]
    cone = motion_cone(CENTER_PUSH, problem.support, PlanarPose.identity(), problem.object, (0.0, 0.0))
    # generators are grasp-pose rates: the object moves +y relative to the gripper
    assert np.max(mc_membership(np.array([0.0, -1.0, 0.0]), cone)) <= 1e-9
    assert np.max(mc_membership(np.array([0.0, 1.0, 0.0]), cone)) > 0


def test_cone_generators_physical(square):
    problem = square[0]
    pose = PlanarPose(0.005, -0.01, 0.2)
    for pusher in problem.pushers:
        try:
            cone = motion_cone(pusher, problem.support, pose, problem.object, GRAVITY)
        except Exception:
            continue
        mg = gravity_wrench(problem.object.mass, pose.theta)
        adT = support_adjoint(pose)
        for w, ws, a in zip(cone.pusher_wrenches, cone.support_wrenches, cone.magnitudes):
            assert force_balance_residual(w, a, ws, problem.support, mg, adT) <= 1e-8
            assert abs(ws @ problem.support.A @ ws - 1.0) <= 1e-9


def test_membership_apex_scaling_pointedness(square):
    problem = square[0]
    cone = motion_cone(problem.pushers[0], problem.support, PlanarPose.identity(), problem.object)
    assert np.allclose(mc_membership(np.zeros(3), cone), 0.0)
    for g in cone.generators:
        for s in (1e-3, 1.0, 50.0):
            assert np.max(mc_membership(s * g, cone)) <= 1e-9
    assert any(np.max(mc_membership(-g, cone)) > 0 for g in cone.generators)


def test_conic_hull_square_pyramid():
    V = np.array([[1, 1, 1], [-1, 1, 1], [-1, -1, 1], [1, -1, 1], [0, 0, 1]], float)
    idx, H, kind = conic_hull(V)
    assert sorted(idx) == [0, 1, 2, 3]
    assert len(H) == 4
    assert np.max(H @ V.T) <= 1e-12
    assert np.max(H @ np.array([0, 0, -1.0])) > 0


def test_conic_hull_wedge_with_line():
    # +-z is a line of the cone, bounded by y >= 0
    V = np.array([[0, 0, 1], [0, 0, -1], [1, 1, 0], [-1, 1, 0], [0, 1, 0]], float)
    _, H, kind = conic_hull(V)
    assert kind == "nonpointed"
    assert np.max(H @ V.T) <= 1e-12
    assert np.max(H @ np.array([0, -1.0, 0])) > 0
    assert np.max(H @ np.array([0.3, 2.0, -5.0])) <= 0


def test_conic_hull_full_space():
    V = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [-1, -1, -1]], float)
    idx, H, kind = conic_hull(V)
    assert kind == "full" and H.shape == (0, 3)
    assert sorted(idx) == [0, 1, 2, 3]


def test_blocked_cone_pins_twist():
    cone = blocked_cone(PlanarPose.identity())
    assert np.max(mc_membership(np.zeros(3), cone)) == 0
    assert np.max(mc_membership(np.array([1e-6, 0, 0]), cone)) > 0


def test_cone_csv_roundtrip(square, tmp_path):
    problem = square[0]
    cone = motion_cone(problem.pushers[1], problem.support, PlanarPose(0.0, 0.01, 0.0), problem.object)
    path = tmp_path / "cone.csv"
    export_cone_csv(cone, path)
    G, H = read_cone_csv(path)
    assert np.array_equal(G, cone.generators)
    assert np.array_equal(H, cone.halfspaces)
    assert np.max(H @ G.T) <= 1e-9
