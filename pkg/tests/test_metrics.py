import math
from dataclasses import replace

import numpy as np
import pytest

from pushopt.metrics import distance, euler_poses, q_metric, rollout
from pushopt.planners import PushPlan
from pushopt.se2 import PlanarPose


def test_distance_examples():
    g = PlanarPose(0.01, 0.02, 0.3)
    assert distance(g, g) == 0.0
    assert distance(PlanarPose(0.04, 0.06, 0.3), g) == pytest.approx(0.045)
    assert distance(PlanarPose(0.01, 0.02, 0.5), g) == pytest.approx(0.02)


def test_distance_wraps_angle():
    assert distance((0, 0, math.pi - 0.05), (0, 0, -math.pi + 0.05)) == pytest.approx(0.1 * 0.1)


@pytest.mark.parametrize("dq,qkl,q", [(20, 17, 15.0), (7, 7, 0.0), (5, 0, 100.0)])
def test_q_metric(dq, qkl, q):
    assert q_metric(dq, qkl) == pytest.approx(q)


def test_q_metric_undefined():
    assert math.isnan(q_metric(0, 0))


def test_euler_poses():
    P = euler_poses(PlanarPose(0, 0, 0), [[1.0, 0, 0], [0, 2.0, 0]], 0.5)
    assert np.allclose(P, [[0, 0, 0], [0.5, 0, 0], [0.5, 1.0, 0]])


def test_zero_twist_rollout(square):
    problem = square[0]
    N, M1 = problem.N, problem.M + 1
    plan = PushPlan(
        np.tile(problem.start.as_array(), (N + 1, 1)), np.zeros((N, 3)), np.eye(M1)[[0] * N], [0] * N,
        problem.delta, None, "test",
    )
    r = rollout(plan, problem)
    assert r.final_distance == pytest.approx(distance(problem.start, problem.goal))
    assert np.allclose(r.mc_violations, 0.0)
    d = r.to_dict()
    assert d["max_mc_violation"] == pytest.approx(0.0)
    assert len(d["pose_trace"]) == N + 1


def test_rollout_flags_cone_violation(square):
    problem = replace(square[0], goal=square[0].start)
    N, M1 = problem.N, problem.M + 1
    bad = np.zeros((N, 3))
    bad[0] = [0.0, 0.0, 50.0]  # pure spin is not a stable push for any single pusher here
    plan = PushPlan(np.zeros((N + 1, 3)), bad, np.eye(M1)[[0] * N], [0] * N, problem.delta, None, "test")
    r = rollout(plan, problem)
    assert r.mc_violations[0] > 1e-6
