"""Goal distance, independent kinematic rollout of plans, and the Q metric."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mechanics import generalized_friction_cone, motion_cone_or_blocked
from .se2 import PlanarPose, wrap_angle


def distance(p, g, lambda_s: float = 0.9, lambda_theta: float = 0.1) -> float:
    """lambda_s * |kappa_p - kappa_g| + lambda_theta * |wrap(theta_p - theta_g)|."""
    a = p.as_array() if isinstance(p, PlanarPose) else np.asarray(p, dtype=float)
    b = g.as_array() if isinstance(g, PlanarPose) else np.asarray(g, dtype=float)
    return lambda_s * math.hypot(a[0] - b[0], a[1] - b[1]) + lambda_theta * abs(wrap_angle(a[2] - b[2]))


def euler_poses(start, twists, delta: float) -> np.ndarray:
    """P_{n+1} = P_n + delta * xi_n from `start`; shared by planners and rollout
    so both report bit-identical poses."""
    P = (start.as_array() if isinstance(start, PlanarPose) else np.asarray(start, dtype=float)).copy()
    out = [P.copy()]
    for xi in np.asarray(twists, dtype=float).reshape(-1, 3):
        P = P + delta * xi
        out.append(P.copy())
    return np.array(out)


@dataclass
class RolloutResult:
    pose_trace: np.ndarray  # (N+1, 3)
    final_distance: float
    mc_violations: np.ndarray  # (N,) max halfspace residual of each executed twist
    state_violations: np.ndarray  # (N+1,) exact region residual of each pose

    def to_dict(self) -> dict:
        return {
            "pose_trace": self.pose_trace.tolist(),
            "final_distance": self.final_distance,
            "mc_violations": self.mc_violations.tolist(),
            "state_violations": self.state_violations.tolist(),
            "max_mc_violation": float(np.max(self.mc_violations, initial=0.0)),
            "max_state_violation": float(np.max(self.state_violations, initial=-math.inf)),
        }


def rollout(plan, problem) -> RolloutResult:
    """Euler-integrate the plan's selected twists from the problem start,
    rebuilding each active pusher's motion cone at the current pose."""
    twists = np.asarray(plan.twists_selected, dtype=float).reshape(-1, 3)
    sched = list(plan.pusher_schedule)
    w = problem.weights
    wcs = {}
    trace = euler_poses(problem.start, twists, plan.delta)
    mc = np.zeros(len(twists))
    for n, xi in enumerate(twists):
        P = trace[n]
        m = sched[n]
        if m not in wcs:
            wcs[m] = generalized_friction_cone(problem.pushers[m])
        cone = motion_cone_or_blocked(
            problem.pushers[m],
            problem.support,
            PlanarPose(float(P[0]), float(P[1]), float(P[2])),
            problem.object,
            problem.gravity,
            problem.sweep_samples,
            wcs[m],
        )
        mc[n] = float(np.max(cone.halfspaces @ xi)) if len(cone.halfspaces) else 0.0
    state = np.array([problem.object.region_residual(q[:2]) for q in trace])
    fd = distance(trace[-1], problem.goal, w.lambda_s, w.lambda_theta)
    return RolloutResult(trace, fd, mc, state)


def q_metric(switches_plain: int, switches_kl: int) -> float:
    """Percentage of pusher switches removed by the KL term; NaN when the
    plain planner made no switches (metric undefined)."""
    if switches_plain <= 0:
        return math.nan
    return 100.0 * (switches_plain - switches_kl) / switches_plain
