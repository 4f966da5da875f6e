"""Planar prehensile pushing: motion cones, entropy-relaxed trajectory
optimization, an enumeration oracle and an RRT-MC baseline."""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402
from .se2 import ConfigError, PlanarPose, PlanarTwist, PlanarWrench, PolygonObject  # noqa: E402
from .mechanics import PusherContact, SupportModel, motion_cone  # noqa: E402
from .nlp import AssembleOptions, PushProblem, Weights, assemble  # noqa: E402
from .planners import PlanningFailed, PushPlan, plan_oracle, plan_relaxed, plan_rrt_mc  # noqa: E402
from .metrics import distance, q_metric, rollout  # noqa: E402
from .config import load_problem  # noqa: E402

__all__ = [
    "BACKEND", "ConfigError", "PlanarPose", "PlanarTwist", "PlanarWrench", "PolygonObject",
    "PusherContact", "SupportModel", "motion_cone", "AssembleOptions", "PushProblem", "Weights",
    "assemble", "PlanningFailed", "PushPlan", "plan_oracle", "plan_relaxed", "plan_rrt_mc",
    "distance", "q_metric", "rollout", "load_problem",
]
