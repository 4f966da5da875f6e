"""Kernel dispatch: the compiled core when it imports, else the numpy fallback.

Set ``PUSHOPT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _core_py

BACKEND = "python"
_impl = _core_py
if os.environ.get("PUSHOPT_PURE_PYTHON") != "1":
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _core_py

stable_push_batch = _impl.stable_push_batch
pose_distances = _impl.pose_distances
nearest_index = _impl.nearest_index
qp_solve = _impl.qp_solve

QP_OPTIMAL = _core_py.QP_OPTIMAL
QP_INFEASIBLE = _core_py.QP_INFEASIBLE
QP_NOT_CONVEX = _core_py.QP_NOT_CONVEX
QP_MAX_ITER = _core_py.QP_MAX_ITER
