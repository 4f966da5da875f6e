import numpy as np
import pytest

from pushopt import _core_py, kernels

try:
    from pushopt import _core
except ImportError:  # compiled core not built
    _core = None

needs_core = pytest.mark.skipif(_core is None, reason="compiled core not built")


def random_qp(rng, n, meq, min_):
    M = rng.normal(size=(n, n))
    G = M @ M.T + n * np.eye(n)
    g = rng.normal(size=n)
    Aeq = rng.normal(size=(meq, n))
    x0 = rng.normal(size=n)
    beq = Aeq @ x0
    Ain = rng.normal(size=(min_, n))
    bin_ = Ain @ x0 + rng.uniform(0.0, 1.0, min_)
    return G, g, Aeq, beq, Ain, bin_


def test_backend_reported():
    assert kernels.BACKEND in ("compiled", "python")


@pytest.mark.parametrize("seed", range(10))
def test_qp_matches_cvxopt(seed):
    cvxopt = pytest.importorskip("cvxopt")
    from cvxopt import solvers

    rng = np.random.default_rng(seed)
    G, g, Aeq, beq, Ain, bin_ = random_qp(rng, 6, 2, 8)
    x, le, li, status, _ = kernels.qp_solve(G, g, Aeq, beq, Ain, bin_)
    assert status == kernels.QP_OPTIMAL
    solvers.options["show_progress"] = False
    solvers.options["abstol"] = solvers.options["reltol"] = solvers.options["feastol"] = 1e-12
    m = cvxopt.matrix
    ref = solvers.qp(m(G), m(g), m(Ain), m(bin_), m(Aeq), m(beq))
    assert np.allclose(x, np.array(ref["x"]).ravel(), atol=1e-6)
    # KKT in the documented sign convention
    assert np.allclose(G @ x + g + Aeq.T @ le + Ain.T @ li, 0.0, atol=1e-8)
    assert np.all(li >= -1e-12)
    assert np.max(Ain @ x - bin_) <= 1e-9


def test_qp_infeasible():
    G = np.eye(2)
    Ain = np.array([[1.0, 0.0], [-1.0, 0.0]])
    bin_ = np.array([-1.0, -1.0])  # x <= -1 and x >= 1
    status = kernels.qp_solve(G, np.zeros(2), np.zeros((0, 2)), np.zeros(0), Ain, bin_)[3]
    assert status == kernels.QP_INFEASIBLE


def test_qp_not_convex():
    status = kernels.qp_solve(-np.eye(2), np.zeros(2), np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)), np.zeros(0))[3]
    assert status == kernels.QP_NOT_CONVEX


@needs_core
@pytest.mark.parametrize("seed", range(5))
def test_backends_agree_qp(seed):
    rng = np.random.default_rng(100 + seed)
    args = random_qp(rng, 8, 3, 12)
    a = _core_py.qp_solve(*args)
    b = _core.qp_solve(*args)
    assert a[3] == b[3]
    assert np.allclose(a[0], b[0], atol=1e-10)
    assert np.allclose(a[2], b[2], atol=1e-8)


@needs_core
def test_backends_agree_nearest(rng):
    nodes = rng.normal(size=(300, 3))
    for q in rng.normal(size=(20, 3)):
        assert _core.nearest_index(nodes, q, 0.9, 0.1) == _core_py.nearest_index(nodes, q, 0.9, 0.1)
        assert np.allclose(_core.pose_distances(nodes, q, 0.9, 0.1), _core_py.pose_distances(nodes, q, 0.9, 0.1))


@needs_core
def test_backends_agree_stable_push(square, rng):
    problem = square[0]
    sup = problem.support
    W = rng.normal(size=(40, 3))
    W /= np.linalg.norm(W, axis=1)[:, None]
    adT = np.eye(3)
    mg = np.array([0.0, -0.5, 0.001])
    a = _core_py.stable_push_batch(W, adT, mg, sup.friction_scale, sup.A_diag)
    b = _core.stable_push_batch(W, adT, mg, sup.friction_scale, sup.A_diag)
    assert np.array_equal(a[2], b[2])
    ok = a[2].astype(bool)
    assert np.allclose(a[0][ok], b[0][ok], atol=1e-10)
    assert np.allclose(a[1][ok], b[1][ok], atol=1e-10)
