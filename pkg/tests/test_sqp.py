import math

import numpy as np
import pytest

from pushopt.sqp import FunctionBundle, SolveStatus, multistart, solve


def rosenbrock(x):
    return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2


def rosenbrock_grad(x):
    return np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])


def grid_minimum(f, lo, hi, rounds=8, k=41):
    """Brute-force grid search with successive zooming."""
    lo, hi = np.array(lo, float), np.array(hi, float)
    best = None
    for _ in range(rounds):
        xs = [np.linspace(lo[i], hi[i], k) for i in range(2)]
        X, Y = np.meshgrid(*xs, indexing="ij")
        F = np.vectorize(lambda a, b: f(np.array([a, b])))(X, Y)
        i, j = np.unravel_index(np.argmin(F), F.shape)
        best = np.array([X[i, j], Y[i, j]])
        step = (hi - lo) / (k - 1)
        lo, hi = np.maximum(lo, best - 2 * step), np.minimum(hi, best + 2 * step)
    return best


def test_projection_onto_hyperplane():
    b = FunctionBundle(
        f=lambda x: float(x @ x), grad=lambda x: 2 * x, n=4,
        ceq=lambda x: np.array([x[0] - 1.0]), jeq=lambda x: np.array([[1.0, 0, 0, 0]]),
    )
    rep = solve(b, np.array([3.0, -1.0, 2.0, 0.5]))
    assert rep.converged
    assert np.allclose(rep.x_opt, [1, 0, 0, 0], atol=1e-7)
    assert rep.objective == pytest.approx(1.0, abs=1e-7)


def test_linear_objective_on_disk():
    b = FunctionBundle(
        f=lambda x: float(x[0] + x[1]), grad=lambda x: np.ones(2), n=2,
        cin=lambda x: np.array([x @ x - 1.0]), jin=lambda x: 2 * x[None, :],
    )
    rep = solve(b, np.array([0.1, 0.3]))
    assert rep.converged
    assert np.allclose(rep.x_opt, [-math.sqrt(0.5)] * 2, atol=1e-6)
    assert rep.objective == pytest.approx(-math.sqrt(2), abs=1e-7)
    # complementarity: active constraint carries a positive multiplier
    lam = rep.multipliers_ineq
    assert lam[0] > 0
    assert abs(lam[0] * b.cin(rep.x_opt)[0]) <= 1e-8


@pytest.mark.parametrize("x0", [(-0.5, 1.5), (1.5, -0.5), (0.0, 0.0), (1.2, 1.2), (-0.3, -0.4)])
def test_rosenbrock_box_matches_grid(x0):
    b = FunctionBundle(f=rosenbrock, grad=rosenbrock_grad, n=2, lb=np.array([-0.5, -0.5]), ub=np.array([1.5, 1.5]))
    rep = solve(b, np.array(x0, float), max_iter=500)
    assert rep.converged
    ref = grid_minimum(rosenbrock, [-0.5, -0.5], [1.5, 1.5])
    assert np.allclose(rep.x_opt, ref, atol=1e-6)


def test_active_bound_multiplier():
    b = FunctionBundle(f=lambda x: float((x[0] - 2) ** 2), grad=lambda x: np.array([2 * (x[0] - 2)]), n=1,
                       lb=np.array([-1.0]), ub=np.array([1.0]))
    rep = solve(b, np.array([0.0]))
    assert rep.converged
    assert rep.x_opt[0] == pytest.approx(1.0)
    assert np.max(np.abs(rep.multipliers_bounds)) > 0


def test_nan_objective_line_search_fail():
    b = FunctionBundle(f=lambda x: math.nan, grad=lambda x: np.full(2, math.nan), n=2)
    rep = solve(b, np.zeros(2))
    assert rep.status is SolveStatus.LINE_SEARCH_FAIL
    assert not rep.converged


def test_inconsistent_constraints_not_converged():
    b = FunctionBundle(
        f=lambda x: float(x @ x), grad=lambda x: 2 * x, n=2,
        ceq=lambda x: np.array([x[0] - 1.0, x[0] + 1.0]), jeq=lambda x: np.array([[1.0, 0.0], [1.0, 0.0]]),
    )
    rep = solve(b, np.zeros(2), max_iter=50)
    assert not rep.converged
    assert rep.max_constraint_violation >= 1.0 - 1e-9


def test_deterministic(square):
    from pushopt.nlp import AssembleOptions, assemble

    nlp = assemble(square[0], AssembleOptions(True, True, False))
    a = solve(nlp, nlp.initializer(), max_iter=40)
    b = solve(nlp, nlp.initializer(), max_iter=40)
    assert np.array_equal(a.x_opt, b.x_opt)
    assert a.iterations == b.iterations


def test_trace_written(tmp_path):
    path = tmp_path / "trace.csv"
    b = FunctionBundle(f=rosenbrock, grad=rosenbrock_grad, n=2)
    rep = solve(b, np.zeros(2), trace_path=str(path))
    lines = path.read_text().splitlines()
    assert len(lines) == len(rep.trace) + 1
    assert lines[0].startswith("iter")


def test_multistart_keeps_best():
    b = FunctionBundle(f=rosenbrock, grad=rosenbrock_grad, n=2)
    rep = multistart(b, np.array([-1.0, 1.0]), restarts=2)
    assert rep.converged
    assert np.allclose(rep.x_opt, [1, 1], atol=1e-6)
