"""Simplex QP tests.

Hand-worked oracles (derived before the solver was written):

* Q = I, f = -y: the QP is min ||a - y||^2/2 on the simplex, i.e. Euclidean
  projection of y.  Projections below were computed by hand with the
  sort-and-threshold rule: y already on the simplex stays put,
  y = (0.8, 0.4, -0.2) -> (0.7, 0.3, 0), y = (1.4, 0.2, -0.6) -> (1, 0, 0).
* Subproblem matrices follow from expanding the augmented data-fit plus
  coupling term: image-domain coupling gives Q = (1+rho) M^T M,
  coefficient-domain coupling gives Q = M^T M + rho I, and both give
  f = -(M^T y + rho H^T xtilde).
* The brute-force oracle enumerates the simplex on a fixed grid and takes
  the best objective; the solver must never be worse (criterion lives in
  test_acceptance, a small version is exercised here).
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from pnpunmix.cube import PixelMatrix
from pnpunmix.errors import ShapeError
from pnpunmix.model import EndmemberMatrix
from pnpunmix.qp import QpProblem, QpSolution, build_subproblem, fcls, solve_simplex_qp


def _objective(problem, a):
    return 0.5 * a @ problem.q @ a + problem.f @ a


def test_projection_interior_point():
    y = np.array([0.6, 0.3, 0.1])
    sol = solve_simplex_qp(QpProblem(np.eye(3), -y))
    assert_allclose(sol.a, y, rtol=0, atol=1e-12)
    assert sol.converged
    assert sol.kkt_residual <= 1e-9


def test_projection_face_point():
    sol = solve_simplex_qp(QpProblem(np.eye(3), -np.array([0.8, 0.4, -0.2])))
    assert_allclose(sol.a, [0.7, 0.3, 0.0], rtol=0, atol=1e-12)


def test_projection_vertex():
    sol = solve_simplex_qp(QpProblem(np.eye(3), -np.array([1.4, 0.2, -0.6])))
    assert_allclose(sol.a, [1.0, 0.0, 0.0], rtol=0, atol=1e-12)


def test_solution_is_feasible_and_stationary():
    rng = np.random.default_rng(42)
    for _ in range(50):
        p = int(rng.integers(2, 7))
        b = rng.standard_normal((p + 2, p))
        q = b.T @ b + 0.05 * np.eye(p)
        f = rng.standard_normal(p)
        sol = solve_simplex_qp(QpProblem(q, f))
        assert sol.converged
        assert sol.a.min() >= 0.0
        assert abs(sol.a.sum() - 1.0) <= 1e-9
        assert sol.kkt_residual <= 1e-9


def test_never_worse_than_coarse_grid():
    # small sibling of the acceptance check: 10 problems, 1e-2 grid
    rng = np.random.default_rng(7)
    step = 100
    ij = [(i, j) for i in range(step + 1) for j in range(step + 1 - i)]
    grid = np.array([[i, j, step - i - j] for i, j in ij], dtype=float).T / step
    for _ in range(10):
        b = rng.standard_normal((3, 3))
        problem = QpProblem(b.T @ b + 0.1 * np.eye(3), rng.standard_normal(3))
        best = (
            0.5 * np.sum(grid * (problem.q @ grid), axis=0) + problem.f @ grid
        ).min()
        sol = solve_simplex_qp(problem)
        assert _objective(problem, sol.a) <= best + 1e-6


def test_objective_trace_monotone():
    rng = np.random.default_rng(3)
    for _ in range(20):
        b = rng.standard_normal((5, 5))
        problem = QpProblem(b.T @ b + 0.01 * np.eye(5), 3.0 * rng.standard_normal(5))
        sol = solve_simplex_qp(problem)
        assert sol.objective_trace is not None
        diffs = np.diff(sol.objective_trace)
        assert (diffs <= 1e-10).all()


def test_warm_start_never_worse_than_start():
    rng = np.random.default_rng(5)
    b = rng.standard_normal((4, 4))
    problem = QpProblem(b.T @ b + 0.1 * np.eye(4), rng.standard_normal(4))
    start = np.array([0.1, 0.2, 0.3, 0.4])
    sol = solve_simplex_qp(problem, warm_start=start)
    assert _objective(problem, sol.a) <= _objective(problem, start) + 1e-12
    # warm starting at the solution stays at the solution
    again = solve_simplex_qp(problem, warm_start=sol.a)
    assert_allclose(again.a, sol.a, rtol=0, atol=1e-12)


def test_deterministic_reruns():
    rng = np.random.default_rng(11)
    b = rng.standard_normal((6, 6))
    problem = QpProblem(b.T @ b, rng.standard_normal(6))
    s1 = solve_simplex_qp(problem)
    s2 = solve_simplex_qp(problem)
    assert np.array_equal(s1.a, s2.a)
    assert s1.iterations == s2.iterations


def test_permutation_equivariance():
    rng = np.random.default_rng(13)
    b = rng.standard_normal((4, 4))
    q = b.T @ b + 0.2 * np.eye(4)
    f = rng.standard_normal(4)
    perm = np.array([2, 0, 3, 1])
    sol = solve_simplex_qp(QpProblem(q, f))
    sol_p = solve_simplex_qp(QpProblem(q[np.ix_(perm, perm)], f[perm]))
    assert_allclose(sol_p.a, sol.a[perm], rtol=0, atol=1e-12)


def test_zero_curvature_picks_cheapest_vertex():
    # Q = 0 turns the QP into a linear program; the solver's gradient
    # fallback must land on the vertex with the smallest cost
    sol = solve_simplex_qp(QpProblem(np.zeros((3, 3)), np.array([0.3, 0.1, 0.5])))
    assert_allclose(sol.a, [0.0, 1.0, 0.0], rtol=0, atol=1e-12)
    assert sol.converged


def test_problem_validation():
    with pytest.raises(ValueError, match="symmetric"):
        QpProblem(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2))
    with pytest.raises(ValueError, match="definite"):
        QpProblem(np.array([[-1.0, 0.0], [0.0, 1.0]]), np.zeros(2))
    with pytest.raises(ShapeError):
        QpProblem(np.eye(2), np.zeros(3))
    with pytest.raises(ValueError, match="finite"):
        QpProblem(np.eye(2), np.array([np.nan, 0.0]))


def test_build_subproblem_image_domain():
    m = EndmemberMatrix(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]) / 2.0)
    y = np.array([0.2, 0.3, 0.5])
    xt = np.array([0.1, 0.1, 0.2])
    prob = build_subproblem(m, "pro-h", y, xt, rho=1.0)
    mtm = m.values.T @ m.values
    assert_array_equal(prob.q, 2.0 * mtm)  # (1 + rho) with rho = 1, exactly
    assert_allclose(prob.f, -(m.values.T @ y + m.values.T @ xt), rtol=0, atol=0)


def test_build_subproblem_coefficient_domain():
    m = EndmemberMatrix(np.eye(2))
    y = np.array([1.0, 0.0])
    xt = np.array([0.5, 0.5])
    prob = build_subproblem(m, "pro-a", y, xt, rho=1.0)
    assert_array_equal(prob.q, 2.0 * np.eye(2))
    assert_array_equal(prob.f, np.array([-1.5, -0.5]))


def test_build_subproblem_zero_rho_is_plain_least_squares():
    m = EndmemberMatrix(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]) / 2.0)
    y = np.array([0.2, 0.3, 0.5])
    for mode in ("pro-h", "pro-a"):
        prob = build_subproblem(m, mode, y, None, rho=0.0)
        assert_array_equal(prob.q, m.values.T @ m.values)
        assert_array_equal(prob.f, -(m.values.T @ y))


def test_build_subproblem_validation():
    m = EndmemberMatrix(np.eye(3))
    with pytest.raises(ValueError, match="mode"):
        build_subproblem(m, "pro-x", np.zeros(3), np.zeros(3), 1.0)
    with pytest.raises(ValueError, match="rho"):
        build_subproblem(m, "pro-a", np.zeros(3), np.zeros(3), -1.0)
    with pytest.raises(ShapeError):
        build_subproblem(m, "pro-a", np.zeros(2), np.zeros(3), 1.0)
    with pytest.raises(ShapeError):
        build_subproblem(m, "pro-a", np.zeros(3), np.zeros(2), 1.0)
    with pytest.raises(ShapeError):
        build_subproblem(m, "pro-h", np.zeros(3), np.zeros(2), 1.0)


def test_fcls_recovers_noiseless_mixture():
    rng = np.random.default_rng(20)
    em = EndmemberMatrix(rng.uniform(0.05, 0.95, size=(12, 3)))
    truth = rng.dirichlet(np.ones(3), size=40).T
    y = PixelMatrix(em.values @ truth, 5, 8)
    est = fcls(em, y)
    assert_allclose(est.values, truth, rtol=0, atol=1e-8)


def test_fcls_pixel_independence_is_bitwise():
    # solving a pixel alone must give the bit-identical answer it gets
    # inside a batch, whatever the surrounding pixels are
    rng = np.random.default_rng(21)
    em = EndmemberMatrix(rng.uniform(0.05, 0.95, size=(10, 4)))
    truth = rng.dirichlet(np.ones(4) * 0.7, size=30).T
    y = em.values @ truth + 0.01 * rng.standard_normal((10, 30))
    batch = fcls(em, PixelMatrix(y, 5, 6))
    for j in (0, 7, 29):
        alone = fcls(em, PixelMatrix(y[:, j : j + 1], 1, 1))
        assert_array_equal(alone.values[:, 0], batch.values[:, j])


def test_fcls_underdetermined_warns_but_solves():
    em = EndmemberMatrix(
        np.array([[0.9, 0.1, 0.5], [0.1, 0.9, 0.5]])
    )  # 2 bands, 3 materials
    y = PixelMatrix(np.array([[0.5], [0.5]]), 1, 1)
    with pytest.warns(UserWarning, match="fewer bands"):
        est = fcls(em, y)
    assert abs(est.values[:, 0].sum() - 1.0) <= 1e-9
    assert est.values.min() >= 0.0


def test_solution_type_fields():
    sol = solve_simplex_qp(QpProblem(np.eye(2), np.zeros(2)))
    assert isinstance(sol, QpSolution)
    assert_allclose(sol.a, [0.5, 0.5], rtol=0, atol=1e-15)
    assert sol.iterations >= 1
    assert not sol.shifted
