import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import cholesky
from scipy.optimize import lsq_linear

from mpccstat.grid import GridFunction, build_uniform_grid, constant, norm
from mpccstat.ioc_problem import IocProblem, LinearIntegral, QuadraticTracking
from mpccstat.lower_level import directional_derivative, reduced_objective, solve_oc, vi_residual
from mpccstat.operators import ScaledIdentity, ScaledIdPlusAverage, h1_seminorm_sq


def no_observation_problem(n=6, alpha=0.5, u_a=0.0):
    grid = build_uniform_grid(0.0, 1.0, n)
    return IocProblem.with_defaults(
        grid,
        ScaledIdentity(0.0),
        alpha,
        LinearIntegral(constant(grid, 1.0)),
        u_a=u_a,
    )


def averaging_problem(rng, n=10, alpha=0.3):
    grid = build_uniform_grid(0.0, 1.0, n)
    return IocProblem.with_defaults(
        grid,
        ScaledIdPlusAverage(1.0, 0.5),
        alpha,
        QuadraticTracking(GridFunction(grid, rng.normal(size=n))),
        y_d=GridFunction(grid, rng.normal(size=n)),
        u_a=GridFunction(grid, rng.normal(scale=0.5, size=n)),
    )


class TestSolveOc:
    def test_without_observation_projects_w(self):
        ioc = no_observation_problem(u_a=0.25)
        w = GridFunction(ioc.grid, [-1.0, 0.0, 0.25, 0.5, 1.0, 0.1])
        sol = solve_oc(ioc, w)
        assert_allclose(sol.u.values, np.maximum(0.25, w.values), atol=1e-12)
        assert_allclose(sol.xi.values, np.maximum(0.25 - w.values, 0.0) * ioc.alpha, atol=1e-12)
        assert sol.active_sets.biactive.indices == (2,)
        assert sol.active_sets.inactive.indices == (3, 4)

    def test_vi_residual_small(self, rng):
        for _ in range(10):
            ioc = averaging_problem(rng)
            w = GridFunction(ioc.grid, rng.normal(size=ioc.grid.n))
            sol = solve_oc(ioc, w)
            assert sol.vi_residual <= 1e-10
            assert vi_residual(ioc, w, sol.u) <= 1e-9
            assert np.all(sol.u.values >= ioc.u_a.values - 1e-12)

    def test_minimizes_lower_objective(self, rng):
        ioc = averaging_problem(rng)
        w = GridFunction(ioc.grid, rng.normal(size=ioc.grid.n))
        u = solve_oc(ioc, w).u
        best = ioc.lower_objective(u, w)
        for _ in range(20):
            trial = GridFunction(ioc.grid, np.maximum(ioc.u_a.values, u.values + 1e-3 * rng.normal(size=ioc.grid.n)))
            assert ioc.lower_objective(trial, w) >= best - 1e-12

    def test_reduced_objective(self):
        ioc = no_observation_problem(n=4)
        w = constant(ioc.grid, 1.0)
        u = solve_oc(ioc, w).u
        expected = 1.0 + 0.5 * h1_seminorm_sq(ioc.grid, w)
        assert reduced_objective(ioc, w, u) == pytest.approx(expected)


class TestDirectionalDerivative:
    def test_projection_case(self):
        ioc = no_observation_problem()
        w = GridFunction(ioc.grid, [-1.0, 0.0, 0.0, 0.5, 1.0, -0.2])
        h = GridFunction(ioc.grid, [1.0, 1.0, -1.0, -2.0, 3.0, -1.0])
        sol = solve_oc(ioc, w)
        d = directional_derivative(ioc, w, sol, h)
        assert_allclose(d.values, [0.0, 1.0, 0.0, -2.0, 3.0, 0.0], atol=1e-12)

    def test_positively_homogeneous(self, rng):
        ioc = averaging_problem(rng)
        w = GridFunction(ioc.grid, rng.normal(size=ioc.grid.n))
        sol = solve_oc(ioc, w)
        h = GridFunction(ioc.grid, rng.normal(size=ioc.grid.n))
        assert_allclose(
            directional_derivative(ioc, w, sol, h * 2.5).values,
            2.5 * directional_derivative(ioc, w, sol, h).values,
            atol=1e-10,
        )

    def test_lipschitz_in_direction(self, rng):
        ioc = averaging_problem(rng)
        w = GridFunction(ioc.grid, rng.normal(size=ioc.grid.n))
        sol = solve_oc(ioc, w)
        for _ in range(100):
            h1 = GridFunction(ioc.grid, rng.normal(size=ioc.grid.n))
            h2 = GridFunction(ioc.grid, rng.normal(size=ioc.grid.n))
            d1 = directional_derivative(ioc, w, sol, h1)
            d2 = directional_derivative(ioc, w, sol, h2)
            assert norm(d1 - d2) <= norm(h1 - h2) + 1e-10

    def test_matches_finite_differences(self, rng):
        ioc = averaging_problem(rng)
        w = GridFunction(ioc.grid, rng.normal(size=ioc.grid.n))
        sol = solve_oc(ioc, w)
        h = GridFunction(ioc.grid, rng.normal(size=ioc.grid.n))
        eps = 1e-7
        moved = solve_oc(ioc, w + h * eps).u
        assert_allclose(
            ((moved - sol.u) / eps).values,
            directional_derivative(ioc, w, sol, h).values,
            atol=1e-5,
        )


class TestProjectionFormula:
    def test_matches_bounded_least_squares(self, rng):
        for _ in range(5):
            ioc = averaging_problem(rng, n=12)
            w = GridFunction(ioc.grid, rng.normal(size=12))
            weights = ioc.grid.weights
            hessian = weights[:, np.newaxis] * ioc.a_matrix
            hessian = 0.5 * (hessian + hessian.T)
            rhs = (ioc.s_star_y_d + w * ioc.alpha).values
            target = np.linalg.solve(ioc.a_matrix, rhs)
            factor = cholesky(hessian)
            reference = lsq_linear(
                factor,
                factor @ target,
                bounds=(ioc.u_a.values, np.inf),
                method="bvls",
            )
            assert_allclose(solve_oc(ioc, w).u.values, reference.x, atol=1e-8)
