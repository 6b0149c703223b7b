import numpy as np
import pytest
from numpy.testing import assert_allclose

from mpccstat.errors import InvalidArgument, SolverFailure
from mpccstat.grid import GridFunction, build_uniform_grid, constant, inner_product, norm
from mpccstat.ioc_problem import IocProblem, QuadraticTracking
from mpccstat.lower_level import solve_oc
from mpccstat.regularization import (
    GammaSchedule,
    StepRule,
    adjoint_solve,
    newton_regularized,
    pi_eval,
    pi_prime,
    run_reg_path,
    solve_ioc_regularized,
    solve_regularized,
    t_gamma_derivative,
)
from mpccstat.operators import ScaledIdPlusAverage


def tracking_problem(rng, n=8, u_a=0.0):
    grid = build_uniform_grid(0.0, 1.0, n)
    return IocProblem.with_defaults(
        grid,
        ScaledIdPlusAverage(1.0, 0.5),
        0.5,
        QuadraticTracking(GridFunction(grid, rng.normal(size=n))),
        y_d=GridFunction(grid, rng.normal(size=n)),
        u_a=u_a,
        w_a=-5.0,
    )


class TestPenalty:
    def test_branches(self):
        assert pi_eval(-3.0) == pytest.approx(-2.5)
        assert pi_eval(-1.0) == pytest.approx(-0.5)
        assert pi_eval(-0.5) == pytest.approx(-0.125)
        assert pi_eval(0.0) == 0.0
        assert pi_eval(2.0) == 0.0
        assert_allclose(pi_prime(np.array([-2.0, -1.0, -0.25, 0.0, 1.0])), [1.0, 1.0, 0.25, 0.0, 0.0])

    def test_continuously_differentiable(self):
        s = np.linspace(-2.0, 1.0, 3001)
        eps = 1e-7
        fd = (pi_eval(s + eps) - pi_eval(s - eps)) / (2.0 * eps)
        assert_allclose(fd, pi_prime(s), atol=1e-6)
        assert np.all(np.diff(pi_prime(s)) <= 1e-15)


class TestNewton:
    def test_residual_tolerance(self, rng):
        ioc = tracking_problem(rng)
        w = GridFunction(ioc.grid, rng.normal(size=8))
        for gamma in (1.0, 1e3, 1e6):
            result = newton_regularized(ioc, w, gamma)
            assert result.residual <= 1e-11 * (1.0 + gamma)

    def test_rejects_bad_gamma(self, rng):
        ioc = tracking_problem(rng)
        with pytest.raises(InvalidArgument):
            newton_regularized(ioc, ioc.grid.zeros(), 0.0)

    def test_exhausted_iterations(self, rng):
        ioc = tracking_problem(rng, u_a=1.0)
        w = GridFunction(ioc.grid, rng.normal(size=8) - 3.0)
        with pytest.raises(SolverFailure) as e:
            newton_regularized(ioc, w, 1e6, u0=constant(ioc.grid, -10.0), max_iter=0)
        assert len(e.value.history) == 1


class TestDerivatives:
    def test_linear_regime_is_exact(self, rng):
        ioc = tracking_problem(rng, u_a=-100.0)
        w = GridFunction(ioc.grid, rng.uniform(size=8))
        h = GridFunction(ioc.grid, rng.normal(size=8))
        gamma = 10.0
        u = solve_regularized(ioc, w, gamma)
        eps = 1e-2
        fd = (solve_regularized(ioc, w + h * eps, gamma) - u) / eps
        assert_allclose(fd.values, t_gamma_derivative(ioc, u, gamma, h).values, atol=1e-7)

    def test_finite_differences_with_active_penalty(self, rng):
        gamma, eps = 10.0, 3e-4
        checked = 0
        while checked < 50:
            ioc = tracking_problem(rng, u_a=0.5)
            w = GridFunction(ioc.grid, rng.normal(size=8))
            h = GridFunction(ioc.grid, rng.normal(size=8))
            u = solve_regularized(ioc, w, gamma)
            gap = (u - ioc.u_a).values
            # π'' jumps at 0 and -1
            if min(np.min(np.abs(gap)), np.min(np.abs(gap + 1.0))) < 0.05:
                continue
            plus = solve_regularized(ioc, w + h * eps, gamma)
            minus = solve_regularized(ioc, w - h * eps, gamma)
            fd = (plus - minus) / (2.0 * eps)
            derivative = t_gamma_derivative(ioc, u, gamma, h)
            assert norm(fd - derivative) <= 1e-5 * norm(derivative)
            checked += 1

    def test_adjoint_identity(self, rng):
        ioc = tracking_problem(rng, u_a=0.2)
        w = GridFunction(ioc.grid, rng.normal(size=8))
        gamma = 100.0
        u = solve_regularized(ioc, w, gamma)
        p = adjoint_solve(ioc, u, gamma)
        for _ in range(100):
            h = GridFunction(ioc.grid, rng.normal(size=8))
            v = t_gamma_derivative(ioc, u, gamma, h)
            assert inner_product(ioc.f_prime(u), v) == pytest.approx(-inner_product(p, h), rel=1e-9, abs=1e-12)


class TestGammaSchedule:
    def test_gammas(self):
        assert_allclose(GammaSchedule(2.0, 10.0, 3).gammas, [2.0, 20.0, 200.0, 2000.0])

    @pytest.mark.parametrize("kwargs", [{"gamma0": 0.0}, {"factor": 1.0}, {"steps": -1}])
    def test_validation(self, kwargs):
        with pytest.raises(InvalidArgument):
            GammaSchedule(**kwargs)


class TestRegPath:
    def test_report_shape(self, rng):
        ioc = tracking_problem(rng, u_a=0.0)
        w = GridFunction(ioc.grid, rng.normal(size=8))
        report = run_reg_path(ioc, w, GammaSchedule(1.0, 10.0, 8))
        assert report.gammas[-1] == pytest.approx(1e8)
        assert report.errors_to_vi[-1] <= report.errors_to_vi[0] + 1e-12
        assert len(report.rows()) == 9
        assert report.final_w is None
        assert report.as_dict()["final_w"] is None

    def test_square_root_rate(self, rng):
        # in the -½s² branch γ·½s² balances ξ*, so the violation is √(2ξ*/γ)
        for _ in range(50):
            ioc = tracking_problem(rng, u_a=0.0)
            w = GridFunction(ioc.grid, rng.normal(size=8))
            report = run_reg_path(ioc, w, GammaSchedule(1.0, 10.0, 8))
            rate = np.sqrt(2.0 * solve_oc(ioc, w).xi.max_abs() / report.gammas)
            assert report.violations[-1] <= 1.5 * rate[-1] + 1e-12
            assert report.errors_to_vi[-1] <= 10.0 * rate[-1] + 1e-12
            if report.errors_to_vi[-1] > 1e-10:
                order = np.log10(report.errors_to_vi[-3] / report.errors_to_vi[-1]) / 2.0
                assert 0.35 <= order <= 0.65


class TestDescent:
    def test_objectives_decrease(self, rng):
        ioc = tracking_problem(rng, u_a=0.0)
        result = solve_ioc_regularized(ioc, ioc.grid.zeros(), 100.0, tol=1e-6, max_iter=3000)
        assert result.residuals[-1] <= 1e-6
        assert all(b <= a + 1e-12 for a, b in zip(result.objectives, result.objectives[1:]))
        assert np.all(result.w.values >= ioc.w_a.values)

    def test_constant_steps(self, rng):
        ioc = tracking_problem(rng, u_a=0.0)
        result = solve_ioc_regularized(
            ioc, ioc.grid.zeros(), 10.0, step_rule=StepRule(kind="constant", initial=0.01), tol=1e-5, max_iter=5000
        )
        assert result.residuals[-1] <= 1e-5

    def test_rejects_infeasible_start(self, rng):
        ioc = tracking_problem(rng)
        with pytest.raises(InvalidArgument):
            solve_ioc_regularized(ioc, constant(ioc.grid, -10.0), 10.0)
