import numpy as np
import pytest
from numpy.testing import assert_allclose

from mpccstat.errors import InvalidArgument
from mpccstat.grid import CellSet, GridFunction, build_uniform_grid, constant
from mpccstat.mpcc_lin import (
    KktMultipliers,
    MpccLinProblem,
    _recover,
    compute_c0,
    kkt_residuals,
    min_l1_multiplier,
    min_linf_multiplier,
    mu_zero_candidate,
    solve_kkt_beta,
    solve_kkt_strong,
    solve_lp_beta,
)
from mpccstat.operators import ScaledIdentity, ScaledIdPlusAverage


def random_problem(rng, n):
    grid = build_uniform_grid(0.0, 1.0, n)
    labels = rng.integers(0, 3, size=n)
    return MpccLinProblem(
        a_op=ScaledIdPlusAverage(float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.1, 1.0))),
        f_u=GridFunction(grid, rng.normal(size=n)),
        f_w=GridFunction(grid, rng.normal(size=n)),
        f_xi=GridFunction(grid, rng.normal(size=n)),
        omega_0p=CellSet(grid, labels == 0),
        omega_00=CellSet(grid, labels == 1),
        omega_p0=CellSet(grid, labels == 2),
        omega_w=CellSet(grid, rng.random(n) < 0.5),
    )


class TestMpccLinProblem:
    def test_partition_enforced(self):
        grid = build_uniform_grid(0.0, 1.0, 3)
        with pytest.raises(InvalidArgument):
            MpccLinProblem(
                a_op=ScaledIdentity(1.0),
                f_u=grid.zeros(),
                f_w=grid.zeros(),
                f_xi=grid.zeros(),
                omega_0p=CellSet.from_indices(grid, [0, 1]),
                omega_00=CellSet.from_indices(grid, [1]),
                omega_p0=CellSet.from_indices(grid, [2]),
                omega_w=grid.full(),
            )

    def test_beta_must_be_biactive(self, rng, feasible_instance):
        prob = feasible_instance(rng, 6, min_p0=1).prob
        with pytest.raises(InvalidArgument):
            solve_kkt_beta(prob, prob.omega_p0)

    def test_iter_betas_covers_all_subsets(self, rng, feasible_instance):
        prob = feasible_instance(rng, 8).prob
        betas = [beta.indices for beta in prob.iter_betas()]
        assert len(betas) == 2**prob.omega_00.count
        assert len(set(betas)) == len(betas)


class TestKktBeta:
    def test_constructed_instances_are_feasible(self, rng, feasible_instance):
        for _ in range(30):
            prob, beta, _ = feasible_instance(rng, int(rng.integers(1, 10)))
            mult = solve_kkt_beta(prob, beta)
            assert mult is not None
            residuals = kkt_residuals(prob, prob.omega_00 - beta, beta, mult)
            scale = 1.0 + compute_c0(prob).max_abs()
            assert max(residuals.values()) <= 1e-8 * scale

            lp = solve_lp_beta(prob, beta)
            assert lp.optimal
            assert lp.objective_value == pytest.approx(0.0, abs=1e-8)

    def test_duality_consistency(self, rng):
        for _ in range(100):
            prob = random_problem(rng, int(rng.integers(1, 7)))
            for beta in prob.iter_betas():
                lp = solve_lp_beta(prob, beta)
                kkt = solve_kkt_beta(prob, beta)
                assert lp.optimal == (kkt is not None)
                if lp.optimal:
                    assert lp.objective_value == pytest.approx(0.0, abs=1e-8)

    def test_box_bounds_unbounded_lp(self, rng):
        for _ in range(50):
            prob = random_problem(rng, 4)
            beta = prob.grid.empty()
            if solve_lp_beta(prob, beta).optimal:
                continue
            boxed = solve_lp_beta(prob, beta, box=1.0)
            assert boxed.optimal
            assert boxed.objective_value < -1e-9
            return
        pytest.skip("no unbounded instance drawn")

    def test_recovery_keeps_sign_violations(self, one_cell_m_not_s):
        prob = one_cell_m_not_s
        full, empty = prob.grid.full(), prob.grid.empty()
        mult = _recover(prob, np.array([0.5]), full, full, empty, empty)
        assert mult.nu.values[0] == pytest.approx(0.5)
        assert mult.mu.values[0] == pytest.approx(0.5)
        # λ lives off Ω_w here, so only it is zeroed
        assert mult.lam.values[0] == 0.0
        residuals = kkt_residuals(prob, full, full, mult)
        assert residuals["nu_sign"] == pytest.approx(0.5)
        assert residuals["mu_sign"] == pytest.approx(0.5)
        assert residuals["stationarity_u"] == pytest.approx(0.0, abs=1e-15)

    def test_strong_system_is_abeta_for_every_beta(self, rng, feasible_instance):
        for _ in range(20):
            prob = feasible_instance(rng, 5).prob
            strong = solve_kkt_strong(prob)
            if strong is None:
                continue
            for beta in prob.iter_betas():
                residuals = kkt_residuals(prob, prob.omega_00 - beta, beta, strong)
                assert max(residuals.values()) <= 1e-8 * (1.0 + compute_c0(prob).max_abs())


class TestMultiplierNorms:
    def test_minimal_norms_below_constructed(self, rng, feasible_instance):
        for _ in range(20):
            prob, beta, mult = feasible_instance(rng, int(rng.integers(1, 8)))
            weights = prob.grid.weights
            l1 = min_l1_multiplier(prob, beta)
            linf = min_linf_multiplier(prob, beta)
            assert l1 is not None and linf is not None
            assert l1.value <= float(weights @ np.abs(mult.p.values)) + 1e-8
            assert linf.value <= mult.p.max_abs() + 1e-8
            assert linf.value <= l1.mult.p.max_abs() + 1e-8

    def test_infeasible_gives_none(self, one_cell_m_not_s):
        prob = one_cell_m_not_s
        assert min_l1_multiplier(prob, prob.grid.empty()) is None
        assert min_linf_multiplier(prob, prob.grid.empty()) is None


class TestHelpers:
    def test_c0_formula(self):
        grid = build_uniform_grid(0.0, 1.0, 2)
        prob = MpccLinProblem(
            a_op=ScaledIdentity(2.0),
            f_u=GridFunction(grid, [1.0, -1.0]),
            f_w=GridFunction(grid, [0.5, 0.0]),
            f_xi=GridFunction(grid, [0.0, -2.0]),
            omega_0p=grid.empty(),
            omega_00=grid.full(),
            omega_p0=grid.empty(),
            omega_w=grid.full(),
        )
        assert_allclose(compute_c0(prob).values, [4.5, 9.0])

    def test_combine_and_envelope(self, unit_grid):
        a = KktMultipliers(
            p=constant(unit_grid, 1.0),
            mu=constant(unit_grid, -2.0),
            nu=unit_grid.zeros(),
            lam=constant(unit_grid, 0.5),
        )
        b = KktMultipliers.zeros(unit_grid)
        combined = KktMultipliers.combine([a, b], [0.25, 0.75])
        assert_allclose(combined.p.values, 0.25)
        assert_allclose(combined.mu.values, -0.5)
        assert_allclose(a.envelope(), 2.0)
        assert set(a.as_dict()) == {"p", "mu", "nu", "lambda"}

    def test_mu_zero_candidate_averaging(self):
        grid = build_uniform_grid(0.0, 1.0, 16)
        alpha = 0.1
        prob = MpccLinProblem(
            a_op=ScaledIdPlusAverage(alpha, alpha**2),
            f_u=constant(grid, -1.0),
            f_w=constant(grid, 1.0),
            f_xi=grid.zeros(),
            omega_0p=grid.empty(),
            omega_00=grid.full(),
            omega_p0=grid.empty(),
            omega_w=grid.full(),
        )
        candidate = mu_zero_candidate(prob)
        assert_allclose(candidate.p.values, 1.0 / (alpha + alpha**2), rtol=1e-12)
        assert candidate.bound == pytest.approx(1.0)
        assert not candidate.admissible
