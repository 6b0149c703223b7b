import numpy as np
import pytest

from mpccstat.errors import InvalidArgument, InvalidPoint, ProblemTooLarge
from mpccstat.grid import CellSet, GridFunction, build_uniform_grid, constant
from mpccstat.mpcc_lin import KktMultipliers, MpccLinProblem
from mpccstat.operators import ScaledIdentity
from mpccstat.stationarity import (
    check_abeta,
    check_m_condition,
    check_mstat,
    check_s,
    check_weak,
    certify_abeta,
    certify_aforall,
    certify_s,
    certify_weak,
    classify_active_sets,
    m_residual,
)


def gf(values):
    values = np.asarray(values, dtype=float)
    return GridFunction(build_uniform_grid(0.0, 1.0, values.size), values)


class TestPointwiseConditions:
    def test_m_residual_examples(self):
        grid = build_uniform_grid(0.0, 1.0, 1)
        full = grid.full()
        assert m_residual(gf([-1.0]), gf([-2.0]), full) == 0.0
        assert m_residual(gf([1.0]), gf([0.0]), full) == 0.0
        assert m_residual(gf([1.0]), gf([1.0]), full) == pytest.approx(1.0 / 3.0)
        assert m_residual(gf([-1.0]), gf([1.0]), full) == pytest.approx(1.0 / 3.0)

    def test_m_residual_only_on_biactive(self):
        mu, nu = gf([1.0, 1.0]), gf([1.0, 0.0])
        assert m_residual(mu, nu, CellSet.from_indices(mu.grid, [1])) == 0.0
        assert not check_m_condition(mu, nu, mu.grid.full())

    def test_s_and_abeta(self):
        mu, nu = gf([-1.0, 2.0]), gf([3.0, -1.0])
        grid = mu.grid
        assert not check_s(mu, nu, grid.full())
        assert check_s(mu, nu, grid.empty())
        assert check_abeta(mu, nu, grid.full(), CellSet.from_indices(grid, [1]))
        assert not check_abeta(mu, nu, grid.full(), CellSet.from_indices(grid, [0]))
        with pytest.raises(InvalidArgument):
            check_abeta(mu, nu, CellSet.from_indices(grid, [0]), grid.full())


class TestClassifyActiveSets:
    def test_partition(self):
        u = gf([0.0, 1.0, 0.0, 0.0])
        xi = gf([2.0, 0.0, 0.0, 1e-12])
        sets = classify_active_sets(u, xi, u.grid.zeros())
        assert sets.strongly_active.indices == (0,)
        assert sets.inactive.indices == (1,)
        assert sets.biactive.indices == (2, 3)

    def test_obstacle_shift(self):
        u = gf([1.5, 1.0])
        sets = classify_active_sets(u, gf([0.0, 0.0]), constant(u.grid, 1.0))
        assert sets.inactive.indices == (0,)
        assert sets.biactive.indices == (1,)

    @pytest.mark.parametrize(
        "u, xi",
        [
            ([-1.0], [0.0]),
            ([0.0], [-1.0]),
            ([1.0], [1.0]),
        ],
    )
    def test_invalid_point(self, u, xi):
        u = gf(u)
        with pytest.raises(InvalidPoint):
            classify_active_sets(u, gf(xi), u.grid.zeros())


class TestCertificates:
    def test_one_cell_m_not_s(self, one_cell_m_not_s):
        prob = one_cell_m_not_s
        grid = prob.grid

        assert certify_weak(prob).verdict
        assert not certify_s(prob).verdict
        assert not certify_abeta(prob, grid.empty()).verdict
        abeta = certify_abeta(prob, grid.full())
        assert abeta.verdict
        assert abeta.beta == (0,)

        aforall = certify_aforall(prob)
        assert not aforall.verdict
        assert aforall.beta == ()

        mult = KktMultipliers(
            p=grid.zeros(),
            mu=constant(grid, 1.0),
            nu=grid.zeros(),
            lam=grid.zeros(),
        )
        assert check_weak(prob, mult).verdict
        cert = check_mstat(prob, mult)
        assert cert.verdict
        assert cert.residuals["m_condition"] == 0.0

    def test_infeasible_is_reported_as_inf(self, one_cell_m_not_s):
        cert = certify_s(one_cell_m_not_s)
        assert cert.residuals == {"feasibility": float("inf")}
        assert cert.multipliers is None

    def test_strong_implies_aforall(self, rng, feasible_instance):
        checked = 0
        for _ in range(30):
            prob = feasible_instance(rng, int(rng.integers(1, 6))).prob
            s_cert = certify_s(prob)
            if not s_cert.verdict:
                continue
            checked += 1
            assert certify_aforall(prob).verdict
            assert check_mstat(prob, s_cert.multipliers).verdict
        assert checked > 0

    def test_constructed_beta_certifies(self, rng, feasible_instance):
        for _ in range(20):
            prob, beta, _ = feasible_instance(rng, int(rng.integers(1, 8)))
            cert = certify_abeta(prob, beta, tol=1e-7)
            assert cert.verdict
            assert cert.as_dict()["beta"] == list(beta.indices)

    def test_aforall_cap(self):
        grid = build_uniform_grid(0.0, 1.0, 5)
        prob = MpccLinProblem(
            a_op=ScaledIdentity(1.0),
            f_u=grid.zeros(),
            f_w=grid.zeros(),
            f_xi=grid.zeros(),
            omega_0p=grid.empty(),
            omega_00=grid.full(),
            omega_p0=grid.empty(),
            omega_w=grid.full(),
        )
        with pytest.raises(ProblemTooLarge):
            certify_aforall(prob, cap=3)
        cert = certify_aforall(prob, cap=5)
        assert cert.verdict
        assert cert.details["checked"] == 32

    def test_with_flags_merges(self, one_cell_m_not_s):
        cert = certify_weak(one_cell_m_not_s).with_flags("a", notes=("x",)).with_flags("a", "b")
        assert cert.flags == ("a", "b")
        assert cert.notes == ("x",)
