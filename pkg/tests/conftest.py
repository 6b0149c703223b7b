from __future__ import annotations

import typing as t
from pathlib import Path

import numpy as np
import pytest

from mpccstat.grid import CellSet, Grid, GridFunction, build_uniform_grid
from mpccstat.mpcc_lin import KktMultipliers, MpccLinProblem
from mpccstat.operators import LinOp, ScaledIdentity, ScaledIdPlusAverage

PROBLEMS_DIR = Path(__file__).parent.parent / "problems"


class FeasibleInstance(t.NamedTuple):
    prob: MpccLinProblem
    beta: CellSet
    mult: KktMultipliers


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_grid() -> Grid:
    return build_uniform_grid(0.0, 1.0, 8)


@pytest.fixture
def problems_dir() -> Path:
    return PROBLEMS_DIR


def _random_partition(rng: np.random.Generator, n: int, with_p0: bool, min_p0: int) -> np.ndarray:
    labels = rng.integers(0, 3 if with_p0 else 2, size=n)
    if with_p0 and min_p0:
        labels[rng.choice(n, size=min_p0, replace=False)] = 2
    return labels


@pytest.fixture
def feasible_instance() -> t.Callable[..., FeasibleInstance]:
    """
    Factory of linear MPCCs built backwards from multipliers, so KKT(β) is
    feasible by construction.

    Labels: 0 is Ω^{0+}, 1 is Ω^{00}, 2 is Ω^{+0}.
    """

    def build(
        rng: np.random.Generator,
        n: int,
        a_op: LinOp | None = None,
        with_p0: bool = True,
        min_p0: int = 0,
    ) -> FeasibleInstance:
        grid = build_uniform_grid(0.0, 1.0, n)
        if a_op is None:
            a_op = ScaledIdPlusAverage(float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.1, 2.0)))
        labels = _random_partition(rng, n, with_p0, min_p0)
        omega_0p = CellSet(grid, labels == 0)
        omega_00 = CellSet(grid, labels == 1)
        omega_p0 = CellSet(grid, labels == 2)
        omega_w = CellSet(grid, rng.random(n) < 0.6)
        beta = CellSet(grid, omega_00.mask & (rng.random(n) < 0.5))
        rest = omega_00 - beta

        p = rng.normal(size=n)
        lam = np.where(omega_w.mask, -np.abs(rng.normal(size=n)), 0.0)
        mu = rng.normal(size=n)
        mu[omega_p0.mask] = 0.0
        mu[rest.mask] = -np.abs(mu[rest.mask])
        nu = rng.normal(size=n)
        nu[omega_0p.mask] = 0.0
        nu[beta.mask] = -np.abs(nu[beta.mask])

        mult = KktMultipliers(
            p=GridFunction(grid, p),
            mu=GridFunction(grid, mu),
            nu=GridFunction(grid, nu),
            lam=GridFunction(grid, lam),
        )
        prob = MpccLinProblem(
            a_op=a_op,
            f_u=-(a_op.apply_adjoint(mult.p) + mult.mu),
            f_w=mult.p - mult.lam,
            f_xi=mult.p - mult.nu,
            omega_0p=omega_0p,
            omega_00=omega_00,
            omega_p0=omega_p0,
            omega_w=omega_w,
        )
        return FeasibleInstance(prob, beta, mult)

    return build


@pytest.fixture
def one_cell_m_not_s() -> MpccLinProblem:
    """
    One biactive cell with F_u = -1 and F_w = F_ξ = 0 off Ω_w: the only
    multipliers are p = ν = λ = 0, μ = 1, so the origin is M- but not
    S-stationary.
    """
    grid = build_uniform_grid(0.0, 1.0, 1)
    return MpccLinProblem(
        a_op=ScaledIdentity(1.0),
        f_u=GridFunction(grid, [-1.0]),
        f_w=grid.zeros(),
        f_xi=grid.zeros(),
        omega_0p=grid.empty(),
        omega_00=grid.full(),
        omega_p0=grid.empty(),
        omega_w=grid.empty(),
    )
