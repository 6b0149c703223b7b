import numpy as np
import pytest
from numpy.testing import assert_allclose

from mpccstat.errors import InvalidArgument
from mpccstat.grid import GridFunction, build_uniform_grid, constant, inner_product
from mpccstat.operators import (
    DiscreteLaplacian1D,
    GramComposition,
    InverseDirichletLaplacian1D,
    Matrix,
    RankOneAverage,
    ScaledIdentity,
    ScaledIdPlusAverage,
    Sum,
    adjoint_gap,
    adjoint_matrix,
    check_nonneg_preserving,
    h1_seminorm_sq,
    neg_laplacian_apply,
    obstacle_operator,
)


class TestScaledIdPlusAverage:
    def test_apply(self):
        grid = build_uniform_grid(0.0, 1.0, 2)
        op = ScaledIdPlusAverage(1.0, 1.0)
        assert_allclose(op.apply(GridFunction(grid, [1.0, 3.0])).values, [3.0, 5.0])

    def test_constants_are_eigenfunctions(self):
        grid = build_uniform_grid(0.0, 2.0, 5)
        op = ScaledIdPlusAverage(0.5, 0.25)
        image = op.apply(constant(grid, 1.0))
        assert_allclose(image.values, op.eigenvalue_on_constants(grid))

    def test_rejects_nonpositive_weights(self):
        with pytest.raises(InvalidArgument):
            ScaledIdPlusAverage(1.0, 0.0)


class TestAdjoints:
    @pytest.mark.parametrize("n", [1, 4, 9])
    def test_adjoint_mismatch(self, rng, n):
        grid = build_uniform_grid(-1.0, 1.0, n)
        ops = [
            Matrix(rng.normal(size=(n, n))),
            InverseDirichletLaplacian1D(grid),
            ScaledIdPlusAverage(1.5, 0.3),
            RankOneAverage(0.7),
            Sum((ScaledIdentity(2.0), GramComposition(Matrix(rng.normal(size=(n, n)))))),
        ]
        for op in ops:
            for _ in range(5):
                u = GridFunction(grid, rng.normal(size=n))
                v = GridFunction(grid, rng.normal(size=n))
                assert adjoint_gap(op, u, v) <= 1e-10 * (1.0 + abs(inner_product(op.apply(u), v)))

    def test_adjoint_matrix_matches_apply_adjoint(self, rng):
        grid = build_uniform_grid(0.0, 1.0, 6)
        op = Matrix(rng.normal(size=(6, 6)))
        v = GridFunction(grid, rng.normal(size=6))
        assert_allclose(adjoint_matrix(op, grid) @ v.values, op.apply_adjoint(v).values, atol=1e-12)


class TestLaplacian:
    def test_inverse(self, rng):
        grid = build_uniform_grid(-1.0, 1.0, 32)
        v = GridFunction(grid, rng.normal(size=32))
        s = InverseDirichletLaplacian1D(grid)
        assert_allclose(neg_laplacian_apply(grid, s.apply(v)).values, v.values, atol=1e-9)

    def test_matrices_are_inverse(self):
        grid = build_uniform_grid(0.0, 1.0, 10)
        product = DiscreteLaplacian1D(grid).matrix(grid) @ InverseDirichletLaplacian1D(grid).matrix(grid)
        assert_allclose(product, np.eye(10), atol=1e-9)

    def test_inverse_is_nonnegative(self):
        grid = build_uniform_grid(0.0, 1.0, 10)
        assert np.all(InverseDirichletLaplacian1D(grid).matrix(grid) >= 0.0)

    def test_h1_seminorm_of_constant(self):
        grid = build_uniform_grid(0.0, 1.0, 4)
        # Only the two boundary jumps contribute
        assert h1_seminorm_sq(grid, constant(grid, 1.0)) == pytest.approx(2.0 / grid.h)

    def test_h1_seminorm_is_energy(self, rng):
        grid = build_uniform_grid(0.0, 1.0, 12)
        w = GridFunction(grid, rng.normal(size=12))
        assert h1_seminorm_sq(grid, w) == pytest.approx(inner_product(neg_laplacian_apply(grid, w), w))


class TestNonnegativity:
    def test_structural_answers(self):
        grid = build_uniform_grid(0.0, 1.0, 4)
        assert check_nonneg_preserving(ScaledIdPlusAverage(1.0, 1.0))
        assert check_nonneg_preserving(InverseDirichletLaplacian1D(grid))
        assert not check_nonneg_preserving(ScaledIdentity(-1.0))

    def test_assembled(self, rng):
        grid = build_uniform_grid(0.0, 1.0, 4)
        entries = np.abs(rng.normal(size=(4, 4)))
        assert check_nonneg_preserving(GramComposition(Matrix(entries)), grid)
        entries[1, 2] = -1.0
        assert not check_nonneg_preserving(Matrix(entries), grid)

    def test_unknown_without_grid(self, rng):
        rotation = Matrix(np.array([[0.0, -1.0], [1.0, 0.0]]))
        with pytest.raises(InvalidArgument):
            check_nonneg_preserving(GramComposition(rotation))


class TestObstacleOperator:
    def test_rank_one_collapses_to_averaging(self):
        grid = build_uniform_grid(0.0, 1.0, 8)
        alpha = 0.25
        op = obstacle_operator(alpha, RankOneAverage.embedding(grid, alpha), grid)
        assert isinstance(op, ScaledIdPlusAverage)
        assert op.d1 == pytest.approx(alpha)
        assert op.d2 == pytest.approx(alpha**2)

    @pytest.mark.parametrize("s_kind", ["identity", "rank_one", "averaging", "matrix"])
    def test_matches_gram_form(self, rng, s_kind):
        grid = build_uniform_grid(0.0, 2.0, 5)
        s_op = {
            "identity": ScaledIdentity(0.8),
            "rank_one": RankOneAverage(0.6),
            "averaging": ScaledIdPlusAverage(0.9, 0.4),
            "matrix": Matrix(rng.normal(size=(5, 5))),
        }[s_kind]
        alpha = 0.3
        expected = alpha * np.eye(5) + GramComposition(s_op).matrix(grid)
        assert_allclose(obstacle_operator(alpha, s_op, grid).matrix(grid), expected, atol=1e-12)

    def test_rejects_nonpositive_alpha(self):
        grid = build_uniform_grid(0.0, 1.0, 2)
        with pytest.raises(InvalidArgument):
            obstacle_operator(0.0, ScaledIdentity(1.0), grid)
