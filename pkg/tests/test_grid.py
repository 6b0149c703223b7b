import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mpccstat.errors import InvalidArgument
from mpccstat.grid import (
    CellSet,
    Grid,
    GridFunction,
    build_uniform_grid,
    constant,
    from_callable,
    inner_product,
    measure,
    norm,
    pointwise,
)


class TestBuildUniformGrid:
    def test_two_cells(self):
        grid = build_uniform_grid(0.0, 1.0, 2)
        assert_allclose(grid.weights, [0.5, 0.5])
        assert_allclose(grid.midpoints, [0.25, 0.75])

    def test_symmetric_interval(self):
        grid = build_uniform_grid(-1.0, 1.0, 4)
        assert_allclose(grid.weights, 0.5)
        assert_allclose(grid.midpoints, [-0.75, -0.25, 0.25, 0.75])
        assert grid.h == pytest.approx(0.5)

    @pytest.mark.parametrize("a, b, n", [(0.0, 1.0, 0), (1.0, 0.0, 4), (0.0, np.inf, 4), (0.0, 1.0, 2.5)])
    def test_rejects_bad_input(self, a, b, n):
        with pytest.raises(InvalidArgument):
            build_uniform_grid(a, b, n)

    def test_grid_checks_weights(self):
        with pytest.raises(InvalidArgument):
            Grid(weights=np.array([0.5, 0.4]), midpoints=np.array([0.25, 0.75]), interval=(0.0, 1.0))
        with pytest.raises(InvalidArgument):
            Grid(weights=np.array([0.5, 0.5]), midpoints=np.array([0.75, 0.25]), interval=(0.0, 1.0))


class TestGridFunction:
    def test_length_must_match(self, unit_grid):
        with pytest.raises(InvalidArgument):
            GridFunction(unit_grid, np.zeros(3))

    def test_values_must_be_finite(self, unit_grid):
        values = np.zeros(unit_grid.n)
        values[2] = np.nan
        with pytest.raises(InvalidArgument):
            GridFunction(unit_grid, values)

    def test_arithmetic(self, unit_grid):
        u = from_callable(unit_grid, lambda x: x)
        v = constant(unit_grid, 2.0)
        assert_allclose((u + v).values, unit_grid.midpoints + 2.0)
        assert_allclose((u * v - 1.0).values, 2.0 * unit_grid.midpoints - 1.0)
        assert_allclose((-u / 2.0).values, -0.5 * unit_grid.midpoints)

    def test_grid_mismatch(self, unit_grid):
        other = build_uniform_grid(0.0, 2.0, unit_grid.n)
        with pytest.raises(InvalidArgument):
            inner_product(unit_grid.zeros(), other.zeros())


class TestInnerProduct:
    def test_constant_one(self):
        grid = build_uniform_grid(0.0, 1.0, 2)
        one = constant(grid, 1.0)
        assert inner_product(one, one) == pytest.approx(1.0)

    def test_disjoint_supports(self):
        grid = build_uniform_grid(0.0, 3.0, 2)
        assert inner_product(GridFunction(grid, [2.0, 0.0]), GridFunction(grid, [0.0, 3.0])) == 0.0

    def test_cancellation(self):
        grid = build_uniform_grid(0.0, 1.0, 2)
        assert inner_product(GridFunction(grid, [1.0, -1.0]), GridFunction(grid, [1.0, 1.0])) == pytest.approx(0.0)

    def test_symmetric_and_bilinear(self, rng):
        for n in (1, 5, 17):
            grid = build_uniform_grid(-2.0, 3.0, n)
            u, v, w = (GridFunction(grid, rng.normal(size=n)) for _ in range(3))
            a, b = rng.normal(size=2)
            assert inner_product(u, v) == pytest.approx(inner_product(v, u), abs=1e-12)
            assert inner_product(u * a + v * b, w) == pytest.approx(
                a * inner_product(u, w) + b * inner_product(v, w), abs=1e-10
            )

    def test_norm_definite(self, rng, unit_grid):
        assert norm(unit_grid.zeros()) == 0.0
        assert norm(GridFunction(unit_grid, rng.normal(size=unit_grid.n))) > 0.0


class TestCellSet:
    def test_measure(self, unit_grid):
        assert measure(unit_grid.full()) == pytest.approx(1.0)
        assert measure(unit_grid.empty()) == 0.0
        grid = build_uniform_grid(0.0, 1.0, 2)
        assert measure(CellSet(grid, [True, False])) == pytest.approx(0.5)

    def test_measure_additive(self, rng, unit_grid):
        mask = rng.random(unit_grid.n) < 0.5
        s1 = CellSet(unit_grid, mask & (rng.random(unit_grid.n) < 0.5))
        s2 = CellSet(unit_grid, ~mask)
        assert s1.isdisjoint(s2)
        assert measure(s1 | s2) == pytest.approx(measure(s1) + measure(s2))

    def test_set_algebra(self, unit_grid):
        a = CellSet.from_indices(unit_grid, [0, 1, 2])
        b = CellSet.from_indices(unit_grid, [2, 3])
        assert (a & b).indices == (2,)
        assert (a | b).indices == (0, 1, 2, 3)
        assert (a - b).indices == (0, 1)
        assert (~a).count == unit_grid.n - 3
        assert unit_grid.empty().is_empty()
        assert CellSet.from_indices(unit_grid, [1]).issubset(a)
        assert_array_equal(b.indicator().values, [0, 0, 1, 1, 0, 0, 0, 0])

    def test_index_out_of_range(self, unit_grid):
        with pytest.raises(InvalidArgument):
            CellSet.from_indices(unit_grid, [unit_grid.n])


class TestPointwise:
    def test_negative_part(self):
        grid = build_uniform_grid(0.0, 1.0, 2)
        assert_array_equal(pointwise(GridFunction(grid, [-2.0, 3.0]), "negative-part").values, [2.0, 0.0])

    def test_abs(self):
        grid = build_uniform_grid(0.0, 1.0, 2)
        assert_array_equal(pointwise(GridFunction(grid, [-1.0, 1.0]), "abs").values, [1.0, 1.0])

    def test_max_with(self):
        grid = build_uniform_grid(0.0, 1.0, 2)
        assert_array_equal(pointwise(GridFunction(grid, [-0.5, 0.5]), "max-with", 0.0).values, [0.0, 0.5])

    def test_needs_operand(self, unit_grid):
        with pytest.raises(InvalidArgument):
            pointwise(unit_grid.zeros(), "scale")
