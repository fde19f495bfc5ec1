"""Triangle indexing, regions, reserves and CSV round trips."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from reserve_lasso.triangle import (
    Cell,
    Triangle,
    future_cells,
    past_cells,
    payment_period,
    read_triangle_csv,
    reserve,
    triangle_from_arrays,
    write_triangle_csv,
)


class TestPaymentPeriod:
    def test_first_cell(self):
        assert payment_period(1, 1) == 1

    def test_last_diagonal_of_40(self):
        assert payment_period(40, 1) == 40

    def test_direct_arithmetic(self):
        assert payment_period(17, 21) == 37

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            payment_period(0, 1)

    @given(st.integers(1, 500), st.integers(1, 500))
    def test_strictly_increasing_in_each_argument(self, i, j):
        assert payment_period(i + 1, j) > payment_period(i, j)
        assert payment_period(i, j + 1) > payment_period(i, j)


class TestRegions:
    def test_past_cells_side_2(self):
        assert past_cells(2) == [Cell(1, 1), Cell(1, 2), Cell(2, 1)]

    def test_past_count_side_40(self):
        # I*(I+1)/2
        assert len(past_cells(40)) == 820

    def test_past_single_cell(self):
        assert past_cells(1) == [Cell(1, 1)]

    def test_future_side_2(self):
        assert future_cells(2).cells == (Cell(2, 2),)

    def test_future_side_3(self):
        assert set(future_cells(3).cells) == {Cell(2, 3), Cell(3, 2), Cell(3, 3)}

    def test_future_count_side_40(self):
        # I*(I-1)/2
        assert len(future_cells(40)) == 780

    @given(st.integers(1, 60))
    def test_partition_of_square(self, side):
        past = past_cells(side)
        fut = future_cells(side)
        assert len(past) + len(fut) == side * side
        assert set(past).isdisjoint(fut.cells)
        assert all(c.i + c.j > side + 1 for c in fut.cells)


class TestTriangle:
    def test_requires_exact_cells(self):
        with pytest.raises(ValueError, match="missing"):
            Triangle(I=2, values={Cell(1, 1): 1.0, Cell(1, 2): 2.0})

    def test_rejects_non_positive_values(self):
        with pytest.raises(ValueError, match="non-positive"):
            triangle_from_arrays(2, [1.0, 0.0, 2.0])

    def test_canonical_order(self):
        tri = triangle_from_arrays(3, [1, 2, 3, 4, 5, 6])
        assert list(tri.as_array()) == [1, 2, 3, 4, 5, 6]
        assert tri.cells[:3] == (Cell(1, 1), Cell(1, 2), Cell(1, 3))


class TestReserve:
    def test_single_future_cell(self):
        region = future_cells(2)
        assert reserve({Cell(2, 2): 5.0}, region) == 5.0

    def test_sums_all_cells(self):
        region = future_cells(3)
        forecasts = {Cell(2, 3): 1.0, Cell(3, 2): 2.0, Cell(3, 3): 3.0}
        assert reserve(forecasts, region) == 6.0

    def test_all_zero(self):
        region = future_cells(3)
        assert reserve({c: 0.0 for c in region.cells}, region) == 0.0

    def test_missing_cell_errors(self):
        region = future_cells(3)
        with pytest.raises(ValueError, match="incomplete"):
            reserve({Cell(2, 3): 1.0}, region)

    @given(
        st.lists(st.floats(0, 1e6), min_size=3, max_size=3),
        st.lists(st.floats(0, 1e6), min_size=3, max_size=3),
        st.floats(0, 10),
        st.floats(0, 10),
    )
    def test_linearity(self, f_vals, g_vals, a, b):
        region = future_cells(3)
        f = dict(zip(region.cells, f_vals))
        g = dict(zip(region.cells, g_vals))
        combo = {c: a * f[c] + b * g[c] for c in region.cells}
        lhs = reserve(combo, region)
        rhs = a * reserve(f, region) + b * reserve(g, region)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-9)


class TestCsv:
    def test_round_trip_is_exact(self, tmp_path, desk_sim):
        path = str(tmp_path / "triangle.csv")
        write_triangle_csv(desk_sim.triangle, path)
        back = read_triangle_csv(path)
        assert back.I == desk_sim.triangle.I
        assert np.array_equal(back.as_array(), desk_sim.triangle.as_array())

    def test_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,1,1.0\n")
        with pytest.raises(ValueError, match="header"):
            read_triangle_csv(str(path))

    def test_rejects_incomplete_triangle(self, tmp_path):
        path = tmp_path / "partial.csv"
        path.write_text("i,j,value\n1,1,1.0\n1,2,2.0\n")
        with pytest.raises(ValueError, match="do not match"):
            read_triangle_csv(str(path))
