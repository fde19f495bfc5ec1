"""Claim triangle data model: cell indexing, past/future regions, reserves.

A triangle of side ``I`` holds one strictly positive incremental payment per
past cell ``(i, j)`` with ``i + j <= I + 1``, where ``i`` is the accident
period, ``j`` the development period and ``t = i + j - 1`` the payment
period. The future (forecast) region holds the remaining cells of the
``I x I`` square. All vectorized quantities downstream use the canonical
row-major cell order fixed here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

import numpy as np


class Cell(NamedTuple):
    """A triangle cell, addressed by accident and development period."""

    i: int
    j: int

    @property
    def t(self) -> int:
        """Payment period of the cell."""
        return self.i + self.j - 1


def payment_period(i: int, j: int) -> int:
    """Payment period t = i + j - 1 of cell (i, j)."""
    if i < 1 or j < 1:
        raise ValueError(f"cell indices must be >= 1, got ({i}, {j})")
    return i + j - 1


def past_cells(side: int) -> list[Cell]:
    """All observed cells {(i, j): i + j <= I + 1} in canonical row-major order."""
    if side < 1:
        raise ValueError(f"triangle side must be >= 1, got {side}")
    return [Cell(i, j) for i in range(1, side + 1) for j in range(1, side - i + 2)]


@dataclass(frozen=True)
class ForecastRegion:
    """The future cells of the I x I square: i + j > I + 1, capped at j <= I."""

    I: int
    cells: tuple[Cell, ...]

    def __post_init__(self) -> None:
        for c in self.cells:
            if c.i + c.j <= self.I + 1 or c.i > self.I or c.j > self.I:
                raise ValueError(f"cell {c} is not a future cell of a {self.I}x{self.I} square")

    def __len__(self) -> int:
        return len(self.cells)

    def index_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(i, j, t) arrays over the region in canonical order."""
        i = np.array([c.i for c in self.cells], dtype=np.int64)
        j = np.array([c.j for c in self.cells], dtype=np.int64)
        return i, j, i + j - 1


def future_cells(side: int) -> ForecastRegion:
    """Forecast region of a triangle of side I, row-major order, I(I-1)/2 cells."""
    if side < 1:
        raise ValueError(f"triangle side must be >= 1, got {side}")
    cells = tuple(
        Cell(i, j)
        for i in range(1, side + 1)
        for j in range(1, side + 1)
        if i + j > side + 1
    )
    return ForecastRegion(I=side, cells=cells)


@dataclass(frozen=True)
class Triangle:
    """Observed incremental payments over the past region of an I x I square.

    Immutable after construction; safe to share across workers. ``values``
    must cover exactly the past cells and be strictly positive (the error
    model downstream has positive support).
    """

    I: int
    values: Mapping[Cell, float]
    _cells: tuple[Cell, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        expected = past_cells(self.I)
        got = set(self.values)
        missing = set(expected) - got
        extra = got - set(expected)
        if missing or extra:
            raise ValueError(
                f"triangle cells do not match side {self.I}: "
                f"{len(missing)} missing, {len(extra)} unexpected"
            )
        for c, v in self.values.items():
            if not v > 0:
                raise ValueError(f"non-positive payment {v} at cell {tuple(c)}")
        object.__setattr__(self, "_cells", tuple(expected))

    @property
    def cells(self) -> tuple[Cell, ...]:
        """Past cells in canonical row-major order."""
        return self._cells

    def as_array(self) -> np.ndarray:
        """Observed values in canonical cell order."""
        return np.array([self.values[c] for c in self._cells], dtype=np.float64)

    def index_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(i, j, t) arrays over the past cells in canonical order."""
        i = np.array([c.i for c in self._cells], dtype=np.int64)
        j = np.array([c.j for c in self._cells], dtype=np.int64)
        return i, j, i + j - 1

    def __len__(self) -> int:
        return len(self._cells)


def triangle_from_arrays(side: int, values: Iterable[float]) -> Triangle:
    """Build a Triangle from values listed in canonical row-major order."""
    cells = past_cells(side)
    vals = list(values)
    if len(vals) != len(cells):
        raise ValueError(f"expected {len(cells)} values for side {side}, got {len(vals)}")
    return Triangle(I=side, values=dict(zip(cells, map(float, vals))))


def reserve(forecasts: Mapping[Cell, float], region: ForecastRegion) -> float:
    """Total forecast payment over the forecast region.

    Every future cell must be present; summation follows the canonical
    cell order so results are bit-reproducible.
    """
    missing = [c for c in region.cells if c not in forecasts]
    if missing:
        raise ValueError(
            f"incomplete forecast: {len(missing)} future cells missing, first {tuple(missing[0])}"
        )
    return float(sum(float(forecasts[c]) for c in region.cells))


def write_triangle_csv(triangle: Triangle, path: str) -> None:
    """Write a triangle as CSV with header ``i,j,value``, one row per past cell."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "value"])
        for c in triangle.cells:
            writer.writerow([c.i, c.j, repr(triangle.values[c])])


def read_triangle_csv(path: str) -> Triangle:
    """Load a triangle from ``i,j,value`` CSV, validating completeness and positivity."""
    values: dict[Cell, float] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["i", "j", "value"]:
            raise ValueError(f"expected header 'i,j,value' in {path}, got {reader.fieldnames}")
        for row in reader:
            cell = Cell(int(row["i"]), int(row["j"]))
            if cell in values:
                raise ValueError(f"duplicate cell {tuple(cell)} in {path}")
            values[cell] = float(row["value"])
    if not values:
        raise ValueError(f"no cells found in {path}")
    side = max(c.t for c in values)
    return Triangle(I=side, values=values)
