"""Synthetic claim triangles with known mean surfaces and true reserves.

Four stock scenarios of increasing complexity are provided:

* ``dataset1`` -- multiplicative accident and development effects only
  (chain-ladder compatible).
* ``dataset2`` -- adds a payment-period trend (superimposed inflation)
  whose per-quarter rate is piecewise: flat, rising, flat, rising again.
* ``dataset3`` -- dataset2 plus a sharp step-up in late development
  periods of late accident periods, touching only a handful of cells.
* ``dataset4`` -- dataset2 with the payment-period rates tapering
  linearly to zero by the final development period.

Parameter values are package defaults chosen to give a development
pattern peaking around j = 8 with geometric decay, mild accident-period
growth, and cell coefficient of variation near 30%.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .triangle import Cell, ForecastRegion, Triangle, future_cells, past_cells

PRESET_NAMES = ("dataset1", "dataset2", "dataset3", "dataset4")


@dataclass(frozen=True)
class SimulationSpec:
    """Log-scale description of a simulated mean surface plus Gamma noise.

    ``si_profile`` holds one per-payment-period log rate for each payment
    period 1..2I-1, so the cumulative inflation level at period t is the
    sum of the first t rates. ``step_interaction`` is
    (accident threshold, development threshold, log multiplier).
    """

    I: int
    base_level: float
    row_effects: tuple[float, ...]
    col_effects: tuple[float, ...]
    si_profile: tuple[float, ...]
    si_dq_taper: bool = False
    step_interaction: Optional[tuple[int, int, float]] = None
    dispersion: float = 0.09

    def __post_init__(self) -> None:
        if len(self.row_effects) != self.I:
            raise ValueError(f"row_effects must have length {self.I}")
        if len(self.col_effects) != self.I:
            raise ValueError(f"col_effects must have length {self.I}")
        if len(self.si_profile) != 2 * self.I - 1:
            raise ValueError(f"si_profile must have length {2 * self.I - 1}")
        if not self.dispersion > 0:
            raise ValueError("dispersion must be positive")

    def si_level(self, t: int) -> float:
        """Cumulative inflation level at payment period t (sum of rates 1..t)."""
        return float(np.sum(self.si_profile[:t]))


@dataclass(frozen=True)
class SimulatedTriangle:
    """A simulated triangle together with its generating mean surface."""

    triangle: Triangle
    true_means: dict[Cell, float]
    true_reserve: float
    seed: int


def _taper(spec: SimulationSpec, j: np.ndarray | int) -> np.ndarray | float:
    # Linear decline of the inflation effect across development periods,
    # reaching zero at j = I.
    return np.maximum(0.0, (spec.I - np.asarray(j)) / (spec.I - 1))


def log_mean_surface(spec: SimulationSpec, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Vectorized log cell mean for arrays of accident/development indices."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    t = i + j - 1
    rows = np.asarray(spec.row_effects)[i - 1]
    cols = np.asarray(spec.col_effects)[j - 1]
    cum_si = np.concatenate([[0.0], np.cumsum(spec.si_profile)])
    si = cum_si[t]
    if spec.si_dq_taper:
        si = si * _taper(spec, j)
    eta = spec.base_level + rows + cols + si
    if spec.step_interaction is not None:
        i0, j0, shift = spec.step_interaction
        eta = eta + shift * ((i >= i0) & (j >= j0))
    return eta


def mean_surface(spec: SimulationSpec, cell: Cell) -> float:
    """True mean payment for one cell of the I x I square."""
    if not (1 <= cell.i <= spec.I and 1 <= cell.j <= spec.I):
        raise ValueError(f"cell {tuple(cell)} outside the {spec.I}x{spec.I} square")
    return float(np.exp(log_mean_surface(spec, np.array([cell.i]), np.array([cell.j])))[0])


def step_region(spec: SimulationSpec, side: int) -> list[Cell]:
    """Past cells hit by the step interaction."""
    if spec.step_interaction is None:
        raise ValueError("spec has no step interaction")
    i0, j0, _ = spec.step_interaction
    return [c for c in past_cells(side) if c.i >= i0 and c.j >= j0]


def simulate(spec: SimulationSpec, seed: int) -> SimulatedTriangle:
    """Draw a triangle: each past cell is Gamma with mean mu and variance phi*mu^2."""
    region = future_cells(spec.I)
    past = past_cells(spec.I)
    all_cells = list(past) + list(region.cells)
    i = np.array([c.i for c in all_cells], dtype=np.int64)
    j = np.array([c.j for c in all_cells], dtype=np.int64)
    means = np.exp(log_mean_surface(spec, i, j))
    true_means = dict(zip(all_cells, means.tolist()))

    n_past = len(past)
    shape = 1.0 / spec.dispersion
    rng = np.random.default_rng(seed)
    draws = rng.gamma(shape=shape, scale=spec.dispersion * means[:n_past])
    triangle = Triangle(I=spec.I, values=dict(zip(past, draws.tolist())))
    true_reserve = float(np.sum(means[n_past:]))
    return SimulatedTriangle(
        triangle=triangle, true_means=true_means, true_reserve=true_reserve, seed=seed
    )


def _scaled_breakpoint(side: int, quarters_of_40: int) -> int:
    # Segment boundaries defined on the 40-quarter reference grid, scaled
    # proportionally for other triangle sizes.
    return max(1, int(quarters_of_40 * side / 40 + 0.5))


def _si_rates(side: int, r0: float, r1: float, r2: float) -> tuple[float, ...]:
    """Piecewise per-quarter rates: flat r0, rise to r1, flat, rise to r2, flat."""
    b1 = _scaled_breakpoint(side, 12)
    b2 = _scaled_breakpoint(side, 24)
    b3 = _scaled_breakpoint(side, 32)
    rates = []
    for t in range(1, 2 * side):
        if t <= b1:
            rates.append(r0)
        elif t <= b2:
            rates.append(r0 + (t - b1) * (r1 - r0) / (b2 - b1))
        elif t <= b3:
            rates.append(r1)
        elif t <= side:
            rates.append(r1 + (t - b3) * (r2 - r1) / (side - b3))
        else:
            rates.append(r2)
    return tuple(rates)


def dataset_spec(name: str, side: int = 40) -> SimulationSpec:
    """Build one of the stock simulation scenarios at the given triangle side."""
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
    if side < 4:
        raise ValueError("presets need side >= 4")
    rows = tuple(0.01 * (i - 1) for i in range(1, side + 1))
    # Hoerl-type development curve, peaking near j = 8 on the reference grid.
    peak = max(2.0, 8.0 * side / 40)
    decay = 0.2 * 40 / side
    cols = tuple(peak * decay * np.log(j) - decay * j for j in range(1, side + 1))
    flat = tuple(0.0 for _ in range(2 * side - 1))
    base = SimulationSpec(
        I=side,
        base_level=5.0,
        row_effects=rows,
        col_effects=cols,
        si_profile=flat,
        dispersion=0.09,
    )
    if name == "dataset1":
        return base
    si = _si_rates(side, r0=0.005, r1=0.02, r2=0.035)
    if name == "dataset2":
        return replace(base, si_profile=si)
    if name == "dataset3":
        i0 = int(17 * side / 40 + 0.5)
        j0 = int(21 * side / 40 + 0.5)
        return replace(base, si_profile=si, step_interaction=(i0, j0, float(np.log(1.3))))
    return replace(base, si_profile=si, si_dq_taper=True)
