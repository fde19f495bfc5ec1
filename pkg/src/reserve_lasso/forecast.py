"""Extrapolation of fitted models to the future region of the triangle.

The linear response fitted to past cells is applied unchanged to future
cells: the future design matrix is built with the past standardization
statistics, and each model's forecast is the exponentiated linear
predictor. Alongside the total reserve, per-model aggregates are kept for
the pruning gates: totals for the most recent accident periods and totals
for the first future payment periods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import DesignMatrix, assemble, build_basis
from .lasso import ETA_OVERFLOW
from .triangle import Cell, ForecastRegion, future_cells

AGGREGATE_SPANS = (2, 5, 10)


@dataclass(frozen=True)
class ForecastContext:
    """Future design matrix plus the row masks behind the gate aggregates."""

    side: int
    region: ForecastRegion
    matrix: np.ndarray
    aq_masks: dict[int, np.ndarray]
    pq_masks: dict[int, np.ndarray]


@dataclass(frozen=True)
class ModelForecast:
    """One model's forecast over the future region, with gate aggregates.

    ``aq_sums[n]`` totals the last n accident periods' future cells;
    ``pq_sums[n]`` totals the first n future payment periods. A model whose
    linear predictor overflows is flagged delinquent and fails every gate.
    """

    model_id: int
    region: ForecastRegion
    cell_forecasts: np.ndarray
    reserve: float
    aq_sums: dict[int, float]
    pq_sums: dict[int, float]
    delinquent: bool = False

    def forecast_map(self) -> dict[Cell, float]:
        return dict(zip(self.region.cells, self.cell_forecasts.tolist()))


def aggregate_masks(region: ForecastRegion, side: int) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Row masks for the gate aggregates: recent accident rows and the
    first future payment diagonals."""
    i, _, t = region.index_arrays()
    aq_masks = {n: (i >= side - n + 1) for n in AGGREGATE_SPANS}
    pq_masks = {n: (t <= side + n) for n in AGGREGATE_SPANS}
    return aq_masks, pq_masks


def forecast_from_cells(
    region: ForecastRegion,
    side: int,
    cell_forecasts: np.ndarray,
    model_id: int = 0,
    delinquent: bool = False,
) -> ModelForecast:
    """Wrap precomputed future cell values (canonical order) as a forecast."""
    aq_masks, pq_masks = aggregate_masks(region, side)
    forecasts = np.asarray(cell_forecasts, dtype=np.float64)
    return ModelForecast(
        model_id=model_id,
        region=region,
        cell_forecasts=forecasts,
        reserve=float(np.sum(forecasts)),
        aq_sums={n: float(np.sum(forecasts[m])) for n, m in aq_masks.items()},
        pq_sums={n: float(np.sum(forecasts[m])) for n, m in pq_masks.items()},
        delinquent=delinquent,
    )


def build_forecast_context(dm_past: DesignMatrix, side: int) -> ForecastContext:
    """Assemble the future design with past statistics and aggregate masks."""
    region = future_cells(side)
    fut = assemble(build_basis(side), region.cells, side, stats=dm_past)
    aq_masks, pq_masks = aggregate_masks(region, side)
    return ForecastContext(
        side=side, region=region, matrix=fut.matrix, aq_masks=aq_masks, pq_masks=pq_masks
    )


def extrapolate(beta: np.ndarray, ctx: ForecastContext, model_id: int = 0) -> ModelForecast:
    """Forecast every future cell as exp(row . beta) and aggregate."""
    beta = np.asarray(beta, dtype=np.float64)
    active = np.flatnonzero(beta)
    eta = ctx.matrix[:, active] @ beta[active]
    delinquent = bool(np.max(eta, initial=-np.inf) > ETA_OVERFLOW) or not np.all(np.isfinite(eta))
    forecasts = np.exp(np.minimum(eta, ETA_OVERFLOW))
    return ModelForecast(
        model_id=model_id,
        region=ctx.region,
        cell_forecasts=forecasts,
        reserve=float(np.sum(forecasts)),
        aq_sums={n: float(np.sum(forecasts[m])) for n, m in ctx.aq_masks.items()},
        pq_sums={n: float(np.sum(forecasts[m])) for n, m in ctx.pq_masks.items()},
        delinquent=delinquent,
    )


def scaled(forecast: ModelForecast, factor: float) -> ModelForecast:
    """The forecast with every cell (hence every aggregate) scaled by a factor."""
    return ModelForecast(
        model_id=forecast.model_id,
        region=forecast.region,
        cell_forecasts=forecast.cell_forecasts * factor,
        reserve=forecast.reserve * factor,
        aq_sums={n: v * factor for n, v in forecast.aq_sums.items()},
        pq_sums={n: v * factor for n, v in forecast.pq_sums.items()},
        delinquent=forecast.delinquent,
    )
