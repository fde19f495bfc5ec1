"""Known-structure GLM reference for the parameter-error estimate.

For synthetic triangles the generating structure is known, so an
unpenalized Gamma regression on exactly those terms (linear accident
trend, log-linear development curve, the inflation profile shape, the
step indicator when present) carries essentially no structure-selection
error. Bootstrapping it with the same gates yields a parameter-error
CoV to compare against the path-based estimate, which is expected to be
larger since structure selection leaks into it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bootstrap import pseudo_data, residuals
from .dispersion import fit_gamma_glm
from .forecast import ModelForecast, forecast_from_cells
from .gates import GateSet, gate_check
from .simulate import SimulationSpec
from .triangle import Cell, Triangle, future_cells


@dataclass(frozen=True)
class TrueGlm:
    """Fitted known-structure regression and its forecast."""

    spec: SimulationSpec
    coefficients: np.ndarray
    fitted: np.ndarray
    forecast: ModelForecast
    column_names: tuple[str, ...]


@dataclass(frozen=True)
class BenchmarkResult:
    """Parameter-error comparison between the path estimate and the GLM."""

    glm_reserve: float
    glm_w_parameter: float
    lasso_w_parameter: float
    lasso_exceeds_glm: bool
    n_surviving: int


def true_structure_columns(spec: SimulationSpec, cells: Sequence[Cell]) -> tuple[np.ndarray, tuple[str, ...]]:
    """Design columns matching the functional forms of the generating surface."""
    i = np.array([c.i for c in cells], dtype=np.float64)
    j = np.array([c.j for c in cells], dtype=np.float64)
    t = (i + j - 1).astype(np.int64)
    cols = [np.ones(len(i)), i, np.log(j), j]
    names = ["intercept", "accident_linear", "dev_log", "dev_linear"]
    if any(r != 0.0 for r in spec.si_profile):
        cum = np.concatenate([[0.0], np.cumsum(spec.si_profile)])
        shape_col = cum[t]
        if spec.si_dq_taper:
            shape_col = shape_col * np.maximum(0.0, (spec.I - j) / (spec.I - 1))
        cols.append(shape_col)
        names.append("inflation_shape")
    if spec.step_interaction is not None:
        i0, j0, _ = spec.step_interaction
        cols.append(((i >= i0) & (j >= j0)).astype(np.float64))
        names.append("step")
    return np.column_stack(cols), tuple(names)


def fit_true_glm(spec: SimulationSpec, triangle: Triangle) -> TrueGlm:
    """Unpenalized Gamma log-link fit of the known structure."""
    X, names = true_structure_columns(spec, triangle.cells)
    beta, mu = fit_gamma_glm(X, triangle.as_array())
    region = future_cells(spec.I)
    X_fut, _ = true_structure_columns(spec, region.cells)
    forecasts = np.exp(X_fut @ beta)
    return TrueGlm(
        spec=spec,
        coefficients=beta,
        fitted=mu,
        forecast=forecast_from_cells(region, spec.I, forecasts),
        column_names=names,
    )


def bootstrap_glm(
    glm: TrueGlm,
    triangle: Triangle,
    phi: float,
    gates: GateSet,
    n_replications: int,
    seed: int | np.random.SeedSequence,
    lasso_w_parameter: float = float("nan"),
) -> BenchmarkResult:
    """Residual bootstrap of the known-structure fit.

    Each replication resamples residuals around the GLM's fitted means,
    refits the same columns, forecasts, and is censored against the GLM's
    own central forecast through the usual gates. The parameter-error CoV
    is the dispersion of surviving reserve forecasts.
    """
    y = triangle.as_array()
    resid = residuals(y, glm.fitted, phi)
    X, _ = true_structure_columns(glm.spec, triangle.cells)
    region = glm.forecast.region
    X_fut, _ = true_structure_columns(glm.spec, region.cells)

    base = np.random.SeedSequence(seed) if isinstance(seed, int) else seed
    reserves = []
    for b in range(n_replications):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=base.entropy, spawn_key=(b,)))
        y_b, _ = pseudo_data(glm.fitted, phi, resid, rng)
        beta_b, _ = fit_gamma_glm(X, y_b)
        forecast_b = forecast_from_cells(region, glm.spec.I, np.exp(X_fut @ beta_b), model_id=b)
        if gate_check(forecast_b, glm.forecast, gates).passed:
            reserves.append(forecast_b.reserve)
    if not reserves:
        raise ValueError("every benchmark replication was censored by the gates")
    arr = np.array(reserves)
    w_pa = float(np.std(arr) / np.mean(arr))
    return BenchmarkResult(
        glm_reserve=glm.forecast.reserve,
        glm_w_parameter=w_pa,
        lasso_w_parameter=lasso_w_parameter,
        lasso_exceeds_glm=bool(lasso_w_parameter >= w_pa) if np.isfinite(lasso_w_parameter) else False,
        n_surviving=len(arr),
    )
