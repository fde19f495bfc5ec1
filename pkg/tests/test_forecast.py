"""Extrapolation to the future region and the gate aggregates."""

import numpy as np
import pytest

from reserve_lasso.basis import assemble, build_basis
from reserve_lasso.forecast import (
    AGGREGATE_SPANS,
    build_forecast_context,
    extrapolate,
    forecast_from_cells,
    scaled,
)
from reserve_lasso.lasso import fit_path, lambda_max, make_path
from reserve_lasso.simulate import SimulationSpec, dataset_spec, simulate
from reserve_lasso.triangle import future_cells


@pytest.fixture(scope="module")
def desk_context(desk_design):
    return build_forecast_context(desk_design, 20)


class TestExtrapolate:
    def test_intercept_only_forecast_is_flat(self, desk_context, desk_design):
        beta = np.zeros(desk_design.n_columns)
        beta[0] = 2.0
        f = extrapolate(beta, desk_context)
        np.testing.assert_allclose(f.cell_forecasts, np.exp(2.0), rtol=1e-12)
        assert f.reserve == pytest.approx(len(desk_context.region) * np.exp(2.0), rel=1e-12)

    def test_identical_coefficients_identical_forecasts(self, desk_context, desk_design):
        rng = np.random.default_rng(0)
        beta = np.zeros(desk_design.n_columns)
        beta[0] = 1.0
        beta[rng.choice(np.arange(1, desk_design.n_columns), 10, replace=False)] = 0.1
        a = extrapolate(beta, desk_context, model_id=1)
        b = extrapolate(beta.copy(), desk_context, model_id=2)
        assert np.array_equal(a.cell_forecasts, b.cell_forecasts)
        assert a.reserve == b.reserve

    def test_payment_trend_grows_along_future_diagonals(self, desk_context, desk_design):
        # a positive payment-period ramp keeps growing in the future
        idx = [k for k, f in enumerate(desk_design.functions)
               if f.kind == "ramp_t" and f.knots == (0,)]
        beta = np.zeros(desk_design.n_columns)
        beta[0] = 1.0
        beta[idx[0]] = 0.5
        f = extrapolate(beta, desk_context)
        _, _, t = desk_context.region.index_arrays()
        by_t = {}
        for tt, v in zip(t, f.cell_forecasts):
            by_t.setdefault(int(tt), []).append(v)
        levels = [np.mean(by_t[tt]) for tt in sorted(by_t)]
        assert np.all(np.diff(levels) > 0)

    def test_true_structure_on_noiseless_data_recovers_reserve(self):
        spec = dataset_spec("dataset1", 12)
        spec = SimulationSpec(
            I=12, base_level=spec.base_level, row_effects=spec.row_effects,
            col_effects=spec.col_effects, si_profile=spec.si_profile, dispersion=1e-6,
        )
        sim = simulate(spec, 9)
        tri = sim.triangle
        dm = assemble(build_basis(12), tri.cells, 12)
        y = tri.as_array()
        lmax = lambda_max(dm, y)
        fit = fit_path(dm, y, make_path(lmax, 25, 1e-7))
        ctx = build_forecast_context(dm, 12)
        f = extrapolate(fit.betas[-1], ctx)
        assert f.reserve == pytest.approx(sim.true_reserve, rel=0.005)

    def test_overflowing_predictor_is_flagged_delinquent(self, desk_context, desk_design):
        beta = np.zeros(desk_design.n_columns)
        beta[0] = 800.0
        f = extrapolate(beta, desk_context)
        assert f.delinquent

    def test_aggregates_sum_subsets_of_forecasts(self, desk_context, desk_design):
        rng = np.random.default_rng(1)
        beta = np.zeros(desk_design.n_columns)
        beta[0] = 1.0
        beta[rng.choice(np.arange(1, desk_design.n_columns), 5, replace=False)] = 0.05
        f = extrapolate(beta, desk_context)
        i, _, t = desk_context.region.index_arrays()
        for n in AGGREGATE_SPANS:
            assert f.aq_sums[n] == pytest.approx(
                float(np.sum(f.cell_forecasts[i >= 20 - n + 1])), rel=1e-12
            )
            assert f.pq_sums[n] == pytest.approx(
                float(np.sum(f.cell_forecasts[t <= 20 + n])), rel=1e-12
            )
        assert f.reserve == pytest.approx(float(np.sum(f.cell_forecasts)), rel=1e-12)


class TestHelpers:
    def test_forecast_from_cells_matches_extrapolate_shape(self):
        region = future_cells(6)
        values = np.arange(1.0, len(region) + 1)
        f = forecast_from_cells(region, 6, values)
        assert f.reserve == pytest.approx(values.sum())
        assert f.aq_sums[2] < f.reserve

    def test_scaled_multiplies_everything(self):
        region = future_cells(5)
        values = np.linspace(1, 2, len(region))
        f = forecast_from_cells(region, 5, values)
        g = scaled(f, 2.0)
        assert g.reserve == pytest.approx(2 * f.reserve)
        for n in AGGREGATE_SPANS:
            assert g.aq_sums[n] == pytest.approx(2 * f.aq_sums[n])
            assert g.pq_sums[n] == pytest.approx(2 * f.pq_sums[n])
