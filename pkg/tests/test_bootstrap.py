"""Residual resampling, replication mechanics, matrix assembly, decomposition."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reserve_lasso.bma import PriorSpec
from reserve_lasso.bootstrap import (
    BootstrapMatrix,
    ReplicationFit,
    ReplicationResult,
    assemble,
    combine_covs,
    decompose,
    pooled_variance,
    process_error,
    pseudo_data,
    residuals,
)
from reserve_lasso.forecast import forecast_from_cells
from reserve_lasso.gates import default_gates
from reserve_lasso.triangle import future_cells


class TestResiduals:
    def test_exact_fit_gives_zero_residuals(self):
        y = np.array([1.0, 2.0, 3.0])
        r = residuals(y, y, 0.09)
        np.testing.assert_array_equal(r.values, 0.0)
        assert r.shift == 0.0

    def test_single_bump_arithmetic(self):
        n = 5
        mu = np.full(n, 2.0)
        phi = 0.25
        y = mu.copy()
        y[0] = mu[0] * (1 + np.sqrt(phi))
        r = residuals(y, mu, phi)
        np.testing.assert_allclose(r.values[0], 1 - 1 / n, rtol=1e-12)
        np.testing.assert_allclose(r.values[1:], -1 / n, rtol=1e-12)
        assert abs(np.mean(r.values)) < 1e-15

    def test_simulated_residuals_have_unit_scale(self):
        rng = np.random.default_rng(0)
        phi = 0.09
        mu = rng.uniform(10, 1000, 2000)
        y = rng.gamma(1 / phi, phi * mu)
        r = residuals(y, mu, phi)
        assert np.std(r.values) == pytest.approx(1.0, rel=0.07)


class TestPseudoData:
    def test_zero_residuals_reproduce_means(self):
        mu = np.array([5.0, 10.0, 20.0])
        r = residuals(mu, mu, 0.09)
        rng = np.random.default_rng(1)
        y_b, hits = pseudo_data(mu, 0.09, r, rng)
        np.testing.assert_array_equal(y_b, mu)
        assert hits == 0

    def test_resampling_mean_matches_fitted(self):
        rng = np.random.default_rng(2)
        phi = 0.09
        mu = rng.uniform(10, 100, 40)
        y = rng.gamma(1 / phi, phi * mu)
        r = residuals(y, mu, phi)
        draws = np.array([
            pseudo_data(mu, phi, r, np.random.default_rng(seed))[0] for seed in range(3000)
        ])
        sd = draws[:, 0].std()
        assert abs(draws[:, 0].mean() - mu[0]) < 3 * sd / np.sqrt(len(draws))

    def test_floor_engages_exactly_below_residual_threshold(self):
        # y = mu*(1 + sqrt(phi)*rho) dips under the 1% floor iff
        # rho < (0.01 - 1)/sqrt(phi)
        phi = 0.09
        mu = np.array([100.0, 100.0])
        threshold = (0.01 - 1) / np.sqrt(phi)
        from reserve_lasso.bootstrap import ResidualSet

        beyond = ResidualSet(values=np.array([threshold - 0.5, -(threshold - 0.5)]), shift=0.0)
        y_b, hits = pseudo_data(mu, phi, beyond, np.random.default_rng(0))
        drew_low = np.isclose(y_b, 1.0).sum()  # floored cells sit at 0.01*mu
        assert hits == drew_low
        inside = ResidualSet(values=np.array([threshold + 0.1, -(threshold + 0.1)]), shift=0.0)
        _, hits2 = pseudo_data(mu, phi, inside, np.random.default_rng(0))
        assert hits2 == 0


def _primary_unit_forecast(side=12):
    region = future_cells(side)
    return forecast_from_cells(region, side, np.full(len(region), 1.0))


_PRIMARY = _primary_unit_forecast()


def _fit(b, ids, reserves, lls=None, l1s=None, ratios=None, dead=False):
    """Replication stub whose models sit at the given aggregate ratios
    relative to the shared unit primary forecast."""
    n = len(ids)
    reserves = np.asarray(reserves, dtype=float)
    ratios = np.ones(n) if ratios is None else np.asarray(ratios, dtype=float)
    prim_aq = np.array([_PRIMARY.aq_sums[s] for s in (2, 5, 10)])
    prim_pq = np.array([_PRIMARY.pq_sums[s] for s in (2, 5, 10)])
    return ReplicationFit(
        b=b, floor_hits=0, dead=dead,
        model_ids=np.asarray(ids, dtype=np.int64),
        reserves=reserves,
        aq_sums=np.outer(ratios, prim_aq),
        pq_sums=np.outer(ratios, prim_pq),
        delinquent=np.zeros(n, dtype=bool),
        l1_norms=np.zeros(n) if l1s is None else np.asarray(l1s, dtype=float),
        log_likelihoods=np.zeros(n) if lls is None else np.asarray(lls, dtype=float),
    )


class TestAssemble:
    def test_scaling_factor_unity_when_centered(self):
        primary = _primary_unit_forecast()
        ids = list(range(1, 7))
        reps = [_fit(b, ids, np.full(6, 50.0)) for b in range(4)]
        matrix = assemble(reps, 50.0, primary, default_gates(), PriorSpec("custom", 1.0))
        assert matrix.scaling_factor == pytest.approx(1.0)
        assert matrix.n_surviving == 4

    def test_scaling_factor_doubles_underscaled_reserves(self):
        # provisional means at half the primary mean: factor 2, and models at
        # aggregate ratio 0.5 land exactly on the primary after rescaling
        primary = _primary_unit_forecast()
        ids = list(range(1, 7))
        reps = [_fit(b, ids, np.full(6, 25.0), ratios=np.full(6, 0.5)) for b in range(3)]
        matrix = assemble(reps, 50.0, primary, default_gates(), PriorSpec("custom", 1.0))
        assert matrix.scaling_factor == pytest.approx(2.0)
        assert matrix.n_surviving == 3
        for row in matrix.rows:
            np.testing.assert_allclose(row.reserves, 50.0)

    def test_rescaled_means_average_to_primary_mean(self):
        primary = _primary_unit_forecast()
        rng = np.random.default_rng(3)
        reps = []
        for b in range(6):
            reserves = rng.uniform(40, 70, 8)
            reps.append(_fit(b, range(1, 9), reserves))
        prior = PriorSpec("custom", 1.0)
        matrix = assemble(reps, 55.0, primary, default_gates(), prior)
        # before final gating all unit-ratio models survive, so the check is exact
        assert np.mean([r.posterior_mean for r in matrix.rows]) == pytest.approx(
            55.0, rel=1e-10
        )

    def test_final_gates_censor_outlying_models(self):
        primary = _primary_unit_forecast()
        ratios = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.8])  # last model out of bounds
        reps = [_fit(b, range(1, 7), np.full(6, 10.0), ratios=ratios) for b in range(3)]
        matrix = assemble(reps, 10.0, primary, default_gates(), PriorSpec("custom", 1.0))
        assert all(len(r.model_ids) == 5 for r in matrix.rows)
        assert matrix.gate_failures["PQ2"] == 3

    def test_thin_rows_are_dropped(self):
        primary = _primary_unit_forecast()
        good = _fit(0, range(1, 9), np.full(8, 10.0))
        thin = _fit(1, range(1, 4), np.full(3, 10.0))  # fewer than 5 models
        matrix = assemble([good, thin], 10.0, primary, default_gates(),
                          PriorSpec("custom", 1.0))
        assert matrix.n_surviving == 1
        assert matrix.n_thin == 1

    def test_concentrated_posterior_is_thin(self):
        primary = _primary_unit_forecast()
        # one model takes essentially all mass: fails the 5-model support rule
        lls = np.array([0.0, -40.0, -40.0, -40.0, -40.0, -40.0])
        rep = _fit(0, range(1, 7), np.full(6, 10.0), lls=lls)
        ok = _fit(1, range(1, 7), np.full(6, 10.0))
        matrix = assemble([rep, ok], 10.0, primary, default_gates(),
                          PriorSpec("custom", 1.0))
        assert matrix.n_surviving == 1
        assert matrix.rows[0].b == 1

    def test_dead_rows_counted(self):
        primary = _primary_unit_forecast()
        dead = _fit(0, [], [], dead=True)
        ok = _fit(1, range(1, 9), np.full(8, 10.0))
        matrix = assemble([dead, ok], 10.0, primary, default_gates(),
                          PriorSpec("custom", 1.0))
        assert matrix.n_dead == 1
        assert matrix.n_surviving == 1


def _matrix_from_rows(rows):
    return BootstrapMatrix(
        flavor="custom", rows=tuple(rows), scaling_factor=1.0,
        n_requested=len(rows), n_dead=0, n_empty=0, n_thin=0, floor_hits=0,
        gate_failures={},
    )


def _row(b, reserves, probs):
    reserves = np.asarray(reserves, dtype=float)
    probs = np.asarray(probs, dtype=float)
    mean = float(np.sum(probs * reserves))
    var = float(np.sum(probs * (reserves - mean) ** 2))
    return ReplicationResult(
        b=b, model_ids=np.arange(1, len(reserves) + 1), reserves=reserves,
        probs=probs, posterior_mean=mean, posterior_cov=float(np.sqrt(var) / mean),
        s2_within=var, survived=True,
    )


class TestDecompose:
    def test_identical_rows_have_zero_parameter_error(self):
        rows = [_row(b, [90.0, 110.0], [0.5, 0.5]) for b in range(5)]
        dec = decompose(_matrix_from_rows(rows), process_cov=0.0)
        assert dec.s2_parameter == 0.0
        assert dec.w_parameter == 0.0
        assert dec.mean == pytest.approx(100.0)
        assert dec.w_model == pytest.approx(0.10)

    def test_quadrature_identities(self):
        rows = [
            _row(0, [100.0, 120.0], [0.7, 0.3]),
            _row(1, [80.0, 95.0], [0.4, 0.6]),
            _row(2, [105.0, 125.0], [0.5, 0.5]),
        ]
        dec = decompose(_matrix_from_rows(rows), process_cov=0.039)
        assert dec.w_model_parameter**2 == pytest.approx(
            dec.w_model**2 + dec.w_parameter**2, abs=1e-12
        )
        assert dec.w_subtotal**2 == pytest.approx(
            dec.w_model_parameter**2 + 0.039**2, abs=1e-12
        )

    def test_law_of_total_variance(self):
        rng = np.random.default_rng(4)
        rows = []
        for b in range(12):
            k = int(rng.integers(2, 7))
            reserves = rng.uniform(50, 150, k)
            probs = rng.dirichlet(np.ones(k))
            rows.append(_row(b, reserves, probs))
        matrix = _matrix_from_rows(rows)
        dec = decompose(matrix, process_cov=0.0)
        pooled = pooled_variance(matrix)
        assert pooled == pytest.approx(dec.s2_parameter + dec.s2_model, rel=1e-10)

    def test_row_permutation_invariance(self):
        rows = [
            _row(0, [100.0, 120.0], [0.7, 0.3]),
            _row(1, [80.0, 95.0], [0.4, 0.6]),
            _row(2, [105.0, 125.0], [0.5, 0.5]),
        ]
        a = decompose(_matrix_from_rows(rows), 0.05)
        b = decompose(_matrix_from_rows(rows[::-1]), 0.05)
        assert a.mean == pytest.approx(b.mean, rel=1e-14)
        assert a.w_subtotal == pytest.approx(b.w_subtotal, rel=1e-14)

    def test_needs_two_rows(self):
        with pytest.raises(ValueError, match="at least 2"):
            decompose(_matrix_from_rows([_row(0, [100.0], [1.0])]), 0.0)

    def test_combine_covs_paper_arithmetic(self):
        assert combine_covs(0.019, 0.092) == pytest.approx(0.094, abs=5e-4)
        assert combine_covs(0.094, 0.039) == pytest.approx(0.102, abs=5e-4)


class TestProcessError:
    def test_single_cell_cov_is_sqrt_phi(self):
        region = future_cells(2)
        f = forecast_from_cells(region, 2, np.array([50.0]))
        rng = np.random.default_rng(5)
        cov = process_error(f, 0.09, 100_000, rng)
        # CoV of the CoV estimate ~ 1/sqrt(2n)
        assert cov == pytest.approx(np.sqrt(0.09), rel=0.02)

    def test_many_equal_cells_shrink_cov_by_sqrt_n(self):
        side = 12
        region = future_cells(side)
        n = len(region)
        f = forecast_from_cells(region, side, np.full(n, 10.0))
        rng = np.random.default_rng(6)
        cov = process_error(f, 0.09, 50_000, rng)
        assert cov == pytest.approx(np.sqrt(0.09 / n), rel=0.05)

    def test_vanishing_dispersion(self):
        region = future_cells(3)
        f = forecast_from_cells(region, 3, np.full(len(region), 5.0))
        rng = np.random.default_rng(7)
        assert process_error(f, 1e-10, 2000, rng) < 1e-4

    @given(st.integers(0, 10_000))
    @settings(max_examples=10, deadline=None)
    def test_deterministic_given_seed(self, seed):
        region = future_cells(3)
        f = forecast_from_cells(region, 3, np.full(len(region), 5.0))
        a = process_error(f, 0.09, 500, np.random.default_rng(seed))
        b = process_error(f, 0.09, 500, np.random.default_rng(seed))
        assert a == b
