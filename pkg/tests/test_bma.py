"""Model averaging: likelihoods, priors, posteriors, calibration."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from reserve_lasso.bma import (
    CalibrationError,
    CandidateModels,
    PriorSpec,
    calibrate_lambda_g,
    find_extreme_lambda,
    gamma_loglik,
    laplace_density,
    log_prior,
    posterior,
    summarize,
    tail_mass,
)


def _cands(logliks, l1s, reserves=None):
    n = len(logliks)
    return CandidateModels(
        model_ids=np.arange(1, n + 1),
        log_likelihoods=np.asarray(logliks, dtype=float),
        l1_norms=np.asarray(l1s, dtype=float),
        reserves=np.asarray(reserves if reserves is not None else np.ones(n), dtype=float),
    )


class TestGammaLoglik:
    def test_unit_cell_direct_substitution(self):
        # y = mu = 1, phi = 1: shape 1, rate 1 -> log density -1
        assert gamma_loglik(np.array([1.0]), np.array([1.0]), 1.0) == pytest.approx(-1.0)

    @pytest.mark.parametrize("mu,phi", [(1.0, 1.0), (2.5, 0.3), (0.7, 0.05)])
    def test_density_integrates_to_one(self, mu, phi):
        def dens(y):
            return np.exp(gamma_loglik(np.array([y]), np.array([mu]), phi))

        total, _ = integrate.quad(dens, 0, np.inf, limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_density_has_stated_mean_and_cov(self):
        mu, phi = 1.8, 0.2

        def moment(k):
            return integrate.quad(
                lambda y: y**k * np.exp(gamma_loglik(np.array([y]), np.array([mu]), phi)),
                0, np.inf, limit=200,
            )[0]

        m1 = moment(1)
        m2 = moment(2)
        assert m1 == pytest.approx(mu, rel=1e-8)
        assert (m2 - m1**2) / m1**2 == pytest.approx(phi, rel=1e-6)

    def test_maximized_over_mean_at_observation(self):
        y = np.array([2.0])
        grid = np.linspace(0.5, 5.0, 2001)
        vals = [gamma_loglik(y, np.array([m]), 0.4) for m in grid]
        assert grid[int(np.argmax(vals))] == pytest.approx(2.0, abs=0.01)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            gamma_loglik(np.array([0.0]), np.array([1.0]), 0.5)


class TestLaplacePrior:
    @pytest.mark.parametrize("lam", [0.5, 1.0, 4.0])
    def test_density_normalizes_and_has_stated_variance(self, lam):
        total, _ = integrate.quad(lambda x: laplace_density(x, lam), -np.inf, np.inf)
        second, _ = integrate.quad(lambda x: x * x * laplace_density(x, lam), -np.inf, np.inf)
        assert total == pytest.approx(1.0, abs=1e-6)
        assert second == pytest.approx(2.0 / lam**2, rel=1e-6)

    def test_log_prior_examples(self):
        pen = np.array([False, True, True])
        assert log_prior(np.zeros(3), 3.0, pen) == 0.0
        assert log_prior(np.array([9.0, 0.5, -0.5]), 2.0, pen) == pytest.approx(-2.0)

    @given(st.floats(0.1, 10), st.floats(-3, 3), st.floats(-3, 3))
    def test_doubling_dispersion_doubles_magnitude(self, lam, b1, b2):
        pen = np.array([True, True])
        beta = np.array([b1, b2])
        assert log_prior(beta, 2 * lam, pen) == pytest.approx(2 * log_prior(beta, lam, pen))


class TestPosterior:
    def test_single_model_probability_one(self):
        post = posterior(_cands([0.0], [1.0]), PriorSpec("custom", 1.0))
        np.testing.assert_allclose(post.probs, [1.0])

    def test_two_model_closed_form(self):
        # equal likelihoods, l1 norms 1 and 2, dispersion ln4: weights 4:1
        post = posterior(_cands([5.0, 5.0], [1.0, 2.0]), PriorSpec("custom", np.log(4)))
        np.testing.assert_allclose(post.probs, [0.8, 0.2], rtol=1e-12)

    def test_vanishing_dispersion_gives_uniform(self):
        post = posterior(_cands([3.0, 3.0, 3.0], [1.0, 5.0, 9.0]),
                         PriorSpec("custom", 1e-300))
        np.testing.assert_allclose(post.probs, 1 / 3, rtol=1e-9)

    @given(
        st.lists(st.floats(-50, 50), min_size=2, max_size=12),
        st.floats(-100, 100),
    )
    @settings(max_examples=60)
    def test_shift_invariance_and_normalization(self, lls, shift):
        l1s = np.linspace(0, 3, len(lls))
        base = posterior(_cands(lls, l1s), PriorSpec("custom", 0.7))
        shifted = posterior(_cands(np.asarray(lls) + shift, l1s), PriorSpec("custom", 0.7))
        assert abs(base.probs.sum() - 1.0) < 1e-12
        np.testing.assert_allclose(base.probs, shifted.probs, atol=1e-12)

    def test_increasing_dispersion_drains_complex_tail(self):
        lls = np.array([0.0, 2.0, 5.0, 9.0])
        l1s = np.array([0.5, 1.0, 2.0, 4.0])  # sorted by complexity
        cands = _cands(lls, l1s)
        tail = cands.model_ids[2:]
        masses = [tail_mass(cands, lam, tail) for lam in (0.1, 1.0, 5.0, 25.0)]
        assert np.all(np.diff(masses) < 0)


class TestSummarize:
    def test_point_mass(self):
        post = posterior(_cands([1.0], [0.0], [100.0]), PriorSpec("custom", 1.0))
        s = summarize(post, np.array([100.0]))
        assert s.variance == 0.0 and s.cov == 0.0

    def test_two_point_distribution(self):
        post = posterior(_cands([1.0, 1.0], [1.0, 1.0]), PriorSpec("custom", 1.0))
        s = summarize(post, np.array([90.0, 110.0]))
        assert s.mean == pytest.approx(100.0)
        assert s.variance == pytest.approx(100.0)
        assert s.cov == pytest.approx(0.10)

    def test_matches_resampling_oracle(self):
        rng = np.random.default_rng(0)
        lls = rng.normal(size=9)
        l1s = np.sort(rng.uniform(0, 3, 9))
        reserves = rng.uniform(50, 150, 9)
        post = posterior(_cands(lls, l1s, reserves), PriorSpec("custom", 0.8))
        s = summarize(post, reserves)
        draws = rng.choice(reserves, size=1_000_000, p=post.probs)
        se_mean = draws.std() / 1000
        assert abs(draws.mean() - s.mean) < 3 * se_mean
        assert draws.var() == pytest.approx(s.variance, rel=0.02)

    def test_mean_must_be_positive(self):
        post = posterior(_cands([1.0], [0.0]), PriorSpec("custom", 1.0))
        with pytest.raises(ValueError):
            summarize(post, np.array([-5.0]))


class TestCalibration:
    def test_two_model_crossover(self):
        # complex model (id 2) has likelihood edge delta, extra l1 norm d
        delta, d = 3.0, 1.5
        cands = _cands([0.0, delta], [1.0, 1.0 + d])
        simple = calibrate_lambda_g(cands, target_q=1)
        complex_ = calibrate_lambda_g(cands, target_q=2)
        crossover = delta / d
        assert simple.lower == pytest.approx(crossover, rel=1e-6)
        assert simple.lambda_g > crossover
        assert complex_.upper == pytest.approx(crossover, rel=1e-6)
        assert complex_.lambda_g <= crossover

    def test_monotone_in_target_complexity(self):
        lls = [0.0, 4.0, 7.0]
        l1s = [0.5, 2.0, 4.5]
        cands = _cands(lls, l1s)
        lams = [calibrate_lambda_g(cands, q).lambda_g for q in (1, 2, 3)]
        assert lams[0] > lams[1] > lams[2]

    def test_dominated_model_is_unattainable(self):
        # model 2 has higher l1 and lower likelihood than model 3: never a mode
        cands = _cands([0.0, 1.0, 5.0], [0.5, 2.0, 1.9])
        with pytest.raises(CalibrationError, match="nearest attainable"):
            calibrate_lambda_g(cands, target_q=2)

    def test_mode_is_target_at_returned_value(self):
        rng = np.random.default_rng(5)
        lls = np.sort(rng.uniform(0, 20, 8))
        l1s = np.sort(rng.uniform(0, 6, 8))
        cands = _cands(lls, l1s)
        for q in (1, 8):
            cal = calibrate_lambda_g(cands, q)
            weights = cands.log_likelihoods - cal.lambda_g * cands.l1_norms
            assert int(cands.model_ids[np.argmax(weights)]) == q


class TestExtremes:
    def test_single_model_has_no_extremes(self):
        cands = _cands([1.0], [1.0])
        assert find_extreme_lambda(cands, 1, 1, "simple") is None
        assert find_extreme_lambda(cands, 1, 1, "complex") is None

    def test_two_model_simple_side_matches_analytic_root(self):
        # mass of the complex model: 1/(1+exp(delta_ll... solve analytically
        ll = np.array([0.0, 2.0])
        l1 = np.array([1.0, 3.0])
        eps = 0.0005
        cands = _cands(ll, l1)
        lam = find_extreme_lambda(cands, q_1se=2, q_min=2, side="simple", epsilon=eps)
        # mass(model 2) = sigmoid((ll2-ll1) - lam*(l1_2-l1_1)) = eps
        analytic = ((ll[1] - ll[0]) - np.log(eps / (1 - eps))) / (l1[1] - l1[0])
        assert lam == pytest.approx(analytic, rel=1e-6)

    def test_simple_side_exceeds_mode_calibrated_value(self):
        # strictly concave likelihood vs complexity: every model is attainable
        lls = [0.0, 4.0, 7.0, 9.0, 10.0, 10.5]
        l1s = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
        cands = _cands(lls, l1s)
        q_1se = 3
        lam_simple = find_extreme_lambda(cands, q_1se, 4, "simple", 0.0005)
        cal = calibrate_lambda_g(cands, q_1se)
        assert lam_simple is not None
        assert lam_simple > cal.lambda_g

    def test_complex_side_absent_when_mass_already_large(self):
        # the models up to q_min carry most of the likelihood: no solution
        cands = _cands([10.0, 9.0, 0.0], [0.5, 1.0, 3.0])
        assert find_extreme_lambda(cands, 1, 2, "complex", 0.0005) is None
