"""Crowd model: conjugate posterior, Bayes inversion, rate formulas."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import quad

from curbsim import (
    CrowdParams,
    StoryCounts,
    crowd_from_likelihoods,
    flag_to_misinfo_probs,
    misinfo_posterior_rate,
    misinfo_true_rate,
    posterior_flag_mean,
    prior_from_marginal,
)

from conftest import P_D, P_F1_M0, P_F1_M1


def integrated_beta_posterior_mean(alpha, beta, n, k):
    """Posterior mean by numerical integration (independent of conjugacy).

    Uses algebraic-endpoint quadrature of p^(alpha+k-1) (1-p)^(beta+n-k-1).
    """
    wvar = (alpha + k - 1.0, beta + n - k - 1.0)
    opts = dict(weight="alg", wvar=wvar, epsabs=1e-13, epsrel=1e-13, limit=200)
    i1, _ = quad(lambda p: p, 0.0, 1.0, **opts)
    i0, _ = quad(lambda p: 1.0, 0.0, 1.0, **opts)
    return i1 / i0


class TestCrowdParams:
    def test_rejects_flag_anticorrelation(self):
        with pytest.raises(ValueError):
            CrowdParams(p_m_f1=0.2, p_m_f0=0.5, alpha=1.0, beta=1.0)

    def test_rejects_nonpositive_prior(self):
        with pytest.raises(ValueError):
            CrowdParams(p_m_f1=0.8, p_m_f0=0.1, alpha=0.0, beta=1.0)


class TestPosteriorFlagMean:
    def test_uniform_prior_no_data(self):
        crowd = CrowdParams(0.8, 0.1, alpha=1.0, beta=1.0)
        assert posterior_flag_mean(crowd, StoryCounts()) == 0.5

    def test_direct_substitution(self):
        crowd = CrowdParams(0.8, 0.1, alpha=1.0, beta=1.0)
        counts = StoryCounts(n_exposures=10, n_flags=3)
        assert posterior_flag_mean(crowd, counts) == pytest.approx(1 / 3, rel=1e-12)

    def test_many_unflagged(self):
        crowd = CrowdParams(0.8, 0.1, alpha=1.0, beta=1.0)
        counts = StoryCounts(n_exposures=100, n_flags=0)
        assert posterior_flag_mean(crowd, counts) == pytest.approx(1 / 102, rel=1e-12)

    @pytest.mark.parametrize("alpha,beta", [(1.0, 1.0), (0.0535, 0.9465)])
    def test_matches_numerical_integration(self, alpha, beta):
        crowd = CrowdParams(0.8, 0.1, alpha=alpha, beta=beta)
        for n in range(0, 8):
            for k in range(0, n + 1):
                counts = StoryCounts(n_exposures=n, n_flags=k)
                expected = integrated_beta_posterior_mean(alpha, beta, n, k)
                assert posterior_flag_mean(crowd, counts) == pytest.approx(
                    expected, abs=1e-10
                )

    def test_monotone_in_evidence(self, crowd):
        for n in range(0, 15):
            for k in range(0, n + 1):
                base = posterior_flag_mean(crowd, StoryCounts(n, k))
                flagged = posterior_flag_mean(crowd, StoryCounts(n + 1, k + 1))
                unflagged = posterior_flag_mean(crowd, StoryCounts(n + 1, k))
                assert flagged >= base
                assert unflagged <= base


class TestMisinfoRates:
    def test_zero_intensity(self, crowd):
        assert misinfo_posterior_rate(crowd, StoryCounts(5, 2), 0.0) == 0.0

    def test_uninformative_flags(self):
        crowd = CrowdParams(p_m_f1=0.4, p_m_f0=0.4, alpha=1.0, beta=1.0)
        for counts in (StoryCounts(), StoryCounts(50, 10), StoryCounts(3, 3)):
            assert misinfo_posterior_rate(crowd, counts, 1.7) == pytest.approx(
                0.4 * 1.7, rel=1e-12
            )

    def test_derived_substitution(self):
        # p values from the Bayes inversion of (0.3, 0.01, 0.15)
        crowd = CrowdParams(p_m_f1=0.8411, p_m_f0=0.1109, alpha=1.0, beta=1.0)
        got = misinfo_posterior_rate(crowd, StoryCounts(10, 3), 2.0)
        expected = 2.0 * (0.1109 + (0.8411 - 0.1109) * (1 + 3) / (1 + 1 + 10))
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(0.7086, abs=5e-5)

    def test_linear_in_lambda_and_bounded(self, crowd):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(0, 50))
            k = int(rng.integers(0, n + 1))
            lam = float(rng.uniform(0, 10))
            counts = StoryCounts(n, k)
            rate = misinfo_posterior_rate(crowd, counts, lam)
            assert crowd.p_m_f0 * lam - 1e-15 <= rate <= crowd.p_m_f1 * lam + 1e-15
            assert misinfo_posterior_rate(crowd, counts, 2 * lam) == pytest.approx(
                2 * rate, rel=1e-12
            )

    def test_true_rate_endpoints(self, crowd):
        assert misinfo_true_rate(0.0, crowd, 3.0) == pytest.approx(
            crowd.p_m_f0 * 3.0, rel=1e-12
        )
        assert misinfo_true_rate(1.0, crowd, 3.0) == pytest.approx(
            crowd.p_m_f1 * 3.0, rel=1e-12
        )

    def test_posterior_converges_to_true_rate(self, crowd):
        # N -> inf with flag fraction f_s: posterior and true rates agree
        f_s = 0.3
        n = 1_000_000
        counts = StoryCounts(n_exposures=n, n_flags=int(f_s * n))
        post = misinfo_posterior_rate(crowd, counts, 1.0)
        true = misinfo_true_rate(f_s, crowd, 1.0)
        assert post == pytest.approx(true, rel=1e-3)


class TestFlagToMisinfoProbs:
    def test_uninformative_likelihoods(self):
        p1, p0 = flag_to_misinfo_probs(0.2, 0.2, 0.15)
        assert p1 == pytest.approx(0.15, rel=1e-12)
        assert p0 == pytest.approx(0.15, rel=1e-12)

    def test_hand_bayes(self):
        p1, p0 = flag_to_misinfo_probs(0.3, 0.01, 0.15)
        # flag posterior: 0.3*0.15 / (0.3*0.15 + 0.01*0.85)
        assert p1 == pytest.approx(0.045 / 0.0535, rel=1e-12)
        assert p1 == pytest.approx(0.8411, abs=5e-5)
        # no-flag posterior: 0.7*0.15 / (0.7*0.15 + 0.99*0.85)
        assert p0 == pytest.approx(0.105 / 0.9465, rel=1e-12)
        assert p0 == pytest.approx(0.1109, abs=5e-5)

    def test_brackets_prior(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            a = float(rng.uniform(0, 1))
            b = float(rng.uniform(0, a))
            pd = float(rng.uniform(0.01, 0.99))
            p1, p0 = flag_to_misinfo_probs(a, b, pd)
            assert p0 - 1e-12 <= pd <= p1 + 1e-12

    def test_total_probability(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            a = float(rng.uniform(0.01, 1))
            b = float(rng.uniform(0, a))
            pd = float(rng.uniform(0.01, 0.99))
            p1, p0 = flag_to_misinfo_probs(a, b, pd)
            p_bar = a * pd + b * (1 - pd)
            assert p1 * p_bar + p0 * (1 - p_bar) == pytest.approx(pd, abs=1e-12)

    def test_rejects_zero_denominator(self):
        with pytest.raises(ValueError):
            flag_to_misinfo_probs(0.0, 0.0, 1.0)


class TestPriorFromMarginal:
    def test_default_parameters(self):
        alpha, beta = prior_from_marginal(0.3, 0.01, 0.15, strength=1.0)
        assert alpha == pytest.approx(0.0535, rel=1e-12)
        assert beta == pytest.approx(0.9465, rel=1e-12)

    def test_pd_extremes(self):
        alpha, _ = prior_from_marginal(0.3, 0.01, 0.0, strength=1.0)
        assert alpha == pytest.approx(0.01, rel=1e-12)
        alpha, _ = prior_from_marginal(0.3, 0.01, 1.0, strength=1.0)
        assert alpha == pytest.approx(0.3, rel=1e-12)

    def test_strength_scales(self):
        a1, b1 = prior_from_marginal(0.3, 0.01, 0.15, strength=1.0)
        a5, b5 = prior_from_marginal(0.3, 0.01, 0.15, strength=5.0)
        assert a5 == pytest.approx(5 * a1, rel=1e-12)
        assert b5 == pytest.approx(5 * b1, rel=1e-12)


def test_crowd_from_likelihoods_defaults():
    crowd = crowd_from_likelihoods(P_F1_M1, P_F1_M0, P_D, prior_strength=1.0)
    assert crowd.alpha + crowd.beta == pytest.approx(1.0, rel=1e-12)
    assert crowd.p_m_f0 < P_D < crowd.p_m_f1
