"""Point-process kernel: recursion, convolution, and sampler exactness."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from curbsim import (
    EventRecord,
    IntensityState,
    KernelParams,
    apply_jump,
    decay,
    direct_intensity,
    kernel_eval,
    sample_exp_decay_time,
    thinning_sample,
)
from curbsim.kernel import EXPOSURE, POST

from conftest import GAMMA, OMEGA, make_exposure, make_post


def test_kernel_params_validate():
    with pytest.raises(ValueError):
        KernelParams(gamma=-1.0, omega=1.0)
    with pytest.raises(ValueError):
        KernelParams(gamma=1.0, omega=0.0)


def test_event_record_posts_carry_no_marks():
    with pytest.raises(ValueError):
        EventRecord(time=0.0, kind=POST, reshare=True)
    with pytest.raises(ValueError):
        EventRecord(time=0.0, kind=POST, flag=True)
    with pytest.raises(ValueError):
        EventRecord(time=0.0, kind="bogus")


class TestKernelEval:
    def test_negative_lag_is_zero(self, kernel):
        assert kernel_eval(kernel, -1.0) == 0.0

    def test_zero_lag_is_gamma(self, kernel):
        assert kernel_eval(kernel, 0.0) == GAMMA

    def test_half_life(self, kernel):
        # gamma=1e-4, omega=1e-5: one half-life decays to 5e-5
        assert kernel_eval(kernel, math.log(2) / OMEGA) == pytest.approx(5e-5, rel=1e-12)


class TestDecayJump:
    def test_zero_elapsed_unchanged(self, kernel):
        s = IntensityState(lambda_e=0.3, t_cursor=10.0)
        assert decay(s, kernel, 10.0) == s

    def test_one_half_life(self, kernel):
        s = IntensityState(lambda_e=2 * GAMMA, t_cursor=0.0)
        out = decay(s, kernel, math.log(2) / OMEGA)
        assert out.lambda_e == pytest.approx(GAMMA, rel=1e-12)

    def test_zero_fixed_point(self, kernel):
        s = IntensityState(lambda_e=0.0, t_cursor=0.0)
        assert decay(s, kernel, 1e9).lambda_e == 0.0

    def test_rejects_time_travel(self, kernel):
        s = IntensityState(lambda_e=1.0, t_cursor=5.0)
        with pytest.raises(ValueError):
            decay(s, kernel, 4.0)

    def test_jump_from_zero(self, kernel):
        s = IntensityState(lambda_e=0.0, t_cursor=0.0)
        assert apply_jump(s, kernel).lambda_e == GAMMA

    def test_two_jumps_add(self, kernel):
        s = IntensityState(lambda_e=0.5, t_cursor=0.0)
        assert apply_jump(apply_jump(s, kernel), kernel).lambda_e == 0.5 + 2 * GAMMA

    def test_jump_then_decay_half_life(self, kernel):
        s = apply_jump(IntensityState(lambda_e=0.0, t_cursor=0.0), kernel)
        out = decay(s, kernel, math.log(2) / OMEGA)
        assert out.lambda_e == pytest.approx(GAMMA / 2, rel=1e-12)

    def test_decay_never_increases(self, kernel):
        rng = np.random.default_rng(0)
        for _ in range(200):
            lam = float(rng.uniform(0, 5))
            t0 = float(rng.uniform(0, 100))
            dt = float(rng.uniform(0, 1e6))
            s = IntensityState(lambda_e=lam, t_cursor=t0)
            assert decay(s, kernel, t0 + dt).lambda_e <= lam


class TestDirectIntensity:
    def test_empty_history(self, kernel):
        assert direct_intensity([], kernel, 100.0) == 0.0

    def test_single_post_half_life(self, kernel):
        events = [make_post(10.0)]
        got = direct_intensity(events, kernel, 10.0 + math.log(2) / OMEGA)
        assert got == pytest.approx(GAMMA / 2, rel=1e-12)

    def test_unreshared_exposures_contribute_zero(self, kernel):
        events = [make_post(1.0), make_exposure(2.0, reshare=False)]
        only_post = direct_intensity([make_post(1.0)], kernel, 50.0)
        assert direct_intensity(events, kernel, 50.0) == only_post

    def test_rejects_unsorted(self, kernel):
        events = [make_post(5.0), make_post(1.0)]
        with pytest.raises(ValueError):
            direct_intensity(events, kernel, 10.0)

    def test_events_at_t_excluded(self, kernel):
        events = [make_post(3.0)]
        assert direct_intensity(events, kernel, 3.0) == 0.0


def _random_cascade(rng, n_events, t_span=20 * 86400.0):
    times = np.sort(rng.uniform(1.0, t_span, n_events))
    times = np.unique(times)
    events = []
    for t in times:
        if rng.random() < 0.15:
            events.append(make_post(float(t)))
        else:
            events.append(
                make_exposure(
                    float(t),
                    reshare=bool(rng.random() < 0.3),
                    flag=bool(rng.random() < 0.2),
                )
            )
    return events


def replay_intensity_before(events, kernel, idx):
    """Recursion value just before event idx, via decay/apply_jump replay."""
    state = IntensityState(lambda_e=0.0, t_cursor=0.0)
    for ev in events[:idx]:
        state = decay(state, kernel, ev.time)
        if ev.kind == POST or (ev.kind == EXPOSURE and ev.reshare):
            state = apply_jump(state, kernel)
    return decay(state, kernel, events[idx].time).lambda_e


def test_recursion_matches_convolution_random_history(kernel):
    # jump/decay replay and explicit convolution agree at every event time
    rng = np.random.default_rng(42)
    events = _random_cascade(rng, 100)
    for idx in range(len(events)):
        direct = direct_intensity(events, kernel, events[idx].time)
        recur = replay_intensity_before(events, kernel, idx)
        denom = max(abs(direct), 1e-300)
        assert abs(direct - recur) / denom < 1e-9


class TestThinningSample:
    def test_zero_intensity_returns_none(self):
        rng = np.random.default_rng(0)
        out = thinning_sample(lambda t: 0.0, lambda t: 0.0, 0.0, 100.0, rng)
        assert out is None

    def test_detects_non_dominating_bound(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            thinning_sample(lambda t: 2.0, lambda t: 1.0, 0.0, 1e9, rng)

    def test_constant_rate_mean_count(self):
        # counts over [0, T] across many runs within 3 sigma of c*T
        c, T, n_runs = 0.5, 10.0, 10_000
        rng = np.random.default_rng(123)
        total = 0
        for _ in range(n_runs):
            t = 0.0
            while True:
                t = thinning_sample(lambda s: c, lambda s: c, t, T, rng)
                if t is None:
                    break
                total += 1
        expected = n_runs * c * T
        z = (total - expected) / math.sqrt(expected)
        assert abs(z) < 3.0

    def test_constant_rate_gaps_are_exponential(self):
        c, T = 2.0, 50.0
        rng = np.random.default_rng(7)
        gaps = []
        for _ in range(300):
            prev, t = 0.0, 0.0
            while True:
                t = thinning_sample(lambda s: c, lambda s: c, t, T, rng)
                if t is None:
                    break
                gaps.append(t - prev)
                prev = t
        assert len(gaps) > 10_000
        res = stats.kstest(gaps, stats.expon(scale=1 / c).cdf)
        assert res.pvalue > 0.01


class TestSampleExpDecay:
    def test_zero_rate_returns_none(self):
        rng = np.random.default_rng(0)
        assert sample_exp_decay_time(0.0, 1e-5, 0.0, rng) is None

    def test_rejects_bad_args(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            sample_exp_decay_time(-1.0, 1e-5, 0.0, rng)
        with pytest.raises(ValueError):
            sample_exp_decay_time(1.0, 0.0, 0.0, rng)

    def test_survival_probability(self):
        # P(no event) = exp(-u0/omega), 3 sigma over 1e5 draws
        u0, omega, n = 2e-5, 1e-5, 100_000
        rng = np.random.default_rng(99)
        none_count = sum(
            1 for _ in range(n) if sample_exp_decay_time(u0, omega, 0.0, rng) is None
        )
        p = math.exp(-u0 / omega)
        z = (none_count - n * p) / math.sqrt(n * p * (1 - p))
        assert abs(z) < 3.0

    def test_agrees_with_thinning(self):
        # same decaying intensity sampled both ways: two-sample KS at 0.01
        u0, omega, n = 3e-5, 1e-5, 10_000
        t_max = 40.0 / omega  # leftover mass ~ exp(-40), negligible
        rng = np.random.default_rng(5)
        inversion = [sample_exp_decay_time(u0, omega, 0.0, rng) for _ in range(n)]

        def lam(t):
            return u0 * math.exp(-omega * t)

        thinned = [thinning_sample(lam, lambda t: u0, 0.0, t_max, rng) for _ in range(n)]
        inv_times = np.array([t for t in inversion if t is not None])
        thin_times = np.array([t for t in thinned if t is not None])
        # event fractions agree
        p_hat = (len(inv_times) + len(thin_times)) / (2 * n)
        z = (len(inv_times) - len(thin_times)) / math.sqrt(2 * n * p_hat * (1 - p_hat))
        assert abs(z) < 3.0
        res = stats.ks_2samp(inv_times, thin_times)
        assert res.pvalue > 0.01


def test_superposition_of_constant_rates():
    # merged samples of two independent processes match the summed rate
    c1, c2, T, n_runs = 0.7, 1.1, 5.0, 5_000
    rng = np.random.default_rng(21)

    def run_constant(c):
        count, t = 0, 0.0
        while True:
            t = thinning_sample(lambda s: c, lambda s: c, t, T, rng)
            if t is None:
                return count
            count += 1

    merged = sum(run_constant(c1) + run_constant(c2) for _ in range(n_runs))
    expected = n_runs * (c1 + c2) * T
    z = (merged - expected) / math.sqrt(expected)
    assert abs(z) < 3.0
