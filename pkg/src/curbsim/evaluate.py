"""Counterfactual replay evaluation, metrics, policy cost, and sweeps.

Cascades are held fixed; a policy only chooses dispatch times. For fake
stories, exposures after the dispatch count as prevented. The quadratic
control objective is evaluated exactly piecewise: between events both
the posterior misinformation rate and every decaying dispatch intensity
are exponentials with known coefficients, so each segment integral has
a closed form.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .baselines import (
    SchedulePolicy,
    flag_sum_dispatch_time,
    make_rate_policy,
)
from .crowd import CrowdParams
from .dataio import CascadeDataset, ResultRow, ResultsTable
from .kernel import EXPOSURE, POST, EventRecord, KernelParams
from .scheduler import ControlParams, FactCheckDecision, RatePolicy, drive_schedule
from .seeding import derive_rng
from .simulate import FAKE, sample_flags


@dataclass(frozen=True, slots=True)
class EvalParams:
    """Shared evaluation context: crowd model, kernel, horizon, flag likelihoods."""

    crowd: CrowdParams
    kernel: KernelParams
    t0: float
    tf: float
    p_f1_m1: float
    p_f1_m0: float

    def __post_init__(self):
        if not self.t0 < self.tf:
            raise ValueError(f"need t0 < tf, got {self.t0} >= {self.tf}")


@dataclass(frozen=True, slots=True)
class ReplayOutcome:
    """Replay result for one story."""

    story_id: str
    label: str
    decision: FactCheckDecision
    exposures_total: int
    exposures_after_decision: int


def _story_f_true(record, params: EvalParams) -> float:
    if record.config is not None:
        return record.config.f_s
    return params.p_f1_m1 if record.label == FAKE else params.p_f1_m0


def _replay_events(record) -> list[EventRecord]:
    # fact-check records from external logs are not part of the cascade
    return [ev for ev in record.events if ev.kind in (POST, EXPOSURE)]


def replay_evaluate(
    dataset: CascadeDataset,
    policy: SchedulePolicy,
    params: EvalParams,
    seed: int,
) -> list[ReplayOutcome]:
    """Run one policy over a fixed dataset, one RNG substream per story.

    Story substreams depend only on (seed, story_id), so outcomes are
    order-independent and policies can be compared with common random
    numbers by reusing the seed.
    """
    outcomes = []
    for sid, record in dataset.stories.items():
        events = _replay_events(record)
        if policy.kind == "flag_sum":
            t = flag_sum_dispatch_time(events, policy.threshold, params.t0, params.tf)
            decision = FactCheckDecision(story_id=sid, time=t)
        else:
            rate = make_rate_policy(policy, params.crowd, _story_f_true(record, params))
            decision = drive_schedule(
                events,
                rate,
                params.kernel,
                params.t0,
                params.tf,
                derive_rng(seed, "replay", sid),
                story_id=sid,
            ).decision
        total = sum(1 for ev in events if ev.kind == EXPOSURE)
        if decision.time is None:
            after = 0
        else:
            after = sum(
                1 for ev in events if ev.kind == EXPOSURE and ev.time > decision.time
            )
        outcomes.append(
            ReplayOutcome(
                story_id=sid,
                label=record.label,
                decision=decision,
                exposures_total=total,
                exposures_after_decision=after,
            )
        )
    return outcomes


def precision(outcomes: Sequence[ReplayOutcome]) -> Optional[float]:
    """Fraction of dispatched stories that are fake; None when nothing dispatched."""
    dispatched = [o for o in outcomes if o.decision.time is not None]
    if not dispatched:
        return None
    fake = sum(1 for o in dispatched if o.label == FAKE)
    return fake / len(dispatched)


def misinfo_reduction(outcomes: Sequence[ReplayOutcome]) -> Optional[float]:
    """Pooled fraction of fake-story exposures prevented by dispatching.

    None when the dataset contains no fake exposures.
    """
    total = sum(o.exposures_total for o in outcomes if o.label == FAKE)
    if total == 0:
        return None
    prevented = sum(o.exposures_after_decision for o in outcomes if o.label == FAKE)
    return prevented / total


def misinfo_reduction_macro(outcomes: Sequence[ReplayOutcome]) -> Optional[float]:
    """Per-story average of the prevented fraction over fake stories with exposures."""
    fractions = [
        o.exposures_after_decision / o.exposures_total
        for o in outcomes
        if o.label == FAKE and o.exposures_total > 0
    ]
    if not fractions:
        return None
    return float(np.mean(fractions))


def n_dispatched(outcomes: Sequence[ReplayOutcome]) -> int:
    return sum(1 for o in outcomes if o.decision.time is not None)


# ---------------------------------------------------------------------------
# Exact piecewise hazard / cost machinery
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class StatePath:
    """Replayed per-story state at segment starts.

    Segment i spans [times[i], times[i+1]) (the last one ends at tf);
    lam/n_exp/n_flag/n_post hold immediately after the event opening the
    segment. Segment 0 starts at t0 with the empty state.
    """

    times: np.ndarray
    lam: np.ndarray
    n_exp: np.ndarray
    n_flag: np.ndarray
    n_post: np.ndarray
    t0: float
    tf: float
    omega: float


def replay_state_path(
    events: Sequence[EventRecord], kernel: KernelParams, t0: float, tf: float
) -> StatePath:
    """Walk a fixed event stream, recording state after every event."""
    n = len(events)
    times = np.empty(n + 1)
    lam_arr = np.empty(n + 1)
    ne_arr = np.empty(n + 1, dtype=np.int64)
    nf_arr = np.empty(n + 1, dtype=np.int64)
    np_arr = np.empty(n + 1, dtype=np.int64)

    times[0] = t0
    lam_arr[0] = 0.0
    ne_arr[0] = nf_arr[0] = np_arr[0] = 0

    lam = 0.0
    cur = t0
    n_exp = n_flag = n_post = 0
    prev_t = t0
    for i, ev in enumerate(events):
        t = ev.time
        if t < prev_t:
            raise ValueError(f"event stream not sorted at t={t}")
        if not (t0 < t <= tf):
            raise ValueError(f"event at t={t} outside horizon ({t0}, {tf}]")
        prev_t = t
        if t > cur:
            lam *= math.exp(-kernel.omega * (t - cur))
            cur = t
        if ev.kind == EXPOSURE:
            n_exp += 1
            if ev.flag:
                n_flag += 1
            if ev.reshare:
                lam += kernel.gamma
        elif ev.kind == POST:
            n_post += 1
            lam += kernel.gamma
        else:
            raise ValueError(f"cannot replay event kind {ev.kind!r}")
        times[i + 1] = t
        lam_arr[i + 1] = lam
        ne_arr[i + 1] = n_exp
        nf_arr[i + 1] = n_flag
        np_arr[i + 1] = n_post
    return StatePath(
        times=times,
        lam=lam_arr,
        n_exp=ne_arr,
        n_flag=nf_arr,
        n_post=np_arr,
        t0=t0,
        tf=tf,
        omega=kernel.omega,
    )


def misinfo_rate_path(path: StatePath, crowd: CrowdParams) -> np.ndarray:
    """Posterior misinformation rate at each segment start."""
    post_mean = (crowd.alpha + path.n_flag) / (crowd.alpha + crowd.beta + path.n_exp)
    coef = crowd.p_m_f0 + (crowd.p_m_f1 - crowd.p_m_f0) * post_mean
    return coef * path.lam


def policy_rate_path(path: StatePath, rate_policy: RatePolicy) -> np.ndarray:
    """Dispatch intensity at each segment start for an intensity policy."""
    rate = rate_policy.rate
    return np.array(
        [
            rate(int(ne), int(nf), float(lm))
            for ne, nf, lm in zip(path.n_exp, path.n_flag, path.lam)
        ]
    )


@dataclass(slots=True)
class HazardPath:
    """Piecewise rate over [t0, tf]: decaying at omega or constant per segment.

    Supports exact cumulative integrals of the rate and its square, and
    inverse-transform sampling of the first event.
    """

    times: np.ndarray
    rates: np.ndarray
    decays: bool
    omega: float
    tf: float
    cum: np.ndarray = field(init=False)
    cum_sq: np.ndarray = field(init=False)

    def __post_init__(self):
        dt = np.empty_like(self.times)
        dt[:-1] = np.diff(self.times)
        dt[-1] = self.tf - self.times[-1]
        if self.decays:
            w = self.omega
            seg = self.rates * (-np.expm1(-w * dt)) / w
            seg_sq = self.rates**2 * (-np.expm1(-2.0 * w * dt)) / (2.0 * w)
        else:
            seg = self.rates * dt
            seg_sq = self.rates**2 * dt
        self.cum = np.concatenate(([0.0], np.cumsum(seg)))
        self.cum_sq = np.concatenate(([0.0], np.cumsum(seg_sq)))

    def total(self) -> float:
        return float(self.cum[-1])

    def _segment_of(self, t: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, None)

    def cumulative(self, t) -> np.ndarray | float:
        """Integral of the rate from t0 to t (elementwise for arrays)."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self._segment_of(t_arr)
        dt = t_arr - self.times[idx]
        if self.decays:
            part = self.rates[idx] * (-np.expm1(-self.omega * dt)) / self.omega
        else:
            part = self.rates[idx] * dt
        out = self.cum[idx] + part
        return out if np.ndim(t) else float(out[0])

    def cumulative_sq(self, t) -> np.ndarray | float:
        """Integral of the squared rate from t0 to t (elementwise for arrays)."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self._segment_of(t_arr)
        dt = t_arr - self.times[idx]
        if self.decays:
            part = self.rates[idx] ** 2 * (-np.expm1(-2.0 * self.omega * dt)) / (
                2.0 * self.omega
            )
        else:
            part = self.rates[idx] ** 2 * dt
        out = self.cum_sq[idx] + part
        return out if np.ndim(t) else float(out[0])

    def value_at(self, t: float) -> float:
        idx = int(self._segment_of(np.array([t]))[0])
        if self.decays:
            return float(self.rates[idx] * math.exp(-self.omega * (t - self.times[idx])))
        return float(self.rates[idx])

    def first_event_times(self, unit_exponentials: np.ndarray) -> np.ndarray:
        """Invert cumulative hazard at Exp(1) draws; NaN means no event by tf.

        This is exact inverse-transform sampling of the first point of
        the inhomogeneous process with this rate.
        """
        e = np.asarray(unit_exponentials, dtype=float)
        out = np.full(e.shape, np.nan)
        live = e < self.total()
        if not live.any():
            return out
        ee = e[live]
        idx = np.searchsorted(self.cum, ee, side="right") - 1
        idx = np.clip(idx, 0, len(self.rates) - 1)
        rem = ee - self.cum[idx]
        r = self.rates[idx]
        if self.decays:
            t = self.times[idx] - np.log1p(-self.omega * rem / r) / self.omega
        else:
            t = self.times[idx] + rem / r
        out[live] = t
        return out


def dispatch_hazard(
    events: Sequence[EventRecord],
    rate_policy: RatePolicy,
    kernel: KernelParams,
    t0: float,
    tf: float,
) -> HazardPath:
    """Deterministic dispatch-intensity path of a policy over a fixed cascade.

    Integrating this path gives the exact survival curve of the dispatch
    time: the independent reference the event-driven sampler is tested
    against.
    """
    path = replay_state_path(events, kernel, t0, tf)
    rates = policy_rate_path(path, rate_policy)
    return HazardPath(
        times=path.times,
        rates=rates,
        decays=rate_policy.decays,
        omega=kernel.omega,
        tf=tf,
    )


def misinfo_hazard(
    events: Sequence[EventRecord], crowd: CrowdParams, kernel: KernelParams,
    t0: float, tf: float,
) -> HazardPath:
    """Posterior misinformation-rate path over a fixed cascade (always decaying)."""
    path = replay_state_path(events, kernel, t0, tf)
    rates = misinfo_rate_path(path, crowd)
    return HazardPath(
        times=path.times, rates=rates, decays=True, omega=kernel.omega, tf=tf
    )


# ---------------------------------------------------------------------------
# Monte Carlo policy cost
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=False)
class PolicyCost:
    """Monte Carlo estimate of the quadratic control objective.

    run_totals holds the per-run realized losses so that policies
    evaluated with common random numbers can be compared pairwise.
    """

    mean: float
    stderr: float
    misinfo_mean: float
    control_mean: float
    terminal_mean: float
    mean_fact_checks: float
    n_runs: int
    run_totals: np.ndarray


def policy_cost(
    dataset: CascadeDataset,
    policy: SchedulePolicy,
    crowd: CrowdParams,
    ctrl: ControlParams,
    n_runs: int,
    seed: int,
    kernel: KernelParams,
    likelihoods: Optional[tuple[float, float]] = None,
) -> PolicyCost:
    """Estimate the expected loss of a dispatch policy on a fixed dataset.

    Per run, each story's dispatch time is sampled exactly by inverting
    the policy's cumulative hazard; the running loss
    (misinfo^2 + q u^2)/2 is integrated in closed form up to the
    dispatch (after which the story contributes nothing), plus the
    terminal misinfo^2/2 for undispatched stories. ctrl.q weighs the
    control term; the policy's own q sets the dispatch intensity.

    Sampling draws depend only on (seed, run, story), so two policies
    evaluated with the same seed are coupled by common random numbers.
    """
    if n_runs < 2:
        raise ValueError(f"n_runs must be >= 2, got {n_runs}")
    if policy.kind == "flag_sum":
        raise ValueError("policy_cost applies to intensity policies only")

    totals = np.zeros(n_runs)
    misinfo_tot = np.zeros(n_runs)
    control_tot = np.zeros(n_runs)
    terminal_tot = np.zeros(n_runs)
    dispatch_tot = np.zeros(n_runs)

    for sid, record in dataset.stories.items():
        events = _replay_events(record)
        path = replay_state_path(events, kernel, ctrl.t0, ctrl.tf)
        m_rates = misinfo_rate_path(path, crowd)
        m_hazard = HazardPath(
            times=path.times, rates=m_rates, decays=True,
            omega=kernel.omega, tf=ctrl.tf,
        )
        if policy.kind == "oracle":
            if record.config is not None:
                f_true = record.config.f_s
            elif likelihoods is not None:
                f_true = likelihoods[0] if record.label == FAKE else likelihoods[1]
            else:
                raise ValueError("oracle cost needs story configs or likelihoods")
            rate_policy = make_rate_policy(policy, crowd, f_true)
        else:
            rate_policy = make_rate_policy(policy, crowd)
        u_rates = policy_rate_path(path, rate_policy)
        u_hazard = HazardPath(
            times=path.times, rates=u_rates, decays=rate_policy.decays,
            omega=kernel.omega, tf=ctrl.tf,
        )

        draws = derive_rng(seed, "cost", sid).standard_exponential(n_runs)
        taus = u_hazard.first_event_times(draws)
        dispatched = ~np.isnan(taus)
        stop = np.where(dispatched, taus, ctrl.tf)

        m_int = 0.5 * m_hazard.cumulative_sq(stop)
        u_int = 0.5 * ctrl.q * u_hazard.cumulative_sq(stop)
        m_tf = m_hazard.value_at(ctrl.tf)
        terminal = np.where(dispatched, 0.0, 0.5 * m_tf * m_tf)

        misinfo_tot += m_int
        control_tot += u_int
        terminal_tot += terminal
        dispatch_tot += dispatched
        totals += m_int + u_int + terminal

    stderr = float(np.std(totals, ddof=1) / math.sqrt(n_runs))
    return PolicyCost(
        mean=float(np.mean(totals)),
        stderr=stderr,
        misinfo_mean=float(np.mean(misinfo_tot)),
        control_mean=float(np.mean(control_tot)),
        terminal_mean=float(np.mean(terminal_tot)),
        mean_fact_checks=float(np.mean(dispatch_tot)),
        n_runs=n_runs,
        run_totals=totals,
    )


# ---------------------------------------------------------------------------
# Sweeps and budget calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SweepSpec:
    """Grid evaluation request: one row per (grid point, seed)."""

    policy_kind: str
    grid: tuple[float, ...]
    seeds: tuple[int, ...]
    params: EvalParams
    measure_runtime: bool = True

    def __post_init__(self):
        if not self.grid:
            raise ValueError("sweep grid must not be empty")
        if not self.seeds:
            raise ValueError("sweep needs at least one seed")


def _policy_for(kind: str, value: float) -> SchedulePolicy:
    if kind == "flag_sum":
        return SchedulePolicy(kind=kind, threshold=int(value))
    return SchedulePolicy(kind=kind, q=float(value))


def sweep(spec: SweepSpec, dataset: CascadeDataset) -> ResultsTable:
    """Evaluate a policy over its tunable grid; failures are recorded, not raised."""
    table = ResultsTable()
    for value in spec.grid:
        for s in spec.seeds:
            try:
                policy = _policy_for(spec.policy_kind, value)
                start = _time.perf_counter()
                outcomes = replay_evaluate(dataset, policy, spec.params, s)
                elapsed = _time.perf_counter() - start
                table.rows.append(
                    ResultRow(
                        policy=spec.policy_kind,
                        q=policy.q,
                        threshold=policy.threshold,
                        seed=s,
                        n_fact_checks=n_dispatched(outcomes),
                        precision=precision(outcomes),
                        misinfo_reduction=misinfo_reduction(outcomes),
                        misinfo_reduction_macro=misinfo_reduction_macro(outcomes),
                        runtime_s=elapsed if spec.measure_runtime else 0.0,
                    )
                )
            except Exception as exc:  # noqa: BLE001 - sweep must survive bad points
                table.failures.append(f"point={value} seed={s}: {exc}")
    return table


def mean_dispatch_count(
    dataset: CascadeDataset,
    policy: SchedulePolicy,
    params: EvalParams,
    seeds: Sequence[int],
) -> float:
    counts = [
        n_dispatched(replay_evaluate(dataset, policy, params, s)) for s in seeds
    ]
    return float(np.mean(counts))


def calibrate_budget(
    dataset: CascadeDataset,
    kind: str,
    target: float,
    params: EvalParams,
    seeds: Sequence[int],
    rel_tol: float = 0.05,
    max_iter: int = 60,
) -> float:
    """Bisection on q so the realized mean dispatch count matches a target.

    The count is decreasing in q for curb/oracle (intensity scales with
    q^{-1/2}) and increasing for flag_ratio/exposure (scales with q).
    """
    if kind == "flag_sum":
        raise ValueError("use calibrate_threshold for flag_sum")
    if not (0 < target <= dataset.n_stories()):
        raise ValueError(f"target {target} out of range for dataset")

    increasing = kind in ("flag_ratio", "exposure")

    def count_at(log_q: float) -> float:
        policy = SchedulePolicy(kind=kind, q=10.0**log_q)
        return mean_dispatch_count(dataset, policy, params, seeds)

    lo, hi = -2.0, 2.0
    f_lo, f_hi = count_at(lo), count_at(hi)
    if not increasing:
        lo, hi, f_lo, f_hi = hi, lo, f_hi, f_lo
    # expand until the target is bracketed (f is monotone from lo to hi)
    for _ in range(60):
        if f_lo <= target:
            break
        lo += -1.0 if increasing else 1.0
        f_lo = count_at(lo)
    for _ in range(60):
        if f_hi >= target:
            break
        hi += 1.0 if increasing else -1.0
        f_hi = count_at(hi)

    best_q, best_err = 10.0**lo, abs(f_lo - target)
    if abs(f_hi - target) < best_err:
        best_q, best_err = 10.0**hi, abs(f_hi - target)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = count_at(mid)
        if abs(f_mid - target) < best_err:
            best_q, best_err = 10.0**mid, abs(f_mid - target)
        if abs(f_mid - target) <= rel_tol * target:
            return 10.0**mid
        if f_mid < target:
            lo = mid
        else:
            hi = mid
        if abs(hi - lo) < 1e-4:
            break
    return best_q


def calibrate_threshold(
    dataset: CascadeDataset,
    target: float,
    params: EvalParams,
    seeds: Sequence[int],
    max_threshold: int = 200,
) -> int:
    """Smallest-error flag_sum threshold for a target dispatch count."""
    best_t, best_err = 1, math.inf
    for t in range(1, max_threshold + 1):
        policy = SchedulePolicy(kind="flag_sum", threshold=t)
        count = mean_dispatch_count(dataset, policy, params, seeds[:1])
        err = abs(count - target)
        if err < best_err:
            best_t, best_err = t, err
        if count == 0:
            break
    return best_t


def with_resampled_flags(
    dataset: CascadeDataset, p_f1_m1: float, p_f1_m0: float, seed: int
) -> CascadeDataset:
    """Copy of a dataset with flags redrawn under new likelihoods.

    Exposure times, reshares and labels are untouched, so sensitivity
    sweeps isolate the effect of crowd accuracy.
    """
    stories = {}
    for sid, record in dataset.stories.items():
        rng = derive_rng(seed, "flags", sid)
        events = sample_flags(record.events, record.label, (p_f1_m1, p_f1_m0), rng)
        config = record.config
        if config is not None:
            config = replace(
                config, f_s=p_f1_m1 if record.label == FAKE else p_f1_m0
            )
        stories[sid] = replace(record, events=events, config=config)
    return CascadeDataset(stories=stories, provenance=dataset.provenance)
