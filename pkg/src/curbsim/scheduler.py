"""Fact-check dispatch scheduling.

The optimal dispatch intensity is proportional to the posterior
misinformation rate: u(t) = q^{-1/2} * (1 - M) * lambda_m_hat(t). The
closed-form cost-to-go backing that law is kept as a diagnostic, and an
event-driven sampler draws the dispatch time exactly: between events the
intensity decays exponentially and is sampled by inversion; at events it
jumps, handled by superposition (increases) and thinning (decreases).

The same loop drives every intensity-based policy; only the rate formula
(and whether it decays between events) differs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Protocol, Sequence

import numpy as np

from .crowd import CrowdParams, StoryCounts, misinfo_posterior_rate
from .kernel import EXPOSURE, POST, EventRecord, IntensityState, KernelParams
from .seeding import derive_rng

if TYPE_CHECKING:
    from .dataio import CascadeDataset


@dataclass(frozen=True, slots=True)
class ControlParams:
    """Dispatch cost weight and scheduling horizon."""

    q: float
    t0: float
    tf: float

    def __post_init__(self):
        if self.q <= 0:
            raise ValueError(f"q must be > 0, got {self.q}")
        if not self.t0 < self.tf:
            raise ValueError(f"need t0 < tf, got {self.t0} >= {self.tf}")


@dataclass(frozen=True, slots=True)
class StoryState:
    """Counters, intensity and dispatch flag for one story."""

    counts: StoryCounts
    intensity: IntensityState
    fact_checked: bool = False
    story_id: str = ""


@dataclass(frozen=True, slots=True)
class FactCheckDecision:
    """Dispatch time for a story, or None if never dispatched in the horizon."""

    story_id: str
    time: Optional[float]


def optimal_intensity(state: StoryState, crowd: CrowdParams, ctrl: ControlParams) -> float:
    """Optimal dispatch intensity: q^{-1/2} times the posterior misinformation rate.

    Zero once the story has been fact-checked.
    """
    if state.fact_checked:
        return 0.0
    rate = misinfo_posterior_rate(crowd, state.counts, state.intensity.lambda_e)
    return rate / math.sqrt(ctrl.q)


def cost_to_go(
    state: StoryState,
    crowd: CrowdParams,
    ctrl: ControlParams,
    r: float,
    kernel: KernelParams,
) -> float:
    """Closed-form minimal expected remaining loss from the given state.

    Diagnostic only: the scheduler never needs it, but the dispatch law
    must equal q^{-1} times the drop in this value when the story is
    checked (which zeroes its exposure intensity).
    """
    c = state.counts
    bracket = (
        (crowd.p_m_f1 - crowd.p_m_f0)
        * (crowd.alpha + c.n_flags)
        / (crowd.alpha + crowd.beta + c.n_exposures)
        + crowd.p_m_f0
    )
    tail = (
        state.intensity.lambda_e
        - kernel.gamma * c.n_posts
        - (kernel.gamma * r - kernel.omega) * (crowd.alpha + crowd.beta + c.n_exposures)
    )
    return math.sqrt(ctrl.q) * bracket * tail


class RatePolicy(Protocol):
    """Dispatch-intensity formula driven by the generic scheduling loop.

    ``decays`` says whether the rate decays at the kernel's omega between
    events (rates proportional to lambda_e) or stays constant (count-only
    rates).
    """

    decays: bool

    def rate(self, n_exposures: int, n_flags: int, lambda_e: float) -> float: ...


class CurbRate:
    """Posterior-misinformation-rate policy (the optimal control law)."""

    __slots__ = ("_scale", "_p0", "_dp", "_alpha", "_ab")
    decays = True

    def __init__(self, crowd: CrowdParams, q: float):
        if q <= 0:
            raise ValueError(f"q must be > 0, got {q}")
        self._scale = 1.0 / math.sqrt(q)
        self._p0 = crowd.p_m_f0
        self._dp = crowd.p_m_f1 - crowd.p_m_f0
        self._alpha = crowd.alpha
        self._ab = crowd.alpha + crowd.beta

    def rate(self, n_exposures: int, n_flags: int, lambda_e: float) -> float:
        coef = self._p0 + self._dp * (self._alpha + n_flags) / (self._ab + n_exposures)
        return self._scale * coef * lambda_e


@dataclass(slots=True)
class ScheduleResult:
    """Decision plus instrumentation from one scheduling run."""

    decision: FactCheckDecision
    candidate_draws: int
    events_processed: int


def _first_event_time(
    rate0: float, decays: bool, omega: float, t_start: float, rng: np.random.Generator
) -> Optional[float]:
    # Exact first-event draw for a rate that either decays at omega or is constant.
    e = rng.standard_exponential()
    if decays:
        if e >= rate0 / omega:
            return None
        return t_start - math.log1p(-omega * e / rate0) / omega
    return t_start + e / rate0


def drive_schedule(
    events: Sequence[EventRecord],
    policy: RatePolicy,
    kernel: KernelParams,
    t0: float,
    tf: float,
    rng: np.random.Generator,
    story_id: str = "",
    trace: Optional[list] = None,
) -> ScheduleResult:
    """Sample one dispatch time for a story from an intensity-based policy.

    Replays the event stream in order; the candidate dispatch time tau is
    maintained exactly through rate changes:

    - exposures update the counters; a rate decrease (unflagged exposure)
      keeps tau with probability u_new/u_old, else resamples beyond tau;
    - any rate increase (flag, reshare jump, post jump) superposes an
      independent draw from the increment and takes the minimum;
    - between events the rate is sampled in closed form (no grid).

    Events at or after tau are not consumed. A tau at or beyond tf means
    the story is never dispatched.
    """
    gamma = kernel.gamma
    omega = kernel.omega
    rate = policy.rate
    decays = policy.decays
    exp = math.exp

    n_exp = 0
    n_flag = 0
    lam = 0.0
    cur = t0
    tau = tf
    draws = 0
    processed = 0

    # Policies with a nonzero empty-state rate (e.g. flag-ratio priors) can
    # dispatch before any event arrives.
    u = rate(0, 0, 0.0)
    if u > 0.0:
        draws += 1
        kappa = _first_event_time(u, decays, omega, t0, rng)
        if kappa is not None and kappa < tau:
            tau = kappa

    prev_t = t0
    for ev in events:
        t = ev.time
        if t < prev_t:
            raise ValueError(f"event stream not sorted at t={t}")
        if not (t0 < t <= tf):
            raise ValueError(f"event at t={t} outside horizon ({t0}, {tf}]")
        prev_t = t
        if t >= tau:
            break
        processed += 1

        if t > cur:
            lam *= exp(-omega * (t - cur))
            cur = t

        kind = ev.kind
        u0 = rate(n_exp, n_flag, lam)
        if kind == EXPOSURE:
            n_exp += 1
            if ev.flag:
                n_flag += 1
            u_mid = rate(n_exp, n_flag, lam)
            if not ev.flag and u0 > 0.0:
                if u_mid / u0 < rng.random():
                    # candidate thinned away: next one lies beyond tau
                    if decays:
                        rate_at_tau = u_mid * exp(-omega * (tau - t))
                    else:
                        rate_at_tau = u_mid
                    draws += 1
                    resampled = _first_event_time(rate_at_tau, decays, omega, tau, rng)
                    tau = resampled if resampled is not None else math.inf
        else:
            u_mid = u0

        # base rate already accounted for by tau after the thinning step
        u_base = u_mid if u_mid < u0 else u0

        if kind == POST or (kind == EXPOSURE and ev.reshare):
            lam += gamma
        u_new = rate(n_exp, n_flag, lam)

        du = u_new - u_base
        if du > 0.0:
            draws += 1
            kappa = _first_event_time(du, decays, omega, t, rng)
            if kappa is not None and kappa < tau:
                tau = kappa

        if trace is not None:
            trace.append((t, u0, u_new, tau))

    time = tau if tau < tf else None
    return ScheduleResult(
        decision=FactCheckDecision(story_id=story_id, time=time),
        candidate_draws=draws,
        events_processed=processed,
    )


def schedule_story(
    events: Sequence[EventRecord],
    crowd: CrowdParams,
    ctrl: ControlParams,
    kernel: KernelParams,
    rng: np.random.Generator,
    story_id: str = "",
) -> FactCheckDecision:
    """Sample the optimal-policy dispatch time for one story's event stream."""
    policy = CurbRate(crowd, ctrl.q)
    return drive_schedule(
        events, policy, kernel, ctrl.t0, ctrl.tf, rng, story_id=story_id
    ).decision


def story_seed_rng(seed: int, story_id: str) -> np.random.Generator:
    """Per-story scheduling stream; independent of story iteration order."""
    return derive_rng(seed, "schedule", story_id)


def schedule_all(
    dataset: "CascadeDataset",
    crowd: CrowdParams,
    q_s: float | dict[str, float],
    horizon: tuple[float, float],
    kernel: KernelParams,
    seed: int,
) -> list[FactCheckDecision]:
    """Schedule every story independently with per-story RNG substreams.

    ``q_s`` is either one global cost weight or a mapping story_id -> q.
    Each story's decision is bit-identical to calling schedule_story with
    the generator from story_seed_rng(seed, story_id).
    """
    t0, tf = horizon
    decisions = []
    for sid, record in dataset.stories.items():
        q = q_s[sid] if isinstance(q_s, dict) else q_s
        ctrl = ControlParams(q=q, t0=t0, tf=tf)
        try:
            decisions.append(
                schedule_story(
                    record.events, crowd, ctrl, kernel,
                    story_seed_rng(seed, sid), story_id=sid,
                )
            )
        except ValueError as exc:
            raise ValueError(f"story {sid!r}: {exc}") from exc
    return decisions
