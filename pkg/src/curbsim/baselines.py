"""Comparison dispatch policies.

An oracle variant of the optimal policy that knows each story's true
flag probability, two stochastic heuristics (flag ratio and raw
exposure intensity), and the deterministic flag-count threshold. The
stochastic policies plug into the same scheduling loop as the optimal
one; only the rate formula changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .crowd import CrowdParams
from .kernel import EXPOSURE, EventRecord
from .scheduler import CurbRate, RatePolicy, StoryState

POLICY_KINDS = ("curb", "oracle", "flag_ratio", "flag_sum", "exposure")
STOCHASTIC_KINDS = ("curb", "oracle", "flag_ratio", "exposure")


@dataclass(frozen=True, slots=True)
class SchedulePolicy:
    """A named dispatch policy with its tunable.

    Stochastic kinds (curb, oracle, flag_ratio, exposure) scale an
    intensity by q; flag_sum dispatches at a flag-count threshold.
    """

    kind: str
    q: Optional[float] = None
    threshold: Optional[int] = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind in STOCHASTIC_KINDS:
            if self.q is None or self.q <= 0:
                raise ValueError(f"{self.kind} policy needs q > 0, got {self.q}")
        else:
            if self.threshold is None or self.threshold < 1:
                raise ValueError(
                    f"flag_sum policy needs threshold >= 1, got {self.threshold}"
                )


class OracleRate:
    """Optimal-form rate with the true flag probability instead of the posterior."""

    __slots__ = ("_coef",)
    decays = True

    def __init__(self, crowd: CrowdParams, q: float, f_true: float):
        if not (0.0 <= f_true <= 1.0):
            raise ValueError(f"f_true must be a probability, got {f_true}")
        if q <= 0:
            raise ValueError(f"q must be > 0, got {q}")
        coef = crowd.p_m_f0 + (crowd.p_m_f1 - crowd.p_m_f0) * f_true
        self._coef = coef / math.sqrt(q)

    def rate(self, n_exposures: int, n_flags: int, lambda_e: float) -> float:
        return self._coef * lambda_e


class FlagRatioRate:
    """Rate proportional to the smoothed flag/exposure ratio; constant between events."""

    __slots__ = ("_q", "_alpha", "_ab")
    decays = False

    def __init__(self, crowd: CrowdParams, q: float):
        if q <= 0:
            raise ValueError(f"q must be > 0, got {q}")
        self._q = q
        self._alpha = crowd.alpha
        self._ab = crowd.alpha + crowd.beta

    def rate(self, n_exposures: int, n_flags: int, lambda_e: float) -> float:
        return self._q * (self._alpha + n_flags) / (self._ab + n_exposures)


class ExposureRate:
    """Rate proportional to the exposure intensity, ignoring flags."""

    __slots__ = ("_q",)
    decays = True

    def __init__(self, q: float):
        if q <= 0:
            raise ValueError(f"q must be > 0, got {q}")
        self._q = q

    def rate(self, n_exposures: int, n_flags: int, lambda_e: float) -> float:
        return self._q * lambda_e


def oracle_intensity(
    state: StoryState, f_true: float, crowd: CrowdParams, q: float
) -> float:
    """Oracle dispatch intensity at a story state."""
    if state.fact_checked:
        return 0.0
    return OracleRate(crowd, q, f_true).rate(
        state.counts.n_exposures, state.counts.n_flags, state.intensity.lambda_e
    )


def flag_ratio_intensity(state: StoryState, crowd: CrowdParams, q: float) -> float:
    """Flag-ratio dispatch intensity at a story state."""
    if state.fact_checked:
        return 0.0
    return FlagRatioRate(crowd, q).rate(
        state.counts.n_exposures, state.counts.n_flags, state.intensity.lambda_e
    )


def exposure_intensity(state: StoryState, q: float) -> float:
    """Exposure-proportional dispatch intensity at a story state."""
    if state.fact_checked:
        return 0.0
    return ExposureRate(q).rate(
        state.counts.n_exposures, state.counts.n_flags, state.intensity.lambda_e
    )


def flag_sum_decision(state: StoryState, threshold: int) -> bool:
    """Deterministic rule: dispatch once the flag count reaches the threshold."""
    if threshold < 1:
        raise ValueError(f"threshold must be >= 1, got {threshold}")
    return not state.fact_checked and state.counts.n_flags >= threshold


def flag_sum_dispatch_time(
    events: Sequence[EventRecord], threshold: int, t0: float, tf: float
) -> Optional[float]:
    """Time of the threshold-crossing flag in a replayed stream, or None."""
    if threshold < 1:
        raise ValueError(f"threshold must be >= 1, got {threshold}")
    seen = 0
    prev_t = t0
    for ev in events:
        if ev.time < prev_t:
            raise ValueError(f"event stream not sorted at t={ev.time}")
        prev_t = ev.time
        if ev.kind == EXPOSURE and ev.flag:
            seen += 1
            if seen >= threshold:
                return ev.time
    return None


def make_rate_policy(
    policy: SchedulePolicy, crowd: CrowdParams, f_true: Optional[float] = None
) -> RatePolicy:
    """Rate object for a stochastic policy; oracle additionally needs f_true."""
    if policy.kind == "curb":
        return CurbRate(crowd, policy.q)
    if policy.kind == "oracle":
        if f_true is None:
            raise ValueError("oracle policy needs the story's true flag probability")
        return OracleRate(crowd, policy.q, f_true)
    if policy.kind == "flag_ratio":
        return FlagRatioRate(crowd, policy.q)
    if policy.kind == "exposure":
        return ExposureRate(policy.q)
    raise ValueError(f"{policy.kind} is not an intensity policy")
