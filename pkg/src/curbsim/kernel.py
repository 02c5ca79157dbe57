"""Exponential-kernel point process primitives.

Intensity evaluation (closed-form decay/jump recursion and direct
convolution) plus exact samplers for homogeneous, inhomogeneous and
exponentially decaying event rates. Everything here is a pure function
of explicit state; randomness always comes from an injected generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

POST = "post"
EXPOSURE = "exposure"
FACT_CHECK = "fact_check"

EVENT_KINDS = (POST, EXPOSURE, FACT_CHECK)


@dataclass(frozen=True, slots=True)
class KernelParams:
    """Exponential triggering kernel g(dt) = gamma * exp(-omega * dt)."""

    gamma: float
    omega: float

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.omega <= 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")


@dataclass(frozen=True, slots=True)
class IntensityState:
    """Endogenous intensity value at a time cursor."""

    lambda_e: float
    t_cursor: float

    def __post_init__(self):
        if self.lambda_e < 0:
            raise ValueError(f"lambda_e must be >= 0, got {self.lambda_e}")


@dataclass(frozen=True, slots=True)
class EventRecord:
    """One timestamped mark: a post, or an exposure with reshare/flag marks.

    Posts carry no marks (reshare and flag are always False for them).
    """

    time: float
    kind: str
    reshare: bool = False
    flag: bool = False

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind != EXPOSURE and (self.reshare or self.flag):
            raise ValueError(f"{self.kind} events cannot carry reshare/flag marks")


def kernel_eval(params: KernelParams, dt: float) -> float:
    """Influence of an event after a lag of dt; zero for negative lags."""
    if dt < 0:
        return 0.0
    return params.gamma * math.exp(-params.omega * dt)


def decay(state: IntensityState, params: KernelParams, t: float) -> IntensityState:
    """Advance the intensity cursor to t, decaying lambda_e in closed form."""
    if t < state.t_cursor:
        raise ValueError(f"cannot decay backwards: t={t} < cursor={state.t_cursor}")
    if t == state.t_cursor:
        return state
    lam = state.lambda_e * math.exp(-params.omega * (t - state.t_cursor))
    return IntensityState(lambda_e=lam, t_cursor=t)


def apply_jump(state: IntensityState, params: KernelParams) -> IntensityState:
    """Add one triggering event's worth of intensity (lag-0 kernel value)."""
    return replace(state, lambda_e=state.lambda_e + params.gamma)


def _check_sorted(times: np.ndarray) -> None:
    if times.size > 1 and np.any(np.diff(times) < 0):
        raise ValueError("event history must be sorted by time")


def direct_intensity(
    events: Sequence[EventRecord], params: KernelParams, t: float
) -> float:
    """Evaluate the endogenous intensity at t by explicit convolution.

    Posts and reshared exposures strictly before t each contribute
    g(t - tau); unreshared exposures contribute nothing. This is the
    O(n) reference for the decay/jump recursion.
    """
    times = np.array([ev.time for ev in events], dtype=float)
    _check_sorted(times)
    triggers = np.array(
        [ev.kind == POST or (ev.kind == EXPOSURE and ev.reshare) for ev in events],
        dtype=bool,
    )
    mask = triggers & (times < t)
    if not mask.any():
        return 0.0
    lags = t - times[mask]
    return float(params.gamma * np.exp(-params.omega * lags).sum())


def thinning_sample(
    intensity_evaluator: Callable[[float], float],
    upper_bound_evaluator: Callable[[float], float],
    t_start: float,
    t_max: float,
    rng: np.random.Generator,
) -> Optional[float]:
    """First event of an inhomogeneous process on (t_start, t_max) by thinning.

    ``upper_bound_evaluator(t)`` must dominate the intensity everywhere on
    [t, t_max]; it is re-evaluated after every rejected candidate, so a
    nonincreasing intensity can supply itself as its own bound. Returns
    None when no event occurs before t_max. Raises if an accepted
    candidate reveals a non-dominating bound.
    """
    t = t_start
    while True:
        bound = upper_bound_evaluator(t)
        if bound <= 0.0:
            return None
        t = t + rng.standard_exponential() / bound
        if t >= t_max:
            return None
        lam = intensity_evaluator(t)
        if lam > bound * (1.0 + 1e-12):
            raise ValueError(
                f"upper bound {bound} does not dominate intensity {lam} at t={t}"
            )
        if rng.random() * bound < lam:
            return t


def sample_exp_decay_time(
    u0: float, omega: float, t_start: float, rng: np.random.Generator
) -> Optional[float]:
    """First event of the decaying intensity u0 * exp(-omega*(t - t_start)).

    Exact inversion: with E ~ Exp(1), there is no event iff E >= u0/omega
    (the total remaining mass); otherwise the event lands where the
    cumulative hazard reaches E.
    """
    if u0 < 0:
        raise ValueError(f"u0 must be >= 0, got {u0}")
    if omega <= 0:
        raise ValueError(f"omega must be > 0, got {omega}")
    e = rng.standard_exponential()
    if e >= u0 / omega:
        return None
    return t_start - math.log1p(-omega * e / u0) / omega
