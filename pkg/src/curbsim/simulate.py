"""Cascade generation.

Expands post skeletons into exposure streams driven by the
self-exciting endogenous intensity (every post or reshared exposure
adds one kernel jump), samples reshare and flag marks, and builds
labeled synthetic datasets for end-to-end runs without real data.

All times are seconds. With the default kernel (gamma=1e-4, omega=1e-5)
each post triggers about 10 exposures directly, with a ~19 hour
influence half-life.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dataio import CascadeDataset, Provenance, StoryRecord
from .kernel import (
    EXPOSURE,
    POST,
    EventRecord,
    IntensityState,
    KernelParams,
    apply_jump,
    decay,
    thinning_sample,
)

DEFAULT_GAMMA = 1e-4
DEFAULT_OMEGA = 1e-5
DEFAULT_P_F1_M1 = 0.3
DEFAULT_P_F1_M0 = 0.01
DEFAULT_HORIZON = (0.0, 30 * 86400.0)

FAKE = "fake"
GENUINE = "genuine"
LABELS = (FAKE, GENUINE)


class CascadeOverflowError(RuntimeError):
    """Raised when a cascade exceeds the event cap (runaway self-excitation)."""


@dataclass(frozen=True, slots=True)
class StoryConfig:
    """Ground-truth generative parameters for one story."""

    story_id: str
    label: str
    r_s: float
    f_s: float
    posts: tuple[float, ...]

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if not (0.0 <= self.r_s <= 1.0 and 0.0 <= self.f_s <= 1.0):
            raise ValueError("r_s and f_s must be probabilities")
        if any(b < a for a, b in zip(self.posts, self.posts[1:])):
            raise ValueError("post times must be sorted")


@dataclass(frozen=True, slots=True)
class SimConfig:
    """Kernel, horizon, flag likelihoods and seed for cascade generation."""

    kernel: KernelParams = KernelParams(DEFAULT_GAMMA, DEFAULT_OMEGA)
    t0: float = DEFAULT_HORIZON[0]
    tf: float = DEFAULT_HORIZON[1]
    p_f1_m1: float = DEFAULT_P_F1_M1
    p_f1_m0: float = DEFAULT_P_F1_M0
    seed: int = 0

    def __post_init__(self):
        if not self.t0 < self.tf:
            raise ValueError(f"need t0 < tf, got {self.t0} >= {self.tf}")
        for name, p in (("p_f1_m1", self.p_f1_m1), ("p_f1_m0", self.p_f1_m0)):
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name} must be a probability, got {p}")


def generate_exposures(
    story: StoryConfig,
    sim: SimConfig,
    rng: np.random.Generator,
    max_events: int = 1_000_000,
) -> list[EventRecord]:
    """Exact expansion of a post skeleton into a full event stream.

    Exposures are drawn by thinning against the current (decaying)
    intensity segment by segment between posts; each accepted exposure
    reshares with probability r_s and a reshare adds a kernel jump.
    Flags are not sampled here (see sample_flags). Output is sorted and
    includes the skeleton posts; nothing is generated past the horizon.
    """
    kernel = sim.kernel
    omega = kernel.omega
    for p in story.posts:
        if not (sim.t0 < p <= sim.tf):
            raise ValueError(f"post at t={p} outside horizon ({sim.t0}, {sim.tf}]")

    branching = kernel.gamma * story.r_s / omega
    events: list[EventRecord] = []
    state = IntensityState(lambda_e=0.0, t_cursor=sim.t0)
    post_idx = 0
    n_posts = len(story.posts)

    while True:
        boundary = story.posts[post_idx] if post_idx < n_posts else sim.tf
        cand = None
        if state.lambda_e > 0.0 and state.t_cursor < boundary:
            def seg_intensity(s, st=state):
                return st.lambda_e * math.exp(-omega * (s - st.t_cursor))

            cand = thinning_sample(
                seg_intensity, seg_intensity, state.t_cursor, boundary, rng
            )
        if cand is None:
            if post_idx >= n_posts:
                break
            state = apply_jump(decay(state, kernel, boundary), kernel)
            events.append(EventRecord(time=boundary, kind=POST))
            post_idx += 1
        else:
            state = decay(state, kernel, cand)
            reshare = bool(rng.random() < story.r_s)
            if reshare:
                state = apply_jump(state, kernel)
            events.append(EventRecord(time=cand, kind=EXPOSURE, reshare=reshare))
        if len(events) > max_events:
            raise CascadeOverflowError(
                f"story {story.story_id!r} exceeded {max_events} events "
                f"(branching factor {branching:.3f})"
            )
    return events


def expand_skeleton(
    skeleton: Sequence[EventRecord],
    sim: SimConfig,
    rng: np.random.Generator,
    max_events: int = 1_000_000,
) -> list[EventRecord]:
    """Synthesize exposures around a fixed post/reshare skeleton.

    Used for ingested datasets, where posts and reshares are observed
    but exposures are not: the skeleton events keep their marks and
    drive the intensity, while synthesized exposures never reshare.
    """
    kernel = sim.kernel
    omega = kernel.omega
    events: list[EventRecord] = []
    state = IntensityState(lambda_e=0.0, t_cursor=sim.t0)
    idx = 0
    n = len(skeleton)

    while True:
        boundary = skeleton[idx].time if idx < n else sim.tf
        if idx < n and not (sim.t0 < boundary <= sim.tf):
            raise ValueError(f"skeleton event at t={boundary} outside horizon")
        cand = None
        if state.lambda_e > 0.0 and state.t_cursor < boundary:
            def seg_intensity(s, st=state):
                return st.lambda_e * math.exp(-omega * (s - st.t_cursor))

            cand = thinning_sample(
                seg_intensity, seg_intensity, state.t_cursor, boundary, rng
            )
        if cand is None:
            if idx >= n:
                break
            ev = skeleton[idx]
            state = decay(state, kernel, boundary)
            if ev.kind == POST or (ev.kind == EXPOSURE and ev.reshare):
                state = apply_jump(state, kernel)
            events.append(ev)
            idx += 1
        else:
            state = decay(state, kernel, cand)
            events.append(EventRecord(time=cand, kind=EXPOSURE, reshare=False))
        if len(events) > max_events:
            raise CascadeOverflowError(f"skeleton expansion exceeded {max_events} events")
    return events


def sample_flags(
    exposures: Sequence[EventRecord],
    label: str,
    likelihoods: tuple[float, float],
    rng: np.random.Generator,
) -> list[EventRecord]:
    """Attach Bernoulli flag marks to every exposure in a stream.

    The flag probability is likelihoods[0] for fake stories and
    likelihoods[1] for genuine ones; posts never carry flags.
    """
    if label not in LABELS:
        raise ValueError(f"label must be one of {LABELS}, got {label!r}")
    p_flag = likelihoods[0] if label == FAKE else likelihoods[1]
    if not (0.0 <= p_flag <= 1.0):
        raise ValueError(f"flag likelihood must be a probability, got {p_flag}")
    draws = rng.random(len(exposures))
    out = []
    for ev, x in zip(exposures, draws):
        if ev.kind == EXPOSURE:
            out.append(replace(ev, flag=bool(x < p_flag)))
        else:
            out.append(ev)
    return out


def synthetic_dataset(
    n_stories: int,
    fake_fraction: float,
    posts_per_story: tuple[int, int],
    sim: SimConfig,
    rng: np.random.Generator,
    reshare_range: tuple[float, float] = (0.0, 0.05),
    post_window_frac: float = 0.2,
    max_events: int = 1_000_000,
) -> CascadeDataset:
    """Labeled synthetic dataset with ground-truth story configs retained.

    The fake-story count is floor(n_stories * fake_fraction); labels are
    assigned to a random subset. Posts land uniformly in the first
    post_window_frac of the horizon so cascades can play out before tf.
    Per-story event streams come from independent child generators, so
    stories could be generated in parallel.
    """
    if not (0.0 <= fake_fraction <= 1.0):
        raise ValueError(f"fake_fraction must be in [0, 1], got {fake_fraction}")
    if posts_per_story[0] < 1 or posts_per_story[1] < posts_per_story[0]:
        raise ValueError(f"bad posts_per_story range {posts_per_story}")

    n_fake = int(math.floor(n_stories * fake_fraction + 1e-9))
    labels = np.array([FAKE] * n_fake + [GENUINE] * (n_stories - n_fake))
    rng.shuffle(labels)

    window_end = sim.t0 + (sim.tf - sim.t0) * post_window_frac
    children = rng.spawn(n_stories) if n_stories > 0 else []
    width = max(4, len(str(max(n_stories - 1, 0))))

    stories: dict[str, StoryRecord] = {}
    user_counter = 0
    for i in range(n_stories):
        sid = f"s{i:0{width}d}"
        label = str(labels[i])
        child = children[i]
        n_posts = int(child.integers(posts_per_story[0], posts_per_story[1] + 1))
        posts = tuple(sorted(child.uniform(sim.t0, window_end, size=n_posts)))
        r_s = float(child.uniform(*reshare_range))
        f_s = sim.p_f1_m1 if label == FAKE else sim.p_f1_m0
        config = StoryConfig(story_id=sid, label=label, r_s=r_s, f_s=f_s, posts=posts)
        events = generate_exposures(config, sim, child, max_events=max_events)
        events = sample_flags(events, label, (sim.p_f1_m1, sim.p_f1_m0), child)
        user_ids = [f"u{user_counter + k}" for k in range(len(events))]
        user_counter += len(events)
        stories[sid] = StoryRecord(
            label=label, events=events, user_ids=user_ids, config=config
        )

    provenance = Provenance(
        source=f"synthetic(seed={sim.seed}, n={n_stories}, fake={fake_fraction})",
        log=[],
    )
    return CascadeDataset(stories=stories, provenance=provenance)
