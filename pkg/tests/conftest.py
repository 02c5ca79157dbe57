"""Shared fixtures: default parameters and a fixed replay cascade."""

from __future__ import annotations

import numpy as np
import pytest

from curbsim import (
    EventRecord,
    KernelParams,
    SimConfig,
    StoryConfig,
    crowd_from_likelihoods,
    generate_exposures,
    sample_flags,
)
from curbsim.kernel import EXPOSURE, POST
from curbsim.seeding import derive_rng

GAMMA = 1e-4
OMEGA = 1e-5
P_F1_M1 = 0.3
P_F1_M0 = 0.01
P_D = 0.15


@pytest.fixture(scope="session")
def kernel():
    return KernelParams(gamma=GAMMA, omega=OMEGA)


@pytest.fixture(scope="session")
def crowd():
    return crowd_from_likelihoods(P_F1_M1, P_F1_M0, P_D, prior_strength=1.0)


@pytest.fixture(scope="session")
def sim_config(kernel):
    return SimConfig(kernel=kernel, seed=11)


@pytest.fixture(scope="session")
def fixed_cascade(sim_config):
    """One generated fake-story stream, reused by replay-based tests."""
    posts = tuple(np.sort(derive_rng(3, "posts").uniform(1.0, 4 * 86400.0, 6)))
    story = StoryConfig(story_id="fx", label="fake", r_s=0.06, f_s=P_F1_M1, posts=posts)
    rng = derive_rng(3, "events")
    events = generate_exposures(story, sim_config, rng)
    return sample_flags(events, "fake", (P_F1_M1, P_F1_M0), rng)


def make_exposure(t, reshare=False, flag=False):
    return EventRecord(time=t, kind=EXPOSURE, reshare=reshare, flag=flag)


def make_post(t):
    return EventRecord(time=t, kind=POST)
