"""Bayesian crowd model for story flagging.

A Beta-Bernoulli posterior over each story's flag probability, Bayes
inversion from flag likelihoods to flag-conditional misinformation
probabilities, and the resulting (true or posterior) misinformation
rate as a multiple of the exposure intensity.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, slots=True)
class CrowdParams:
    """Flag-conditional misinformation probabilities and Beta prior.

    p_m_f1 / p_m_f0: probability that a story is misinformation given
    that a user did / did not flag it. Flags are evidence *for*
    misinformation, so p_m_f0 <= p_m_f1 is required.
    """

    p_m_f1: float
    p_m_f0: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 <= self.p_m_f0 <= self.p_m_f1 <= 1.0):
            raise ValueError(
                f"need 0 <= p_m_f0 <= p_m_f1 <= 1, got {self.p_m_f0}, {self.p_m_f1}"
            )
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError(f"alpha and beta must be > 0, got {self.alpha}, {self.beta}")


@dataclass(frozen=True, slots=True)
class StoryCounts:
    """Per-story exposure/flag/post counters at some time."""

    n_exposures: int = 0
    n_flags: int = 0
    n_posts: int = 0

    def __post_init__(self):
        if self.n_exposures < 0 or self.n_posts < 0:
            raise ValueError("counts must be nonnegative")
        if not (0 <= self.n_flags <= self.n_exposures):
            raise ValueError(
                f"need 0 <= n_flags <= n_exposures, got {self.n_flags}, {self.n_exposures}"
            )


def posterior_flag_mean(crowd: CrowdParams, counts: StoryCounts) -> float:
    """Posterior mean flag probability after the observed exposures/flags.

    Beta(alpha, beta) prior with Bernoulli flags is conjugate, so the
    mean is (alpha + flags) / (alpha + beta + exposures).
    """
    return (crowd.alpha + counts.n_flags) / (
        crowd.alpha + crowd.beta + counts.n_exposures
    )


def _misinfo_coefficient(crowd: CrowdParams, flag_prob: float) -> float:
    return crowd.p_m_f0 + (crowd.p_m_f1 - crowd.p_m_f0) * flag_prob


def misinfo_posterior_rate(
    crowd: CrowdParams, counts: StoryCounts, lambda_e: float
) -> float:
    """Posterior estimate of the misinformation rate for one story.

    Scales the exposure intensity by the expected probability that an
    exposure spreads misinformation, with the flag probability
    integrated out under its Beta posterior.
    """
    if lambda_e < 0:
        raise ValueError(f"lambda_e must be >= 0, got {lambda_e}")
    return _misinfo_coefficient(crowd, posterior_flag_mean(crowd, counts)) * lambda_e


def misinfo_true_rate(f_s: float, crowd: CrowdParams, lambda_e: float) -> float:
    """Misinformation rate when the story's flag probability f_s is known."""
    if not (0.0 <= f_s <= 1.0):
        raise ValueError(f"f_s must be a probability, got {f_s}")
    return _misinfo_coefficient(crowd, f_s) * lambda_e


def flag_to_misinfo_probs(
    p_f1_m1: float, p_f1_m0: float, p_d: float
) -> tuple[float, float]:
    """Invert flag likelihoods into flag-conditional misinformation probabilities.

    Given the probability of a flag on a fake story (p_f1_m1), on a
    genuine story (p_f1_m0), and the prior fake-story fraction p_d,
    returns (p_m_f1, p_m_f0) by Bayes' rule.
    """
    for name, p in (("p_f1_m1", p_f1_m1), ("p_f1_m0", p_f1_m0), ("p_d", p_d)):
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"{name} must be a probability, got {p}")
    if p_f1_m1 < p_f1_m0:
        raise ValueError("flags must be at least as likely on fake stories")
    den1 = p_f1_m1 * p_d + p_f1_m0 * (1.0 - p_d)
    den0 = (1.0 - p_f1_m1) * p_d + (1.0 - p_f1_m0) * (1.0 - p_d)
    if den1 == 0.0 or den0 == 0.0:
        raise ValueError("degenerate likelihoods: conditioning event has probability 0")
    p_m_f1 = p_f1_m1 * p_d / den1
    p_m_f0 = (1.0 - p_f1_m1) * p_d / den0
    return p_m_f1, p_m_f0


def prior_from_marginal(
    p_f1_m1: float, p_f1_m0: float, p_d: float, strength: float = 1.0
) -> tuple[float, float]:
    """Beta prior whose mean is the marginal flag rate, at a given strength.

    The marginal flag rate is p_f1_m1*p_d + p_f1_m0*(1-p_d); strength is
    the total pseudo-count alpha + beta.
    """
    if strength <= 0:
        raise ValueError(f"strength must be > 0, got {strength}")
    p_bar = p_f1_m1 * p_d + p_f1_m0 * (1.0 - p_d)
    return strength * p_bar, strength * (1.0 - p_bar)


def crowd_from_likelihoods(
    p_f1_m1: float, p_f1_m0: float, p_d: float, prior_strength: float = 1.0
) -> CrowdParams:
    """Build CrowdParams directly from flag likelihoods and the fake prior."""
    p_m_f1, p_m_f0 = flag_to_misinfo_probs(p_f1_m1, p_f1_m0, p_d)
    alpha, beta = prior_from_marginal(p_f1_m1, p_f1_m0, p_d, prior_strength)
    return CrowdParams(p_m_f1=p_m_f1, p_m_f0=p_m_f0, alpha=alpha, beta=beta)
