"""curbsim: crowd-powered fact-checking simulation and scheduling.

Information cascades are marked temporal point processes with an
exponential self-excitation kernel; crowd flags feed a Beta-Bernoulli
posterior over each story's flag probability; the dispatch policy sends
stories for fact checking with an intensity proportional to the
posterior misinformation rate, sampled exactly event by event.
"""

__version__ = "0.1.0"

from .baselines import (
    SchedulePolicy,
    exposure_intensity,
    flag_ratio_intensity,
    flag_sum_decision,
    oracle_intensity,
)
from .crowd import (
    CrowdParams,
    StoryCounts,
    crowd_from_likelihoods,
    flag_to_misinfo_probs,
    misinfo_posterior_rate,
    misinfo_true_rate,
    posterior_flag_mean,
    prior_from_marginal,
)
from .dataio import (
    CascadeDataset,
    DataFormatError,
    ResultRow,
    ResultsTable,
    StoryRecord,
    export_dataset,
    export_results,
    ingest,
    preprocess,
    read_results,
)
from .evaluate import (
    EvalParams,
    PolicyCost,
    ReplayOutcome,
    SweepSpec,
    calibrate_budget,
    dispatch_hazard,
    misinfo_reduction,
    misinfo_reduction_macro,
    policy_cost,
    precision,
    replay_evaluate,
    sweep,
)
from .kernel import (
    EXPOSURE,
    POST,
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
from .scheduler import (
    ControlParams,
    FactCheckDecision,
    StoryState,
    cost_to_go,
    optimal_intensity,
    schedule_all,
    schedule_story,
)
from .seeding import derive_rng
from .simulate import (
    CascadeOverflowError,
    SimConfig,
    StoryConfig,
    generate_exposures,
    sample_flags,
    synthetic_dataset,
)
