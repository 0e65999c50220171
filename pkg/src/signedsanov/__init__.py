"""Classical cancellation simulation of signed measures and its large deviations."""

__version__ = "0.1.0"

from .measures import (
    FrequencyDist,
    ProbDist,
    SignedMeasure,
    empirical_from_counts,
    kl_divergence,
    l1_distance,
    total_variation_weight,
)
from .scenario import (
    EmpiricalModel,
    MeasurementScenario,
    PhaseSpace,
    Realization,
    bell_fixture,
    canonical_phase_space,
    no_signaling_check,
    realization_residual,
    realize_minimal,
    states_consistent_with,
)
from .simulation import (
    DoubledSimulation,
    OutcomeMap,
    SignedChannel,
    build_channel,
    classical_pushforward,
    context_map,
    double,
    sample,
    signed_pushforward,
)
from .rates import (
    BallSpec,
    RateComparison,
    compare_rates,
    empirical_rate,
    exact_ball_probability,
    ising_baseline,
    mc_ball_probability,
    sanov_probability,
    small_deviation_form,
)
from .reversal import (
    NearUniformConfig,
    ReversalProblem,
    min_kl_given_pushforward,
    near_uniform_derivative,
    near_uniform_family,
    near_uniform_gap,
    sdpi_bound_check,
)
