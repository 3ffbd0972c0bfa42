"""Aggregate operational-loss modeling with a two-state Markovian
arrival process for the loss-occurrence times and a double-Pareto-
Lognormal law for the severities.

The package fits both components from data, evaluates counting,
overdispersion and persistence diagnostics in closed form, and
estimates the compound annual-loss distribution and its risk measures
by Monte Carlo.
"""

from .aggregate import (
    AggregateSample,
    CompoundMoments,
    FrequencyModel,
    RiskReport,
    compare_frequencies,
    compound_moments,
    convergence_study,
    risk_measures,
    simulate_aggregate,
)
from .counting import (
    CountingDist,
    CountMoments,
    count_covariance,
    count_distribution,
    count_mean,
    count_moments,
    count_variance,
    sample_canonical,
    simulate_interval_counts,
    vtm_ratio,
    vtm_sweep,
)
from .estimation import (
    EmpiricalSummary,
    FitOptions,
    FitResult,
    empirical_summary,
    fit_mle,
    moments_match,
)
from .map2 import (
    CanonicalForm,
    CanonicalMap2,
    Map2,
    PhaseType2,
    StationaryObjects,
    expand_canonical,
    expm2,
    lag1_correlation,
    log_likelihood,
    loss_rate,
    ph_cdf,
    ph_moments,
    ph_pdf,
    ph_quantile,
    phase_type,
    semi_markov_kernel,
    simulate_map2,
    stationary_objects,
    validate_map2,
)
from .persistence import (
    PersistenceReport,
    SpellDist,
    SpellKind,
    empirical_persistence,
    empirical_spells,
    percentile_threshold,
    spell_distribution,
    transition_probs,
)
from .reference import (
    ANNUAL_HORIZON,
    reference_map2,
    reference_poisson_rate,
    reference_severity,
    reference_trace,
)
from .severity import (
    DplnParams,
    dpln_cdf,
    dpln_fit_mle,
    dpln_loglik,
    dpln_logpdf,
    dpln_moment,
    dpln_pdf,
    dpln_quantile,
    dpln_sample,
)

__version__ = "0.1.0"
