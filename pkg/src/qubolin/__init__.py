"""Constrained binary optimization by multiplier iteration over linearized models."""

from .annealer import AnnealerError, AnnealerSampler, external_annealer_submit, mock_annealer
from .dual_ascent import SolveResult, SolverConfig, SolverError, iterations_to_target, line_search, solve, track_best
from .harness import ConfigError, RunSpec, compare_traffic, histogram, preset, run
from .model import (
    INFINITE,
    ConstrainedProblem,
    EffectiveModel,
    LinearConstraint,
    ModelError,
    MultiplierState,
    QuadraticObjective,
    build_effective,
    constraint_values,
    evaluate_penalty_form,
    residual,
    to_binary,
    to_spin,
)
from .samplers import (
    GibbsSampler,
    OneHotGibbsSampler,
    SampleBatch,
    SamplerConfig,
    SamplerError,
    estimate_expectations,
    exact_field_expectation,
    exact_field_minimize,
    geometric_schedule,
    gibbs_sample,
    onehot_gibbs_sample,
)

__version__ = "0.1.0"
