"""Population transfer in driven multilevel ladders with noisy control pulses.

The package models an (N+1)-level ladder driven by a multi-component pulse,
evaluates the weak-field transition amplitude by closed forms and nested
quadrature, averages yields over shot-to-shot amplitude/phase/frequency
noise (Monte Carlo and analytic), optimizes amplitudes against a
fluence-penalized objective, and cross-checks everything against an exact
Schroedinger propagator.
"""

__version__ = "0.1.0"

from .errors import (
    AccuracyWarning,
    ConfigError,
    DegenerateCumulantsError,
    EnsembleEvaluationError,
    IntegrationFailureError,
    QuadratureConvergenceError,
    ValidityWarning,
)
from .model import (
    ControlField,
    Detunings,
    GaussianEnvelope,
    LadderSystem,
    PulseComponent,
    RectangularEnvelope,
    detunings_for,
    field_spectrum,
    field_value,
    fluence,
    transition_frequencies,
)
from .noise import (
    ComponentNoise,
    EnsembleStats,
    Evaluator,
    FreqNoiseKernel,
    GaussianNoise,
    NoiseSpec,
    UniformNoise,
    amplitude_noise_average,
    ensemble_average,
    frequency_noise_average,
    frequency_noise_kernel,
    frequency_noise_scaled,
    pairwise_sum,
    rect_noise_limit,
    sample_field,
    sample_stream,
    strong_detuning_asymptote,
)
from .optimize import (
    JointOptimizationResult,
    ObjectiveSpec,
    ObservableModel,
    OptimizationResult,
    coupling_magnitude,
    objective,
    optimize_amplitudes,
    optimize_joint,
    verify_optimality_condition,
)
from .perturbation import (
    AmplitudeMethod,
    GaussianKernel,
    TransitionAmplitude,
    amplitude_resonant,
    amplitude_time_quadrature,
    closed_form_amplitude,
    gaussian_suppression_asymptote,
    scaled_amplitude_gaussian,
    scaled_amplitude_rect_distinct,
    scaled_amplitude_rect_equal,
    transition_yield,
)
from .tdse import (
    PropagationSpec,
    StateCoefficients,
    default_propagation_spec,
    population,
    propagate,
)

__all__ = [
    "AccuracyWarning",
    "AmplitudeMethod",
    "ComponentNoise",
    "ConfigError",
    "ControlField",
    "DegenerateCumulantsError",
    "Detunings",
    "EnsembleEvaluationError",
    "EnsembleStats",
    "Evaluator",
    "FreqNoiseKernel",
    "GaussianEnvelope",
    "GaussianKernel",
    "GaussianNoise",
    "IntegrationFailureError",
    "JointOptimizationResult",
    "LadderSystem",
    "NoiseSpec",
    "ObjectiveSpec",
    "ObservableModel",
    "OptimizationResult",
    "PropagationSpec",
    "PulseComponent",
    "QuadratureConvergenceError",
    "RectangularEnvelope",
    "StateCoefficients",
    "TransitionAmplitude",
    "UniformNoise",
    "ValidityWarning",
    "amplitude_noise_average",
    "amplitude_resonant",
    "amplitude_time_quadrature",
    "closed_form_amplitude",
    "coupling_magnitude",
    "default_propagation_spec",
    "detunings_for",
    "ensemble_average",
    "field_spectrum",
    "field_value",
    "fluence",
    "frequency_noise_average",
    "frequency_noise_kernel",
    "frequency_noise_scaled",
    "gaussian_suppression_asymptote",
    "objective",
    "optimize_amplitudes",
    "optimize_joint",
    "pairwise_sum",
    "population",
    "propagate",
    "rect_noise_limit",
    "sample_field",
    "sample_stream",
    "scaled_amplitude_gaussian",
    "scaled_amplitude_rect_distinct",
    "scaled_amplitude_rect_equal",
    "strong_detuning_asymptote",
    "transition_frequencies",
    "transition_yield",
    "verify_optimality_condition",
]
