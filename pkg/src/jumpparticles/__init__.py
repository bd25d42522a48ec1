"""Interacting particle approximation of jump McKean-Vlasov equations."""

from .coefficients import CoefficientModel, MeasureSummary, ValidationReport, validate_hypotheses
from .engine import InitialLaw, ParticleSystemState, SimConfig, init_system, run_simulation, step_system
from .errors import (ConfigError, JumpParticlesError, ModelError, NonConvergentTailError, NumericalError,
                     QuadratureError, SamplerError)
from .estimators import (Box, DensityEstimate, EstimatorParams, kde_estimate, select_density_params,
                         select_tv_params, smoothed_expectation, v_n)
from .events import EventList, generate_step_events
from .levy import LevyMeasureModel, cbar_moment, epsilon_m, tail_quantities, tail_sigma, theta_lower_bound
from .metrics import ConvergenceReport, convergence_slope, validity_threshold, wasserstein1_empirical, weak_residual
from .models import build_coefficients, build_model

__all__ = [
    "Box", "CoefficientModel", "ConfigError", "ConvergenceReport", "DensityEstimate", "EstimatorParams",
    "EventList", "InitialLaw", "JumpParticlesError", "LevyMeasureModel", "MeasureSummary", "ModelError",
    "NonConvergentTailError", "NumericalError", "ParticleSystemState", "QuadratureError", "SamplerError",
    "SimConfig", "ValidationReport", "build_coefficients", "build_model", "cbar_moment", "convergence_slope",
    "epsilon_m", "generate_step_events", "init_system", "kde_estimate", "run_simulation",
    "select_density_params", "select_tv_params", "smoothed_expectation", "step_system", "tail_quantities",
    "tail_sigma", "theta_lower_bound", "v_n", "validate_hypotheses", "validity_threshold",
    "wasserstein1_empirical", "weak_residual",
]
