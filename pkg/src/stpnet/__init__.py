"""Spiking network with short-term synaptic facilitation: exact
event-driven simulation, mean-field limit toolkit, and Monte Carlo
experiment harness."""

from .errors import ConfigError, NumericalError, StpnetError, StructureError
from .model import (
    Diagnostics,
    ModelParams,
    PointMass,
    Sampled,
    SigmoidRate,
    TableRate,
    UniformBand,
    make_sigmoid_rate,
    rate_eval,
    sample_init,
    validate_params,
)
from .particle import (
    GLOBAL,
    MONOTONE,
    Event,
    ObservableFunction,
    ParticleState,
    Trajectory,
    extinction_time,
    generator_apply,
    init_state,
    next_event,
    simulate,
    total_rate_bound,
)
from .limit import (
    BifurcationScan,
    Equilibrium,
    JumpProcessPath,
    LimitTrajectory,
    Nullclines,
    Region,
    attracting_equilibrium,
    bifurcation_scan,
    classify_region,
    drift,
    equilibria,
    hitting_time_t1,
    integrate_ode,
    nullclines,
    simulate_limit_process,
)
from .experiments import (
    ExperimentReport,
    PhasePortrait,
    convergence_study,
    deviation_study,
    extinction_study,
    memory_study,
    phase_portrait,
    wilson_interval,
)

__version__ = "0.1.0"

__all__ = [
    "BifurcationScan", "ConfigError", "Diagnostics", "Equilibrium", "Event",
    "ExperimentReport", "GLOBAL", "JumpProcessPath", "LimitTrajectory",
    "MONOTONE", "ModelParams", "Nullclines", "NumericalError",
    "ObservableFunction", "ParticleState", "PhasePortrait", "PointMass",
    "Region", "Sampled", "SigmoidRate", "StpnetError", "StructureError",
    "TableRate", "Trajectory", "UniformBand", "attracting_equilibrium",
    "bifurcation_scan", "classify_region", "convergence_study",
    "deviation_study", "drift", "equilibria", "extinction_study",
    "extinction_time", "generator_apply", "hitting_time_t1", "init_state",
    "integrate_ode", "make_sigmoid_rate", "memory_study", "next_event",
    "nullclines", "phase_portrait", "rate_eval", "sample_init", "simulate",
    "simulate_limit_process", "total_rate_bound", "validate_params",
    "wilson_interval",
]
