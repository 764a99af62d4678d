"""Planar muscle-actuated soft arm: Cosserat statics and dynamics plus
static activation design by forward-backward sweeps."""

from .dynamics import (
    DynamicState,
    SimulationUnstable,
    TrajectoryLog,
    bent_initial_state,
    simulate,
    step,
    stretched_initial_state,
)
from .equilibrium import (
    EquilibriumError,
    EquilibriumSolution,
    sensitivity_field,
    solve_field,
    solve_pointwise,
)
from .muscles import (
    ActivationSet,
    ForceLengthModel,
    MuscleSet,
    MuscleSpec,
    default_muscle_specs,
)
from .rod import (
    Configuration,
    InvalidConfigurationError,
    RodModel,
    StrainField,
    compute_strains,
    elastic_energy,
    make_grid,
    taper_radius,
)
from .scenarios import ConfigError, ScenarioConfig, SolverFailure, load_config
from .shaping import Circle, OptimizationReport, TaskSpec, solve_task

__all__ = [
    "ActivationSet",
    "Circle",
    "ConfigError",
    "Configuration",
    "DynamicState",
    "EquilibriumError",
    "EquilibriumSolution",
    "ForceLengthModel",
    "InvalidConfigurationError",
    "MuscleSet",
    "MuscleSpec",
    "OptimizationReport",
    "RodModel",
    "ScenarioConfig",
    "SimulationUnstable",
    "SolverFailure",
    "StrainField",
    "TaskSpec",
    "TrajectoryLog",
    "bent_initial_state",
    "compute_strains",
    "default_muscle_specs",
    "elastic_energy",
    "load_config",
    "make_grid",
    "sensitivity_field",
    "simulate",
    "solve_field",
    "solve_pointwise",
    "solve_task",
    "step",
    "stretched_initial_state",
    "taper_radius",
]

__version__ = "0.1.0"
