"""
Parametric Resonance Simulator for Cold Atoms in a Modulated Dipole Trap

This package samples thermal 87Rb clouds in a Gaussian-beam optical dipole
trap, propagates them under an intensity-modulated potential with optional
DSMC collisions, images the expanded cloud and analyses survival spectra,
modulation-time sweeps and heating.
"""

__version__ = "1.0.0"
__author__ = "Horace Fonseca"

from .errors import (
    SimulationError,
    ConfigError,
    SamplingError,
    NonFiniteStateError,
    CollisionGridError,
    InsufficientAtomsError,
    ImagingError,
    AnalysisError,
    ResonanceNotBracketedError,
    NotSaturatedError,
    InsufficientDataError,
)
from .trap_physics import (
    PhysConsts,
    BeamGeometry,
    TrapSpec,
    ModulationSpec,
    potential,
    force,
    trap_frequencies,
    u0_from_radial_frequency,
    total_energy,
)
from .thermal_sampler import SampleSpec, Ensemble, sample_thermal, measure_temperature, peak_density
from .collisions import CollisionSpec, collide, collision_rate_estimate
from .dynamics import IntegrationSpec, DiagnosticsSeries, step, apply_loss, evolve
from .imaging import (
    ImageSpec,
    CloudImage,
    GaussFit,
    expand,
    render,
    fit_gaussian,
    peak_intensity,
    integrated_intensity,
    temperature_from_expansion,
)
from .experiments import (
    ExperimentConfig,
    SweepSpec,
    SweepResult,
    ResonanceEstimate,
    run_point,
    run_sweep,
    find_resonance,
    heating_rate,
    saturation_check,
)
from .config_io import RunConfig, RunManifest, parse_config, load_config, write_sweep_csv
from .cli import cli_main

__all__ = [
    'SimulationError',
    'ConfigError',
    'SamplingError',
    'NonFiniteStateError',
    'CollisionGridError',
    'InsufficientAtomsError',
    'ImagingError',
    'AnalysisError',
    'ResonanceNotBracketedError',
    'NotSaturatedError',
    'InsufficientDataError',
    'PhysConsts',
    'BeamGeometry',
    'TrapSpec',
    'ModulationSpec',
    'potential',
    'force',
    'trap_frequencies',
    'u0_from_radial_frequency',
    'total_energy',
    'SampleSpec',
    'Ensemble',
    'sample_thermal',
    'measure_temperature',
    'peak_density',
    'CollisionSpec',
    'collide',
    'collision_rate_estimate',
    'IntegrationSpec',
    'DiagnosticsSeries',
    'step',
    'apply_loss',
    'evolve',
    'ImageSpec',
    'CloudImage',
    'GaussFit',
    'expand',
    'render',
    'fit_gaussian',
    'peak_intensity',
    'integrated_intensity',
    'temperature_from_expansion',
    'ExperimentConfig',
    'SweepSpec',
    'SweepResult',
    'ResonanceEstimate',
    'run_point',
    'run_sweep',
    'find_resonance',
    'heating_rate',
    'saturation_check',
    'RunConfig',
    'RunManifest',
    'parse_config',
    'load_config',
    'write_sweep_csv',
    'cli_main',
]
