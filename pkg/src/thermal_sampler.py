"""
Thermal Ensemble Sampler
Draws bound atoms from the Boltzmann distribution of the full anharmonic trap
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import constants as csts

from .errors import InsufficientAtomsError, SamplingError
from .trap_physics import (
    ModulationSpec,
    TrapSpec,
    harmonic_widths,
    potential,
    trap_frequencies,
)

logger = logging.getLogger(__name__)

STATIC = ModulationSpec()
MIN_ACCEPTANCE = 0.05
MAX_ACCEPTANCE = 0.95


@dataclass(frozen=True)
class SampleSpec:
    """Parameters of the Metropolis sampler"""
    n_atoms: int
    temperature: float  # K
    seed: int = 0
    burn_in: int = 10_000
    thinning: int = 10
    proposal_scale_pos: Optional[float] = None  # default 0.3 sigma_rho
    proposal_scale_vel: Optional[float] = None  # default 0.3 sigma_v
    walkers: int = 1

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError('n_atoms must be >= 1')
        if not self.temperature > 0:
            raise ValueError('sample temperature must be > 0')
        if self.thinning < 1:
            raise ValueError('thinning must be >= 1')
        if self.burn_in < 0:
            raise ValueError('burn_in must be >= 0')
        if self.walkers < 1:
            raise ValueError('walkers must be >= 1')
        for name in ('proposal_scale_pos', 'proposal_scale_vel'):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f'{name} must be > 0')


@dataclass
class Ensemble:
    """Phase-space state of the simulated atoms"""
    positions: np.ndarray  # (N, 3) m
    velocities: np.ndarray  # (N, 3) m/s
    alive: np.ndarray  # (N,) bool
    time: float
    seed: int
    n_initial: int
    mass: float

    @property
    def n_alive(self) -> int:
        return int(np.count_nonzero(self.alive))

    def copy(self) -> 'Ensemble':
        return replace(
            self,
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            alive=self.alive.copy()
        )


def _proposal_scales(trap: TrapSpec, spec: SampleSpec):
    sigma_rho, _, sigma_v = harmonic_widths(trap, spec.temperature)
    step_pos = spec.proposal_scale_pos if spec.proposal_scale_pos is not None else 0.3 * sigma_rho
    step_vel = spec.proposal_scale_vel if spec.proposal_scale_vel is not None else 0.3 * sigma_v
    # the axial direction is much softer; scale its step with the frequency ratio
    f_r, f_z = trap_frequencies(trap)
    pos_scale = np.array([step_pos, step_pos, step_pos * f_r / f_z])
    vel_scale = np.full(3, step_vel)
    return pos_scale, vel_scale


def sample_thermal(trap: TrapSpec, spec: SampleSpec) -> Ensemble:
    """
    Metropolis random walk in 6D phase space with weight exp(-E/kT), E < 0 only

    Walkers start at rest at the trap centre, run `burn_in` steps, then emit
    one sample every `thinning` steps until n_atoms samples are collected.

    Args:
        trap: Trap specification (sampled with the static potential)
        spec: Sampler parameters

    Returns:
        Ensemble of bound atoms at time 0

    Raises:
        SamplingError: acceptance rate after burn-in outside [5%, 95%]
    """
    if spec.temperature >= trap.depth_kelvin:
        logger.warning(
            'Sample temperature %.3g K is not below the trap depth %.3g K; most states are unbound',
            spec.temperature, trap.depth_kelvin
        )

    rng = np.random.default_rng(spec.seed)
    mass = trap.consts.atom_mass
    kT = trap.consts.boltzmann_k * spec.temperature
    pos_scale, vel_scale = _proposal_scales(trap, spec)

    n_walkers = min(spec.walkers, spec.n_atoms)
    pos = np.zeros((n_walkers, 3))
    vel = np.zeros((n_walkers, 3))
    energy = 0.5 * mass * np.sum(vel * vel, axis=1) + potential(trap, pos, 0.0, STATIC)

    samples_per_walker = -(-spec.n_atoms // n_walkers)
    total_steps = spec.burn_in + samples_per_walker * spec.thinning

    out_pos = np.empty((samples_per_walker, n_walkers, 3))
    out_vel = np.empty((samples_per_walker, n_walkers, 3))
    accepted_after_burn_in = 0
    n_out = 0

    chunk = 4096
    for start in range(0, total_steps, chunk):
        n_chunk = min(chunk, total_steps - start)
        kicks = rng.standard_normal((n_chunk, n_walkers, 6))
        log_u = np.log(rng.random((n_chunk, n_walkers)))
        for k in range(n_chunk):
            step = start + k
            trial_pos = pos + kicks[k, :, :3] * pos_scale
            trial_vel = vel + kicks[k, :, 3:] * vel_scale
            trial_energy = (0.5 * mass * np.sum(trial_vel * trial_vel, axis=1)
                            + potential(trap, trial_pos, 0.0, STATIC))
            accept = (trial_energy < 0.0) & (log_u[k] < -(trial_energy - energy) / kT)
            pos[accept] = trial_pos[accept]
            vel[accept] = trial_vel[accept]
            energy[accept] = trial_energy[accept]

            if step >= spec.burn_in:
                accepted_after_burn_in += int(np.count_nonzero(accept))
                if (step - spec.burn_in + 1) % spec.thinning == 0:
                    out_pos[n_out] = pos
                    out_vel[n_out] = vel
                    n_out += 1

    n_trials = (total_steps - spec.burn_in) * n_walkers
    acceptance = accepted_after_burn_in / n_trials
    logger.debug('Metropolis acceptance %.3f over %d trials', acceptance, n_trials)
    if not MIN_ACCEPTANCE <= acceptance <= MAX_ACCEPTANCE:
        raise SamplingError(
            f'Metropolis acceptance {acceptance:.3f} outside '
            f'[{MIN_ACCEPTANCE}, {MAX_ACCEPTANCE}]; adjust the proposal scales'
        )

    positions = out_pos.reshape(-1, 3)[:spec.n_atoms].copy()
    velocities = out_vel.reshape(-1, 3)[:spec.n_atoms].copy()
    return Ensemble(
        positions=positions,
        velocities=velocities,
        alive=np.ones(spec.n_atoms, dtype=bool),
        time=0.0,
        seed=spec.seed,
        n_initial=spec.n_atoms,
        mass=mass
    )


def measure_temperature(ens: Ensemble, boltzmann_k: float = csts.Boltzmann) -> float:
    """
    Kinetic temperature of the alive atoms, k T = (2/3) <KE>

    Raises:
        InsufficientAtomsError: fewer than two alive atoms
    """
    if ens.n_alive < 2:
        raise InsufficientAtomsError(f'temperature needs >= 2 alive atoms, have {ens.n_alive}')
    vel = ens.velocities[ens.alive]
    mean_ke = 0.5 * ens.mass * np.mean(np.sum(vel * vel, axis=1))
    return float(2.0 * mean_ke / (3.0 * boltzmann_k))


def peak_density(ens: Ensemble, trap: TrapSpec) -> float:
    """
    Harmonic-approximation peak density n0 = N w_r^2 w_z (m / 2 pi k T)^(3/2)

    Uses the simulated alive count; multiply by the macro-particle weight for
    the physical density.
    """
    if ens.n_alive < 2:
        raise InsufficientAtomsError(f'peak density needs >= 2 alive atoms, have {ens.n_alive}')
    temperature = measure_temperature(ens, trap.consts.boltzmann_k)
    f_r, f_z = trap_frequencies(trap)
    omega_r = 2.0 * np.pi * f_r
    omega_z = 2.0 * np.pi * f_z
    thermal = ens.mass / (2.0 * np.pi * trap.consts.boltzmann_k * temperature)
    return float(ens.n_alive * omega_r ** 2 * omega_z * thermal ** 1.5)
