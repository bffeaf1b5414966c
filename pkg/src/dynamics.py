"""
Ensemble Dynamics
Velocity-Verlet propagation in the modulated trap, trap loss and diagnostics
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from .collisions import CollisionSpec, collision_step
from .errors import NonFiniteStateError
from .thermal_sampler import Ensemble
from .trap_physics import (
    ModulationSpec,
    TrapSpec,
    beam_radius,
    force,
    total_energy,
    trap_frequencies,
)

logger = logging.getLogger(__name__)

STEPS_PER_PERIOD = 64
MIN_STEPS_PER_PERIOD = 50


@dataclass(frozen=True)
class IntegrationSpec:
    """Integrator settings; dt=None selects default_time_step"""
    dt: Optional[float] = None
    loss_radius_factor: float = 4.0
    diag_interval: int = 200

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError('time step dt must be > 0')
        if not self.loss_radius_factor >= 2:
            raise ValueError('loss_radius_factor must be >= 2')
        if self.diag_interval < 1:
            raise ValueError('diag_interval must be >= 1')


@dataclass
class DiagnosticsSeries:
    """Ensemble observables sampled during evolve"""
    times: List[float] = field(default_factory=list)
    n_alive: List[int] = field(default_factory=list)
    mean_energy: List[float] = field(default_factory=list)
    temperature: List[float] = field(default_factory=list)

    def record(self, t: float, n_alive: int, mean_energy: float, temperature: float):
        self.times.append(t)
        self.n_alive.append(n_alive)
        self.mean_energy.append(mean_energy)
        self.temperature.append(temperature)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'time_s': self.times,
            'n_alive': self.n_alive,
            'mean_energy_J': self.mean_energy,
            'temperature_K': self.temperature
        })


def default_time_step(trap: TrapSpec, mod: ModulationSpec) -> float:
    """
    Step of about 1/(64 max(f_r, f)), adjusted so one drive period is a whole number of steps

    Args:
        trap: Trap specification
        mod: Modulation specification (f = 0 means undriven)

    Returns:
        Time step in seconds
    """
    f_r, _ = trap_frequencies(trap)
    if mod.freq_f <= 0:
        return 1.0 / (STEPS_PER_PERIOD * f_r)
    steps_per_drive_period = math.ceil(STEPS_PER_PERIOD * max(f_r, mod.freq_f) / mod.freq_f)
    return 1.0 / (mod.freq_f * steps_per_drive_period)


def max_time_step(trap: TrapSpec, mod: ModulationSpec) -> float:
    f_r, _ = trap_frequencies(trap)
    return 1.0 / (MIN_STEPS_PER_PERIOD * max(f_r, mod.freq_f))


def _check_finite(pos: np.ndarray, vel: np.ndarray, index: np.ndarray, t: float):
    bad = ~(np.isfinite(pos).all(axis=1) & np.isfinite(vel).all(axis=1))
    if bad.any():
        raise NonFiniteStateError(int(index[np.argmax(bad)]), t)


def _verlet(trap, mod, pos, vel, acc, t, dt, mass):
    """One velocity-Verlet step in place; returns the acceleration at t + dt"""
    vel += 0.5 * dt * acc
    pos += dt * vel
    acc_new = force(trap, pos, t + dt, mod) / mass
    vel += 0.5 * dt * acc_new
    return acc_new


def step(ens: Ensemble, trap: TrapSpec, mod: ModulationSpec, dt: float) -> Ensemble:
    """
    Advance the alive atoms by one velocity-Verlet step

    The force is evaluated at t for the first half kick and at t + dt for the
    second. Alive flags are untouched; see apply_loss.

    Raises:
        NonFiniteStateError: an alive atom reached a NaN or infinite coordinate
    """
    if not dt > 0:
        raise ValueError('time step dt must be > 0')
    out = ens.copy()
    idx = np.flatnonzero(out.alive)
    pos = out.positions[idx]
    vel = out.velocities[idx]
    acc = force(trap, pos, ens.time, mod) / ens.mass
    _verlet(trap, mod, pos, vel, acc, ens.time, dt, ens.mass)
    _check_finite(pos, vel, idx, ens.time + dt)
    out.positions[idx] = pos
    out.velocities[idx] = vel
    out.time = ens.time + dt
    return out


def _lost_mask(trap, mod, pos, vel, t, loss_radius_factor):
    z = pos[:, 2]
    rho = np.hypot(pos[:, 0], pos[:, 1])
    outside = (rho > loss_radius_factor * beam_radius(trap.geometry, z)) | \
        (np.abs(z) > loss_radius_factor * trap.geometry.z_R)
    lost = np.zeros(len(pos), dtype=bool)
    if outside.any():
        cand = np.flatnonzero(outside)
        lost[cand] = total_energy(trap, pos[cand], vel[cand], t, mod) > 0.0
    return lost


def apply_loss(ens: Ensemble, trap: TrapSpec, mod: ModulationSpec,
               loss_radius_factor: float = 4.0) -> Ensemble:
    """
    Mark atoms dead once they are both unbound and outside the trap region

    An atom is removed iff E > 0 and (rho > k w(z) or |z| > k z_R), with k the
    loss radius factor. Dead atoms never come back.
    """
    out = ens.copy()
    idx = np.flatnonzero(out.alive)
    lost = _lost_mask(trap, mod, out.positions[idx], out.velocities[idx], out.time, loss_radius_factor)
    out.alive[idx[lost]] = False
    return out


def _diagnostics_row(diag, trap, mod, pos, vel, t, mass):
    n = len(pos)
    if n == 0:
        diag.record(t, 0, float('nan'), float('nan'))
        return
    energy = total_energy(trap, pos, vel, t, mod)
    if n >= 2:
        mean_ke = 0.5 * mass * np.mean(np.sum(vel * vel, axis=1))
        temperature = 2.0 * mean_ke / (3.0 * trap.consts.boltzmann_k)
    else:
        temperature = float('nan')
    diag.record(t, n, float(np.mean(energy)), float(temperature))


def evolve(
    ens: Ensemble,
    trap: TrapSpec,
    mod: ModulationSpec,
    ispec: IntegrationSpec,
    cspec: Optional[CollisionSpec] = None
) -> Tuple[Ensemble, DiagnosticsSeries]:
    """
    Propagate the ensemble through the whole modulation window

    Each step runs velocity Verlet, then DSMC collisions when enabled, then the
    loss test. The last step is shortened so the run ends exactly at
    ens.time + mod.duration_T.

    Args:
        ens: Initial ensemble
        trap: Trap specification
        mod: Modulation specification
        ispec: Integration settings
        cspec: Optional collision settings

    Returns:
        (final ensemble, diagnostics recorded every diag_interval steps)
    """
    dt = ispec.dt if ispec.dt is not None else default_time_step(trap, mod)
    dt_max = max_time_step(trap, mod)
    if dt > dt_max * (1.0 + 1e-12):
        raise ValueError(f'time step {dt:.3g} s exceeds the stability bound {dt_max:.3g} s')

    t0 = ens.time
    t_end = t0 + mod.duration_T
    n_full = int(math.floor(mod.duration_T / dt + 1e-9))
    remainder = mod.duration_T - n_full * dt
    if remainder < 1e-9 * dt:
        remainder = 0.0
    n_steps = n_full + (1 if remainder > 0 else 0)
    collide_on = cspec is not None and cspec.enabled

    logger.debug('Evolving %d atoms for %.4g s: %d steps of %.4g s (collisions %s)',
                 ens.n_alive, mod.duration_T, n_steps, dt, 'on' if collide_on else 'off')

    out = ens.copy()
    idx = np.flatnonzero(out.alive)
    pos = out.positions[idx]
    vel = out.velocities[idx]
    mass = ens.mass

    diag = DiagnosticsSeries()
    _diagnostics_row(diag, trap, mod, pos, vel, t0, mass)

    t = t0
    acc = force(trap, pos, t, mod) / mass
    n_collisions = 0
    for k in range(n_steps):
        h = dt if k < n_full else remainder
        acc = _verlet(trap, mod, pos, vel, acc, t, h, mass)
        t = t_end if k == n_steps - 1 else t0 + (k + 1) * dt
        _check_finite(pos, vel, idx, t)

        if collide_on and len(pos) >= 2:
            n_collisions += collision_step(pos, vel, cspec, h, k)
            # velocities changed; positions and hence acc did not

        lost = _lost_mask(trap, mod, pos, vel, t, ispec.loss_radius_factor)
        if lost.any():
            keep = ~lost
            out.positions[idx[lost]] = pos[lost]
            out.velocities[idx[lost]] = vel[lost]
            out.alive[idx[lost]] = False
            idx, pos, vel, acc = idx[keep], pos[keep], vel[keep], acc[keep]

        if (k + 1) % ispec.diag_interval == 0 or k == n_steps - 1:
            _diagnostics_row(diag, trap, mod, pos, vel, t, mass)
            if collide_on:
                logger.debug('t = %.4g s: %d alive, %d collisions so far', t, len(pos), n_collisions)

    out.positions[idx] = pos
    out.velocities[idx] = vel
    out.time = t_end if n_steps else t0
    return out, diag
