"""
DSMC Elastic Collisions
No-time-counter hard-sphere collisions between simulation particles on a cell grid
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import constants as csts

from .errors import CollisionGridError, InsufficientAtomsError
from .thermal_sampler import Ensemble, measure_temperature, peak_density
from .trap_physics import RB87_MASS, TrapSpec

logger = logging.getLogger(__name__)

RB87_SCATTERING_LENGTH = 5.29e-9  # m, triplet value


@dataclass(frozen=True)
class CollisionSpec:
    """
    DSMC settings

    Cells are cell_size wide along x and y and cell_size_axial (default
    cell_size) along z. When peak_density is set, callers derive macro_weight
    from it for each freshly sampled ensemble.
    """
    enabled: bool = False
    scattering_length: float = RB87_SCATTERING_LENGTH
    cell_size: float = 13.75e-6
    cell_size_axial: Optional[float] = None
    macro_weight: float = 1.0
    seed: int = 0
    peak_density: Optional[float] = None  # physical atoms / m^3
    grid_half_cells: int = 256

    def __post_init__(self):
        if not self.scattering_length > 0:
            raise ValueError('scattering_length must be > 0')
        if not self.cell_size > 0:
            raise ValueError('cell_size must be > 0')
        if self.cell_size_axial is not None and not self.cell_size_axial > 0:
            raise ValueError('cell_size_axial must be > 0')
        if not self.macro_weight >= 1:
            raise ValueError('macro_weight must be >= 1')
        if self.peak_density is not None and not self.peak_density > 0:
            raise ValueError('collision peak_density must be > 0')
        if self.grid_half_cells < 1:
            raise ValueError('grid_half_cells must be >= 1')

    @property
    def cell_shape(self) -> np.ndarray:
        axial = self.cell_size_axial if self.cell_size_axial is not None else self.cell_size
        return np.array([self.cell_size, self.cell_size, axial])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_shape))


def hard_sphere_cross_section(scattering_length: float) -> float:
    """Cross section 8 pi a^2 for identical bosons"""
    return 8.0 * np.pi * scattering_length ** 2


def mean_relative_speed(temperature: float, mass: float = RB87_MASS) -> float:
    """Thermal mean relative speed 4 sqrt(kT / (pi m))"""
    return 4.0 * np.sqrt(csts.Boltzmann * temperature / (np.pi * mass))


def collision_rate(density: float, temperature: float,
                   scattering_length: float = RB87_SCATTERING_LENGTH,
                   mass: float = RB87_MASS) -> float:
    """Elastic collision rate per atom n sigma <v_rel>"""
    return density * hard_sphere_cross_section(scattering_length) * mean_relative_speed(temperature, mass)


def collision_rate_estimate(ens: Ensemble, cspec: CollisionSpec, trap: TrapSpec) -> float:
    """
    Peak collision rate of the physical cloud the ensemble represents

    Args:
        ens: Ensemble with at least two alive atoms
        cspec: Collision settings (macro_weight scales the density)
        trap: Trap specification used for the harmonic density estimate

    Returns:
        Rate in 1/s
    """
    if ens.n_alive < 2:
        raise InsufficientAtomsError(f'collision rate needs >= 2 alive atoms, have {ens.n_alive}')
    density = peak_density(ens, trap) * cspec.macro_weight
    temperature = measure_temperature(ens, trap.consts.boltzmann_k)
    return collision_rate(density, temperature, cspec.scattering_length, ens.mass)


def macro_weight_for_density(ens: Ensemble, trap: TrapSpec, n_physical: float) -> float:
    """Atoms per simulation particle so the simulated peak density matches n_physical"""
    weight = n_physical / peak_density(ens, trap)
    if weight < 1.0:
        logger.warning('Simulated density already exceeds %.3g m^-3; using macro weight 1', n_physical)
        return 1.0
    return float(weight)


def _cell_ids(pos: np.ndarray, cell_shape: np.ndarray, half: int) -> Optional[np.ndarray]:
    ijk = np.floor(pos / cell_shape).astype(np.int64) + half
    if (ijk < 0).any() or (ijk >= 2 * half).any():
        return None
    side = 2 * half
    return (ijk[:, 0] * side + ijk[:, 1]) * side + ijk[:, 2]


def _random_unit_vectors(u: np.ndarray) -> np.ndarray:
    """Map uniform pairs (n, 2) to directions uniform on the sphere"""
    cos_t = 2.0 * u[:, 0] - 1.0
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    phi = 2.0 * np.pi * u[:, 1]
    return np.column_stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t])


def _scatter_pairs(vel: np.ndarray, a: np.ndarray, b: np.ndarray, directions: np.ndarray):
    """Isotropic elastic scattering in the centre-of-mass frame, in place"""
    v_cm = 0.5 * (vel[a] + vel[b])
    g = np.linalg.norm(vel[a] - vel[b], axis=1)
    half = 0.5 * g[:, None] * directions
    vel[a] = v_cm + half
    vel[b] = v_cm - half


def collision_step(pos: np.ndarray, vel: np.ndarray, cspec: CollisionSpec,
                   dt: float, step_index: int) -> int:
    """
    One no-time-counter DSMC step over all cells, updating vel in place

    Candidates per cell: 1/2 n (n-1) W sigma v_max dt / V, rounded
    stochastically, with v_max = 2 max |v - <v>_cell>| an upper bound on the
    pair speed. A candidate is accepted with probability |v_rel| / v_max.
    Pairs sharing an atom are handled in successive rounds so each pair sees
    the velocities left by the previous one. All draws for a step come from
    one generator seeded by (seed, step_index) and are consumed in cell order.
    Cells are never split across workers, so the outcome does not depend on
    how a sweep is scheduled.

    Returns:
        Number of accepted collisions

    Raises:
        CollisionGridError: atoms outside the grid even after doubling it
    """
    n_atoms = len(vel)
    if n_atoms < 2:
        return 0

    shape = cspec.cell_shape
    half = cspec.grid_half_cells
    ids = _cell_ids(pos, shape, half)
    if ids is None:
        half *= 2
        logger.warning('Cloud left the collision grid; enlarging to %d cells per axis', 2 * half)
        ids = _cell_ids(pos, shape, half)
        if ids is None:
            raise CollisionGridError(
                f'atoms outside the collision grid of {2 * half} cells per axis after enlarging'
            )

    rng = np.random.default_rng([cspec.seed, step_index])

    order = np.argsort(ids, kind='stable')
    _, starts, counts = np.unique(ids[order], return_index=True, return_counts=True)
    v_sorted = vel[order]
    cell_of = np.repeat(np.arange(len(counts)), counts)
    v_mean = np.add.reduceat(v_sorted, starts, axis=0) / counts[:, None]
    deviation = np.linalg.norm(v_sorted - v_mean[cell_of], axis=1)
    v_max = 2.0 * np.maximum.reduceat(deviation, starts)

    sigma = hard_sphere_cross_section(cspec.scattering_length)
    expected = 0.5 * counts * (counts - 1) * cspec.macro_weight * sigma * v_max * dt / cspec.cell_volume
    n_cand = np.floor(expected).astype(np.int64)
    n_cand += rng.random(len(counts)) < (expected - n_cand)
    n_cand[counts < 2] = 0
    total = int(n_cand.sum())
    if total == 0:
        return 0

    cell = np.repeat(np.arange(len(counts)), n_cand)
    n_in = counts[cell]
    first = rng.integers(0, n_in)
    second = rng.integers(0, n_in - 1)
    second += second >= first
    a = order[starts[cell] + first]
    b = order[starts[cell] + second]
    pair_vmax = v_max[cell]
    accept_u = rng.random(total)
    directions = _random_unit_vectors(rng.random((total, 2)))

    n_accepted = 0
    remaining = np.arange(total)
    first_use = np.empty(n_atoms, dtype=np.int64)
    while remaining.size:
        ra, rb = a[remaining], b[remaining]
        rank = np.arange(remaining.size)
        first_use[ra] = remaining.size
        first_use[rb] = remaining.size
        np.minimum.at(first_use, ra, rank)
        np.minimum.at(first_use, rb, rank)
        free = (first_use[ra] == rank) & (first_use[rb] == rank)

        batch = remaining[free]
        pa, pb = a[batch], b[batch]
        g = np.linalg.norm(vel[pa] - vel[pb], axis=1)
        hit = accept_u[batch] * pair_vmax[batch] < g
        if hit.any():
            _scatter_pairs(vel, pa[hit], pb[hit], directions[batch[hit]])
            n_accepted += int(np.count_nonzero(hit))
        remaining = remaining[~free]

    return n_accepted


def collide(ens: Ensemble, cspec: CollisionSpec, dt: float, step_index: int = 0) -> Ensemble:
    """
    Apply one DSMC collision step to the alive atoms

    Args:
        ens: Ensemble (unchanged when collisions are disabled)
        cspec: Collision settings
        dt: Dynamics time step in seconds
        step_index: Step counter feeding the random stream

    Returns:
        New ensemble with post-collision velocities
    """
    if not cspec.enabled:
        return ens
    out = ens.copy()
    idx = np.flatnonzero(out.alive)
    vel = out.velocities[idx]
    n = collision_step(out.positions[idx], vel, cspec, dt, step_index)
    out.velocities[idx] = vel
    logger.debug('Collision step %d: %d collisions among %d atoms', step_index, n, len(idx))
    return out
