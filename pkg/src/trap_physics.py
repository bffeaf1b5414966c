"""
Gaussian-Beam Dipole Trap Physics
Potential, force and harmonic frequencies of an intensity-modulated optical dipole trap
"""

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy import constants as csts


RB87_MASS = 86.909180520 * csts.atomic_mass  # 1.44316e-25 kg


@dataclass(frozen=True)
class PhysConsts:
    """Physical constants used by the trap model"""
    atom_mass: float = RB87_MASS
    boltzmann_k: float = csts.Boltzmann
    gravity_g: float = 9.81  # only applied when the trap enables gravity

    def __post_init__(self):
        for name in ('atom_mass', 'boltzmann_k', 'gravity_g'):
            if not getattr(self, name) > 0:
                raise ValueError(f'{name} must be strictly positive')


@dataclass(frozen=True)
class BeamGeometry:
    """Focused Gaussian beam: waist and Rayleigh range (independent inputs)"""
    w0: float
    z_R: float

    def __post_init__(self):
        if not self.w0 > 0:
            raise ValueError('beam waist w0 must be > 0')
        if not self.z_R > 0:
            raise ValueError('Rayleigh range z_R must be > 0')


@dataclass(frozen=True)
class TrapSpec:
    """Static trap: depth U0 (J, positive) plus beam geometry"""
    depth_U0: float
    geometry: BeamGeometry
    gravity_enabled: bool = False
    consts: PhysConsts = field(default_factory=PhysConsts)

    def __post_init__(self):
        if not self.depth_U0 > 0:
            raise ValueError('trap depth U0 must be > 0')
        f_r, f_z = trap_frequencies(self)
        if not (np.isfinite(f_r) and np.isfinite(f_z) and f_r > 0 and f_z > 0):
            raise ValueError('derived trap frequencies must be finite and positive')

    @property
    def mass(self) -> float:
        return self.consts.atom_mass

    @property
    def depth_kelvin(self) -> float:
        return self.depth_U0 / self.consts.boltzmann_k


@dataclass(frozen=True)
class ModulationSpec:
    """Parametric drive U0(t) = U0 (1 + h sin(2 pi f t + phase0)) for t <= duration_T"""
    depth_h: float = 0.0
    freq_f: float = 0.0
    duration_T: float = 0.0
    phase0: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.depth_h < 1.0:
            if self.depth_h >= 1.0:
                raise ValueError('modulation depth must be < 1')
            raise ValueError('modulation depth must be >= 0')
        if not self.freq_f >= 0:
            raise ValueError('modulation frequency must be >= 0')
        if not self.duration_T >= 0:
            raise ValueError('modulation duration must be >= 0')


def modulated_depth(trap: TrapSpec, t: float, mod: ModulationSpec) -> float:
    """
    Instantaneous trap depth; the drive is off once t exceeds the modulation time

    Args:
        trap: Trap specification
        t: Time in seconds
        mod: Modulation specification

    Returns:
        Depth U0(t) in joules
    """
    if t > mod.duration_T or mod.depth_h == 0.0:
        return trap.depth_U0
    return trap.depth_U0 * (1.0 + mod.depth_h * np.sin(2.0 * np.pi * mod.freq_f * t + mod.phase0))


def beam_radius(geometry: BeamGeometry, z):
    """Beam radius w(z) = w0 sqrt(1 + (z/z_R)^2)"""
    return geometry.w0 * np.sqrt(1.0 + (np.asarray(z) / geometry.z_R) ** 2)


def potential(trap: TrapSpec, pos, t: float, mod: ModulationSpec):
    """
    Dipole potential of the modulated Gaussian beam

    U = -U0(t) (w0/w(z))^2 exp(-2 rho^2 / w(z)^2), plus m g x with gravity.
    Axis convention: x and y radial (x vertical), z along the beam.

    Args:
        trap: Trap specification
        pos: Position(s) in metres, shape (..., 3)
        t: Time in seconds
        mod: Modulation specification

    Returns:
        Potential energy in joules, shape pos.shape[:-1]
    """
    pos = np.asarray(pos, dtype=float)
    x, y, z = pos[..., 0], pos[..., 1], pos[..., 2]
    geo = trap.geometry
    w2 = geo.w0 ** 2 * (1.0 + (z / geo.z_R) ** 2)
    rho2 = x * x + y * y
    u = -modulated_depth(trap, t, mod) * (geo.w0 ** 2 / w2) * np.exp(-2.0 * rho2 / w2)
    if trap.gravity_enabled:
        u = u + trap.mass * trap.consts.gravity_g * x
    return u


def force(trap: TrapSpec, pos, t: float, mod: ModulationSpec):
    """
    Analytic force -grad U

    Args:
        trap: Trap specification
        pos: Position(s) in metres, shape (..., 3)
        t: Time in seconds
        mod: Modulation specification

    Returns:
        Force in newtons, same shape as pos
    """
    pos = np.asarray(pos, dtype=float)
    x, y, z = pos[..., 0], pos[..., 1], pos[..., 2]
    geo = trap.geometry
    w2 = geo.w0 ** 2 * (1.0 + (z / geo.z_R) ** 2)
    s = geo.w0 ** 2 / w2
    rho2 = x * x + y * y
    a_se = modulated_depth(trap, t, mod) * s * np.exp(-2.0 * rho2 / w2)

    radial = -4.0 * a_se / w2
    out = np.empty_like(pos)
    out[..., 0] = radial * x
    out[..., 1] = radial * y
    out[..., 2] = -a_se * s * (2.0 * z / geo.z_R ** 2) * (1.0 - 2.0 * rho2 / w2)
    if trap.gravity_enabled:
        out[..., 0] -= trap.mass * trap.consts.gravity_g
    return out


def trap_frequencies(trap: TrapSpec) -> Tuple[float, float]:
    """
    Harmonic frequencies from the quadratic expansion of the Gaussian potential

    Returns:
        (f_radial, f_axial) in Hz; their ratio is w0 / (sqrt(2) z_R)
    """
    m = trap.consts.atom_mass
    geo = trap.geometry
    omega_r = np.sqrt(4.0 * trap.depth_U0 / (m * geo.w0 ** 2))
    omega_z = np.sqrt(2.0 * trap.depth_U0 / (m * geo.z_R ** 2))
    return float(omega_r / (2.0 * np.pi)), float(omega_z / (2.0 * np.pi))


def u0_from_radial_frequency(f_radial: float, w0: float, mass: float = RB87_MASS) -> float:
    """Trap depth reproducing a measured radial frequency: U0 = m (2 pi f)^2 w0^2 / 4"""
    if not (f_radial > 0 and w0 > 0 and mass > 0):
        raise ValueError('radial frequency, waist and mass must all be positive')
    return mass * (2.0 * np.pi * f_radial) ** 2 * w0 ** 2 / 4.0


def total_energy(trap: TrapSpec, atom_pos, atom_vel, t: float, mod: ModulationSpec):
    """Kinetic plus potential energy; an atom is bound iff the result is negative (gravity off)"""
    vel = np.asarray(atom_vel, dtype=float)
    kinetic = 0.5 * trap.consts.atom_mass * np.sum(vel * vel, axis=-1)
    return kinetic + potential(trap, atom_pos, t, mod)


def parametric_resonances(trap: TrapSpec, n_max: int = 3, axis: str = 'radial') -> List[float]:
    """
    Parametric resonance frequencies 2 f / n of the harmonic trap

    Args:
        trap: Trap specification
        n_max: Highest resonance order
        axis: 'radial' or 'axial'

    Returns:
        Drive frequencies in Hz for n = 1..n_max
    """
    f_r, f_z = trap_frequencies(trap)
    if axis == 'radial':
        f0 = f_r
    elif axis == 'axial':
        f0 = f_z
    else:
        raise ValueError(f"axis must be 'radial' or 'axial', got {axis!r}")
    return [2.0 * f0 / n for n in range(1, n_max + 1)]


def anharmonic_shift_estimate(trap: TrapSpec, temperature: float) -> float:
    """
    Fractional red shift of the radial frequency for a thermal cloud

    The quartic term of the Gaussian, averaged over both radial degrees of
    freedom of a thermal distribution, gives -(5/8) kT/U0.
    """
    return -0.625 * trap.consts.boltzmann_k * temperature / trap.depth_U0


def harmonic_widths(trap: TrapSpec, temperature: float) -> Tuple[float, float, float]:
    """
    Thermal widths of a harmonic cloud

    Returns:
        (sigma_rho per radial axis, sigma_z, sigma_v per axis)
    """
    f_r, f_z = trap_frequencies(trap)
    sigma_v = np.sqrt(trap.consts.boltzmann_k * temperature / trap.consts.atom_mass)
    return (
        float(sigma_v / (2.0 * np.pi * f_r)),
        float(sigma_v / (2.0 * np.pi * f_z)),
        float(sigma_v)
    )


if __name__ == "__main__":
    # CO2-laser trap of the shipped configuration
    trap = TrapSpec(depth_U0=u0_from_radial_frequency(1250.0, 55e-6), geometry=BeamGeometry(w0=55e-6, z_R=750e-6))
    f_r, f_z = trap_frequencies(trap)

    print("=" * 80)
    print("Dipole Trap Physics - Test Run")
    print("=" * 80)
    print(f"\nDepth: {trap.depth_kelvin * 1e6:.1f} uK")
    print(f"Trap frequencies: {f_r:.1f} Hz radial, {f_z:.1f} Hz axial")
    print(f"Radial resonances: {', '.join(f'{f:.0f}' for f in parametric_resonances(trap))} Hz")
    print(f"Axial resonances: {', '.join(f'{f:.1f}' for f in parametric_resonances(trap, axis='axial'))} Hz")
    print(f"Red shift at 65 uK: {anharmonic_shift_estimate(trap, 65e-6) * 100:.1f} %")
