"""
Tests for DSMC elastic collisions
Conservation, isotropy, relaxation, rate formulas and equilibrium preservation
"""

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, str(Path(__file__).parent))

from src.collisions import (
    CollisionSpec,
    collide,
    collision_rate,
    collision_rate_estimate,
    collision_step,
    hard_sphere_cross_section,
    macro_weight_for_density,
)
from src.dynamics import IntegrationSpec, default_time_step, evolve
from src.errors import CollisionGridError
from src.thermal_sampler import Ensemble, SampleSpec, measure_temperature, peak_density, sample_thermal
from src.trap_physics import (
    RB87_MASS,
    BeamGeometry,
    ModulationSpec,
    TrapSpec,
    u0_from_radial_frequency,
)

TRAP = TrapSpec(depth_U0=u0_from_radial_frequency(1250.0, 55e-6), geometry=BeamGeometry(w0=55e-6, z_R=750e-6))
SIGMA = hard_sphere_cross_section(5.29e-9)


def weight_for_candidates(expected: float, n_in_cell: int, v_max: float, dt: float, cspec: CollisionSpec) -> float:
    """Macro weight giving `expected` candidate pairs per cell and step"""
    pairs = 0.5 * n_in_cell * (n_in_cell - 1)
    return expected * cspec.cell_volume / (pairs * SIGMA * v_max * dt)


def test_head_on_pair():
    v = 0.01
    dt = 1e-5
    base = CollisionSpec(enabled=True, seed=4)
    cspec = replace(base, macro_weight=weight_for_candidates(4.0, 2, 2 * v, dt, base))
    pos = np.full((2, 3), 1e-6)
    vel = np.array([[v, 0.0, 0.0], [-v, 0.0, 0.0]])
    n = collision_step(pos, vel, cspec, dt, step_index=0)

    assert n >= 3
    assert np.allclose(vel.sum(axis=0), 0.0, atol=1e-12 * v)
    assert np.linalg.norm(vel, axis=1) == pytest.approx([v, v], rel=1e-12)
    assert not np.allclose(vel[0], [v, 0.0, 0.0])
    print(f"[OK] Head-on pair: {n} collisions, momentum and energy conserved")


def test_conservation_in_dense_cell():
    rng = np.random.default_rng(1)
    n_atoms = 500
    dt = 1e-5
    pos = rng.uniform(0.0, 1e-5, (n_atoms, 3))
    vel = rng.normal(0.0, 0.02, (n_atoms, 3)) + np.array([0.005, -0.002, 0.01])
    base = CollisionSpec(enabled=True, cell_size=1e-5, seed=9)
    cspec = replace(base, macro_weight=weight_for_candidates(400.0, n_atoms, 0.2, dt, base))

    p0 = vel.sum(axis=0)
    e0 = np.sum(vel * vel)
    total = 0
    for k in range(5):
        total += collision_step(pos, vel, cspec, dt, step_index=k)
    assert total > 100
    assert np.allclose(vel.sum(axis=0), p0, rtol=0.0, atol=1e-12 * np.abs(vel).sum())
    assert np.sum(vel * vel) == pytest.approx(e0, rel=1e-12)
    print(f"[OK] {total} collisions conserve total momentum and energy")


def test_scattering_isotropy():
    v = 0.01
    dt = 1e-5
    cell = 1e-5
    grid = np.stack(np.meshgrid(np.arange(20), np.arange(20), np.arange(25), indexing='ij'), -1).reshape(-1, 3)
    centres = (grid + 0.5) * cell
    pos = np.repeat(centres, 2, axis=0)
    vel = np.tile(np.array([[v, 0.0, 0.0], [-v, 0.0, 0.0]]), (len(centres), 1))

    base = CollisionSpec(enabled=True, cell_size=cell, grid_half_cells=64, seed=21)
    cspec = replace(base, macro_weight=weight_for_candidates(3.5, 2, 2 * v, dt, base))
    n = collision_step(pos, vel, cspec, dt, step_index=0)
    assert n >= 3 * len(centres)

    first = vel[0::2] / v
    assert np.allclose(np.linalg.norm(first, axis=1), 1.0, rtol=1e-12)
    cos_theta = first[:, 0]
    phi = np.arctan2(first[:, 2], first[:, 1])
    counts_cos, _ = np.histogram(cos_theta, bins=10, range=(-1.0, 1.0))
    counts_phi, _ = np.histogram(phi, bins=10, range=(-np.pi, np.pi))
    p_cos = stats.chisquare(counts_cos).pvalue
    p_phi = stats.chisquare(counts_phi).pvalue
    assert p_cos > 0.01 and p_phi > 0.01
    print(f"[OK] Scattering directions uniform (p = {p_cos:.3f}, {p_phi:.3f}) over {len(centres)} pairs")


def test_bimodal_relaxes_to_maxwellian():
    rng = np.random.default_rng(5)
    n_atoms = 20_000
    half = n_atoms // 2
    vel = np.vstack([rng.normal(0.0, 0.01, (half, 3)), rng.normal(0.0, 0.02, (half, 3))])
    vel -= vel.mean(axis=0)
    pos = rng.uniform(0.0, 1e-4, (n_atoms, 3))
    e0 = np.sum(vel * vel)
    kurt0 = stats.kurtosis(vel, axis=0, fisher=False)

    cspec = CollisionSpec(enabled=True, cell_size=1e-4, macro_weight=1000.0, seed=2)
    total = 0
    for k in range(30):
        total += collision_step(pos, vel, cspec, 1e-3, step_index=k)

    per_atom = 2.0 * total / n_atoms
    kurt = stats.kurtosis(vel, axis=0, fisher=False)
    assert per_atom >= 5.0
    assert np.all(kurt0 > 3.5)
    assert np.all((kurt > 2.85) & (kurt < 3.15))
    assert np.sum(vel * vel) == pytest.approx(e0, rel=1e-10)
    print(f"[OK] Kurtosis {kurt0.mean():.2f} -> {kurt.mean():.3f} after {per_atom:.1f} collisions per atom")


def test_disabled_is_identity():
    ens = Ensemble(
        positions=np.zeros((3, 3)), velocities=np.ones((3, 3)), alive=np.ones(3, dtype=bool),
        time=0.0, seed=0, n_initial=3, mass=RB87_MASS
    )
    assert collide(ens, CollisionSpec(enabled=False), 1e-5) is ens
    print("[OK] Disabled collisions leave the ensemble untouched")


def test_collide_skips_dead_atoms():
    v = 0.01
    base = CollisionSpec(enabled=True, seed=3)
    cspec = replace(base, macro_weight=weight_for_candidates(4.0, 2, 2 * v, 1e-5, base))
    ens = Ensemble(
        positions=np.full((3, 3), 1e-6),
        velocities=np.array([[v, 0.0, 0.0], [-v, 0.0, 0.0], [0.0, 0.0, 5 * v]]),
        alive=np.array([True, True, False]),
        time=0.0, seed=0, n_initial=3, mass=RB87_MASS
    )
    out = collide(ens, cspec, 1e-5)
    assert np.array_equal(out.velocities[2], ens.velocities[2])
    assert not np.array_equal(out.velocities[:2], ens.velocities[:2])
    assert np.array_equal(ens.velocities[0], [v, 0.0, 0.0])
    print("[OK] Only alive atoms collide; the input ensemble is not modified")


def test_collision_rate_formula():
    rate = collision_rate(6e19, 65e-6)
    assert 5e3 <= rate <= 1e4
    assert collision_rate(1.2e20, 65e-6) == pytest.approx(2.0 * rate, rel=1e-12)
    assert collision_rate(6e19, 65e-6, scattering_length=2 * 5.29e-9) == pytest.approx(4.0 * rate, rel=1e-12)
    print(f"[OK] Peak collision rate {rate:.0f} /s at 6e13 cm^-3 and 65 uK")


def test_rate_estimate_and_macro_weight():
    ens = sample_thermal(TRAP, SampleSpec(n_atoms=1000, temperature=65e-6, seed=8, walkers=50))
    n_sim = peak_density(ens, TRAP)
    weight = macro_weight_for_density(ens, TRAP, 6e19)
    assert weight * n_sim == pytest.approx(6e19, rel=1e-12)

    cspec = CollisionSpec(enabled=True, macro_weight=weight)
    expected = collision_rate(6e19, measure_temperature(ens), cspec.scattering_length, ens.mass)
    assert collision_rate_estimate(ens, cspec, TRAP) == pytest.approx(expected, rel=1e-9)
    assert macro_weight_for_density(ens, TRAP, 0.5 * n_sim) == 1.0
    print(f"[OK] Macro weight {weight:.1f} reproduces the physical peak density")


def test_grid_overflow_raises():
    pos = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    vel = np.array([[0.01, 0.0, 0.0], [-0.01, 0.0, 0.0]])
    with pytest.raises(CollisionGridError):
        collision_step(pos, vel, CollisionSpec(enabled=True, cell_size=1e-5), 1e-5, 0)

    # a cloud just beyond the nominal grid is handled by enlarging it once
    far = np.array([[300 * 1e-5, 0.0, 0.0], [300 * 1e-5, 0.0, 0.0]])
    collision_step(far, vel.copy(), CollisionSpec(enabled=True, cell_size=1e-5), 1e-5, 0)
    print("[OK] Atoms far outside the grid raise CollisionGridError")


def test_deterministic_stream():
    rng = np.random.default_rng(0)
    pos = rng.uniform(0.0, 1e-5, (200, 3))
    vel = rng.normal(0.0, 0.02, (200, 3))
    base = CollisionSpec(enabled=True, cell_size=1e-5, seed=77)
    cspec = replace(base, macro_weight=weight_for_candidates(50.0, 200, 0.2, 1e-5, base))

    a, b, c = vel.copy(), vel.copy(), vel.copy()
    collision_step(pos, a, cspec, 1e-5, step_index=3)
    collision_step(pos, b, cspec, 1e-5, step_index=3)
    collision_step(pos, c, cspec, 1e-5, step_index=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    print("[OK] Collisions are reproducible from (seed, step)")


def test_spec_validation():
    with pytest.raises(ValueError):
        CollisionSpec(scattering_length=0.0)
    with pytest.raises(ValueError):
        CollisionSpec(cell_size=-1e-6)
    with pytest.raises(ValueError):
        CollisionSpec(macro_weight=0.5)
    assert CollisionSpec(cell_size=2e-6, cell_size_axial=8e-6).cell_volume == pytest.approx(32e-18)
    print("[OK] Invalid collision settings rejected")


def test_equilibrium_preserved():
    temperature = 0.05 * TRAP.depth_kelvin
    ens = sample_thermal(TRAP, SampleSpec(n_atoms=2000, temperature=temperature, seed=12, walkers=50))
    cspec = CollisionSpec(enabled=True, cell_size=13.75e-6, cell_size_axial=75e-6, seed=12)
    cspec = replace(cspec, macro_weight=macro_weight_for_density(ens, TRAP, 6e19))

    mod = ModulationSpec(duration_T=4000 * default_time_step(TRAP, ModulationSpec()))
    ispec = IntegrationSpec(diag_interval=50)
    with_coll, diag_on = evolve(ens, TRAP, mod, ispec, cspec)
    without, diag_off = evolve(ens, TRAP, mod, ispec)

    t_on = np.mean(diag_on.temperature)
    t_off = np.mean(diag_off.temperature)
    assert t_on == pytest.approx(t_off, rel=0.02)
    assert t_on == pytest.approx(temperature, rel=0.05)
    assert diag_on.mean_energy[-1] == pytest.approx(diag_on.mean_energy[0], rel=1e-3)
    assert without.n_alive == 2000 and with_coll.n_alive >= 1990
    assert not np.array_equal(with_coll.velocities, without.velocities)
    print(f"[OK] Time-averaged temperature {t_on * 1e6:.2f} uK with collisions, {t_off * 1e6:.2f} uK without")


TESTS = [
    test_head_on_pair,
    test_conservation_in_dense_cell,
    test_scattering_isotropy,
    test_bimodal_relaxes_to_maxwellian,
    test_disabled_is_identity,
    test_collide_skips_dead_atoms,
    test_collision_rate_formula,
    test_rate_estimate_and_macro_weight,
    test_grid_overflow_raises,
    test_deterministic_stream,
    test_spec_validation,
    test_equilibrium_preserved,
]


def main():
    """Run all tests"""
    print("\n" + "=" * 80)
    print("COLLISION TESTS")
    print("=" * 80)

    failed = []
    for test in TESTS:
        try:
            test()
        except Exception as e:
            print(f"[FAIL] {test.__name__}: {e}")
            failed.append(test.__name__)

    print("\n" + "=" * 80)
    print("[SUCCESS] ALL TESTS PASSED" if not failed else f"[FAIL] {len(failed)} of {len(TESTS)} tests failed")
    print("=" * 80 + "\n")
    return not failed


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
