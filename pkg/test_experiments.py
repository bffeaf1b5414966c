"""
Tests for single shots, sweeps and the survival-curve analyses
"""

import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from scipy import constants as csts

sys.path.insert(0, str(Path(__file__).parent))

from src.collisions import CollisionSpec
from src.errors import ImagingError, InsufficientDataError, NotSaturatedError, ResonanceNotBracketedError
from src.experiments import (
    CSV_COLUMNS,
    ExperimentConfig,
    SweepResult,
    SweepSpec,
    decay_shapes,
    find_resonance,
    harmonic_predictions,
    heating_rate,
    image_series,
    peak_depletion_exponent,
    run_point,
    run_sweep,
    saturation_check,
    summarize,
)
from src.imaging import ImageSpec
from src.thermal_sampler import SampleSpec
from src.trap_physics import RB87_MASS, BeamGeometry, ModulationSpec, TrapSpec, u0_from_radial_frequency

TRAP = TrapSpec(depth_U0=u0_from_radial_frequency(1250.0, 55e-6), geometry=BeamGeometry(w0=55e-6, z_R=750e-6))
T_EXP = 3e-3


def small_config(**modulation) -> ExperimentConfig:
    """2000 atoms at 0.02 U0, 5.12 mm square frame of 20 um pixels, no collisions"""
    return ExperimentConfig(
        trap=TRAP,
        sample=SampleSpec(n_atoms=2000, temperature=0.02 * TRAP.depth_kelvin, seed=3,
                          burn_in=2000, thinning=5, walkers=50),
        modulation=ModulationSpec(**modulation),
        imaging=ImageSpec(pixel_size=20e-6, width=256, height=256, expansion_time=T_EXP),
    )


def synthetic_sweep(axis: str, values, **columns) -> SweepResult:
    data = {
        'value': list(values), 'rep': 0, 'seed': 1, 'survival_total': 1.0, 'survival_peak': 1.0,
        'r_axial_m': 1e-4, 'r_radial_m': 1e-4, 'temperature_K': 1e-5, 'n_alive': 1000,
        'converged': True, 'error': ''
    }
    data.update({key: np.asarray(value, dtype=float) for key, value in columns.items()})
    return SweepResult(rows=pd.DataFrame(data), swept_axis=axis)


def test_unmodulated_point_is_its_own_reference():
    config = small_config(depth_h=0.1, freq_f=750.0, duration_T=2e-3)
    row = run_point(config, 'depth', 0.0, seed=5)
    assert list(row) == CSV_COLUMNS
    assert row['survival_total'] == 1.0
    assert row['survival_peak'] == 1.0
    assert row['n_alive'] == 2000
    assert row['converged']
    assert row['temperature_K'] == pytest.approx(0.02 * TRAP.depth_kelvin, rel=0.1)

    again = run_point(config, 'depth', 0.0, seed=5)
    assert again == row
    print(f"[OK] h = 0 survival is exactly 1, r_radial = {row['r_radial_m'] * 1e6:.1f} um")


def test_off_resonance_leaves_cloud_alone():
    config = small_config(depth_h=0.02, freq_f=750.0, duration_T=2e-3)
    row = run_point(config, 'frequency', 750.0, seed=6)
    assert abs(row['survival_total'] - 1.0) < 0.02
    assert abs(row['survival_peak'] - 1.0) < 0.25

    raw, img = run_point(config, 'frequency', 750.0, seed=6, normalize=False, return_image=True)
    assert abs(raw['survival_total'] - 1.0) < 0.02
    assert abs(raw['survival_peak'] - 1.0) < 0.25
    assert img.shape == (256, 256)
    print(f"[OK] Off resonance: survival_peak {row['survival_peak']:.3f} (paired), "
          f"{raw['survival_peak']:.3f} (unpaired)")


def test_resonant_drive_depletes_peak():
    config = small_config(depth_h=0.2, freq_f=2470.0, duration_T=20e-3)
    reference = run_point(config, 'depth', 0.0, seed=7)
    driven = run_point(config, 'depth', 0.2, seed=7)
    assert driven['survival_peak'] < 0.8
    assert driven['r_radial_m'] > 1.2 * reference['r_radial_m']
    assert driven['temperature_K'] > reference['temperature_K']
    print(f"[OK] Resonant drive: survival_peak {driven['survival_peak']:.3f}, "
          f"radial radius x{driven['r_radial_m'] / reference['r_radial_m']:.2f}")


def test_heated_bound_cloud_stays_in_frame():
    # 3.25 radial periods at 2 f_r: the amplified quadrature is in the velocities at release
    config = small_config(depth_h=0.2, freq_f=2500.0, duration_T=2.6e-3)
    row = run_point(config, 'depth', 0.2, seed=11)
    assert row['converged']
    assert row['temperature_K'] > 1.5 * 0.02 * TRAP.depth_kelvin
    assert 4.0 * row['r_radial_m'] <= 256 * 20e-6
    assert row['survival_total'] == pytest.approx(row['n_alive'] / 2000, abs=0.005)
    print(f"[OK] Heated to {row['temperature_K'] * 1e6:.1f} uK, survival_total {row['survival_total']:.3f} "
          f"for {row['n_alive']} of 2000 atoms alive")


def test_frame_narrower_than_four_radii_rejected():
    config = replace(small_config(depth_h=0.0, freq_f=2500.0, duration_T=1e-3),
                     imaging=ImageSpec(pixel_size=20e-6, width=256, height=20, expansion_time=T_EXP))
    with pytest.raises(ImagingError, match='fitted radii'):
        run_point(config, 'depth', 0.0, seed=12)

    result = run_sweep(SweepSpec(config=config, swept_axis='depth', values=(0.0,), repetitions=1), progress=False)
    assert len(result.failures) == 1
    assert 'fitted radii' in result.failures[0]['error']
    assert result.to_frame()['survival_total'].isna().all()
    print("[OK] 0.4 mm tall frame rejected for a cloud of 1/e radius ~130 um")


def test_depth_sweep_heats_monotonically():
    config = small_config(depth_h=0.1, freq_f=2500.0, duration_T=2.6e-3)
    spec = SweepSpec(config=config, swept_axis='depth', values=(0.0, 0.05, 0.1, 0.15, 0.2),
                     repetitions=2, workers=1)
    result = run_sweep(spec, progress=False)
    assert not result.failures

    summary = summarize(result)
    temps = summary['temperature_K_mean'].to_numpy()
    spread = summary['temperature_K_std'].to_numpy()
    tolerance = np.maximum(spread[:-1], spread[1:])
    assert np.all(np.diff(temps) >= -tolerance)
    assert temps[-1] > 2.0 * temps[0]
    print("[OK] Temperature rises with drive depth: "
          + ", ".join(f"{t * 1e6:.1f}" for t in temps) + " uK")


def test_collisional_shot():
    config = replace(
        small_config(depth_h=0.1, freq_f=2470.0, duration_T=2e-3),
        collisions=CollisionSpec(enabled=True, cell_size=13.75e-6, cell_size_axial=75e-6, peak_density=6e19)
    )
    row = run_point(config, 'depth', 0.0, seed=8)
    assert row['survival_total'] == 1.0
    assert row['n_alive'] >= 1990
    assert row['temperature_K'] == pytest.approx(0.02 * TRAP.depth_kelvin, rel=0.1)
    print(f"[OK] Collisional shot keeps {row['n_alive']} atoms")


def test_collisional_sweep_independent_of_workers():
    config = replace(
        small_config(depth_h=0.1, freq_f=2470.0, duration_T=1e-3),
        collisions=CollisionSpec(enabled=True, cell_size=13.75e-6, cell_size_axial=75e-6, peak_density=6e19)
    )
    spec = SweepSpec(config=config, swept_axis='frequency', values=(2450.0, 2500.0), repetitions=1)
    serial = run_sweep(spec, progress=False).to_frame()
    parallel = run_sweep(replace(spec, workers=2), progress=False).to_frame()
    pd.testing.assert_frame_equal(serial, parallel)
    print("[OK] Collisional sweep identical with 1 and 2 workers")


def test_run_sweep_ordering_and_checkpoint():
    config = small_config(depth_h=0.02, freq_f=750.0, duration_T=1e-3)
    spec = SweepSpec(config=config, swept_axis='frequency', values=(700.0, 750.0), repetitions=2, workers=1)
    with tempfile.TemporaryDirectory() as tmp:
        checkpoint = Path(tmp) / 'checkpoint.csv'
        result = run_sweep(spec, checkpoint_path=checkpoint, progress=False)
        header = checkpoint.read_text().splitlines()[0]

    frame = result.to_frame()
    assert list(frame.columns) == CSV_COLUMNS
    assert header == ','.join(CSV_COLUMNS)
    assert list(frame['value']) == [700.0, 700.0, 750.0, 750.0]
    assert list(frame['rep']) == [0, 1, 0, 1]
    assert result.seeds == spec.point_seeds()
    assert list(frame['seed'][:2]) == list(frame['seed'][2:]) == result.seeds
    assert result.seeds[0] != result.seeds[1]
    assert not result.failures

    summary = summarize(result)
    assert list(summary['value']) == [700.0, 750.0]
    assert list(summary['n_points']) == [2, 2]
    print("[OK] Sweep rows ordered by value then repetition, seeds shared across values")


def test_failed_point_becomes_nan_row():
    config = replace(small_config(depth_h=0.02, freq_f=750.0, duration_T=1e-3),
                     imaging=ImageSpec(pixel_size=20e-6, width=3, height=3))
    spec = SweepSpec(config=config, swept_axis='frequency', values=(750.0,), repetitions=2)
    result = run_sweep(spec, progress=False)
    frame = result.to_frame()
    assert len(frame) == 2
    assert frame['survival_peak'].isna().all()
    assert list(frame['n_alive']) == [-1, -1]
    assert not frame['converged'].any()
    assert len(result.failures) == 2
    assert 'ImagingError' in result.failures[0]['error']
    print("[OK] Imaging failure recorded, sweep continues")


def test_sweep_spec_validation():
    config = small_config(depth_h=0.1, freq_f=2500.0, duration_T=1e-3)
    with pytest.raises(ValueError):
        SweepSpec(config=config, swept_axis='phase', values=(1.0,))
    with pytest.raises(ValueError):
        SweepSpec(config=config, swept_axis='frequency', values=(2000.0, 1900.0))
    with pytest.raises(ValueError):
        SweepSpec(config=config, swept_axis='frequency', values=())
    with pytest.raises(ValueError):
        SweepSpec(config=config, swept_axis='depth', values=(0.5, 1.0))
    with pytest.raises(ValueError):
        SweepSpec(config=config, swept_axis='duration', values=(1e-3,), repetitions=0)
    print("[OK] Invalid sweeps rejected")


def test_image_series():
    config = small_config(depth_h=0.1, freq_f=2470.0, duration_T=0.0)
    shots = image_series(config, [0.0, 2e-3], seed=9)
    assert len(shots) == 2
    first, img = shots[0]
    assert first['survival_total'] == 1.0 and first['survival_peak'] == 1.0
    assert img.shape == (256, 256)
    assert [row['rep'] for row, _ in shots] == [0, 1]
    assert [row['value'] for row, _ in shots] == [0.0, 2e-3]
    print("[OK] Image series shares one initial cloud")


def test_find_resonance():
    freqs = np.arange(1600.0, 3001.0, 50.0)
    dip = np.exp(-(freqs - 2450.0) ** 2 / (2 * 150.0 ** 2))
    sweep = synthetic_sweep('frequency', freqs, survival_peak=1.0 - 0.5 * dip, survival_total=1.0 - 0.2 * dip)

    peak = find_resonance(sweep, 'peak')
    assert peak.method == 'parabolic-5pt'
    assert peak.f_min == pytest.approx(2450.0, abs=1.0)
    assert peak.depth_of_dip == pytest.approx(0.5, abs=0.05)
    total = find_resonance(sweep, 'total')
    assert total.f_min == pytest.approx(2450.0, abs=1.0)
    assert total.depth_of_dip == pytest.approx(0.2, abs=0.02)

    edge = synthetic_sweep('frequency', freqs, survival_peak=0.5 + freqs / 6000.0)
    with pytest.raises(ResonanceNotBracketedError):
        find_resonance(edge, 'peak')
    short = synthetic_sweep('frequency', freqs[:4], survival_peak=[0.9, 0.5, 0.6, 0.9])
    with pytest.raises(InsufficientDataError):
        find_resonance(short, 'peak')
    with pytest.raises(ValueError):
        find_resonance(sweep, 'radius')
    print(f"[OK] Resonance at {peak.f_min:.2f} +- {peak.uncertainty:.2f} Hz, dip {peak.depth_of_dip:.3f}")


def test_heating_rate():
    durations = 0.01 * np.arange(1, 11)
    temps = 20e-6 + 8e-4 * np.minimum(durations, 0.06)
    k_b = csts.Boltzmann

    # point-source widths
    radii = np.sqrt(2.0 * k_b * temps * T_EXP ** 2 / RB87_MASS)
    estimate = heating_rate(synthetic_sweep('duration', durations, r_radial_m=radii), T_EXP, RB87_MASS)
    assert estimate.n_points == 6
    assert estimate.rate == pytest.approx(8e-4, rel=1e-6)
    assert estimate.intercept == pytest.approx(20e-6, rel=1e-6)
    assert estimate.r_squared == pytest.approx(1.0)

    # widths including the in-trap size
    omega = 2 * np.pi * 1250.0
    radii = np.sqrt(2.0 * k_b * temps / RB87_MASS * (1.0 / omega ** 2 + T_EXP ** 2))
    estimate = heating_rate(synthetic_sweep('duration', durations, r_radial_m=radii), T_EXP, RB87_MASS, TRAP)
    assert estimate.rate == pytest.approx(8e-4, rel=1e-6)

    flat = synthetic_sweep('duration', durations, r_radial_m=np.full(10, 3.4e-4))
    assert abs(heating_rate(flat, T_EXP, RB87_MASS).rate) < 1e-9

    with pytest.raises(InsufficientDataError):
        heating_rate(synthetic_sweep('duration', durations[:3], r_radial_m=radii[:3]), T_EXP, RB87_MASS)
    print("[OK] Heating rate 800 uK/s recovered from the linear part")


def test_saturation_check():
    durations = [0.05, 0.1, 0.2, 0.3]
    u_over_k = TRAP.depth_kelvin
    settled = synthetic_sweep('duration', durations,
                              temperature_K=u_over_k * np.array([0.2, 0.35, 0.351, 0.349]))
    assert saturation_check(settled, TRAP) == pytest.approx(0.35, rel=1e-9)

    rising = synthetic_sweep('duration', durations, temperature_K=u_over_k * np.array([0.1, 0.2, 0.25, 0.3]))
    with pytest.raises(NotSaturatedError):
        saturation_check(rising, TRAP)
    print("[OK] Saturated temperature 0.35 U0")


def test_decay_shapes():
    durations = np.array([0.01, 0.02, 0.03, 0.04, 0.05, 0.07, 0.09, 0.11, 0.13, 0.15])
    peak = np.exp(-durations / 0.08)
    total = np.where(durations <= 0.05, 1.0, 1.0 - 2.0 * (durations - 0.05))
    shapes = decay_shapes(synthetic_sweep('duration', durations, survival_peak=peak, survival_total=total))

    assert shapes.peak_log_r2 == pytest.approx(1.0)
    assert shapes.peak_linear_r2 < shapes.peak_log_r2
    assert shapes.peak_decay_time == pytest.approx(0.08, rel=1e-9)
    assert shapes.total_threshold == pytest.approx(0.05)
    assert shapes.total_loss_slope == pytest.approx(-2.0, rel=1e-9)
    assert shapes.total_post_threshold_r2 == pytest.approx(1.0)
    print("[OK] Peak decays exponentially, total linearly after a 50 ms plateau")


def test_peak_depletion_exponent():
    temps = np.array([10e-6, 20e-6, 40e-6, 80e-6])
    total = np.array([1.0, 0.9, 0.8, 0.7])
    peak = total * (temps / temps[0]) ** -1.5
    sweep = synthetic_sweep('duration', [0.01, 0.05, 0.1, 0.2], temperature_K=temps,
                            survival_total=total, survival_peak=peak)
    slope, stderr = peak_depletion_exponent(sweep)
    assert slope == pytest.approx(-1.5, rel=1e-9)
    assert stderr < 1e-9
    print("[OK] Peak-per-atom exponent -3/2")


def test_harmonic_predictions():
    plain = harmonic_predictions(TRAP)
    assert plain['2f_radial'] == pytest.approx(2500.0)
    assert plain['f_axial'] == pytest.approx(64.8, abs=0.05)
    assert '2f_radial_thermal' not in plain

    thermal = harmonic_predictions(TRAP, 0.1 * TRAP.depth_kelvin)
    assert thermal['2f_radial_thermal'] == pytest.approx(2500.0 * (1.0 - 0.0625))
    print("[OK] Harmonic predictions with thermal shift")


TESTS = [
    test_unmodulated_point_is_its_own_reference,
    test_off_resonance_leaves_cloud_alone,
    test_resonant_drive_depletes_peak,
    test_heated_bound_cloud_stays_in_frame,
    test_frame_narrower_than_four_radii_rejected,
    test_depth_sweep_heats_monotonically,
    test_collisional_shot,
    test_collisional_sweep_independent_of_workers,
    test_run_sweep_ordering_and_checkpoint,
    test_failed_point_becomes_nan_row,
    test_sweep_spec_validation,
    test_image_series,
    test_find_resonance,
    test_heating_rate,
    test_saturation_check,
    test_decay_shapes,
    test_peak_depletion_exponent,
    test_harmonic_predictions,
]


def main():
    """Run all tests"""
    print("\n" + "=" * 80)
    print("EXPERIMENT TESTS")
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
