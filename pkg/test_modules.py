"""
Test script to verify all modules work together
Run this before launching long sweeps
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from src.config_io import config_from_resolved, load_config
from src.dynamics import evolve
from src.experiments import run_point, run_sweep, summarize
from src.imaging import expand, fit_gaussian, peak_intensity, render
from src.thermal_sampler import measure_temperature, sample_thermal

CONFIG = Path(__file__).parent / 'config' / 'co2_trap_config.json'


def _smoke_config():
    """Shipped configuration cut down to milliseconds and two frequencies"""
    flat = load_config(CONFIG).resolved()
    flat.update({
        'modulation.duration_T': 2e-3,
        'sweep.frequencies': [2400.0, 2500.0],
        'sweep.repetitions': 1,
        'sweep.workers': 1,
    })
    return config_from_resolved(flat, source='smoke')


def stage_config():
    """Load the shortened shipped configuration"""
    print("\n" + "=" * 80)
    print("STAGE 1: Configuration")
    print("=" * 80)

    cfg = _smoke_config()
    exp = cfg.experiment
    print(f"[OK] Trap depth {exp.trap.depth_kelvin * 1e6:.1f} uK, cloud {exp.sample.temperature * 1e6:.1f} uK")
    print(f"[OK] Collisions {'on' if exp.collisions.enabled else 'off'}, "
          f"drive {exp.modulation.freq_f:.0f} Hz at h = {exp.modulation.depth_h}")
    return cfg


def stage_shot(cfg):
    """Sample, modulate, release and fit by hand"""
    print("\n" + "=" * 80)
    print("STAGE 2: Single shot")
    print("=" * 80)

    exp = cfg.experiment
    ens = sample_thermal(exp.trap, exp.sample)
    print(f"[OK] Sampled {ens.n_alive} atoms at {measure_temperature(ens) * 1e6:.1f} uK")

    final, diag = evolve(ens, exp.trap, exp.modulation, exp.integration)
    assert final.n_alive <= ens.n_alive
    assert np.isclose(final.time, exp.modulation.duration_T)
    print(f"[OK] Evolved {len(diag.times)} diagnostic samples, {final.n_alive} atoms left")

    img = render(expand(final, exp.imaging.expansion_time), exp.imaging)
    fit = fit_gaussian(img)
    peak = peak_intensity(img, fit, exp.box_halfwidth_px)
    assert fit.converged and peak > 0
    print(f"[OK] Fitted radii {fit.radii[0] * 1e6:.0f} x {fit.radii[1] * 1e6:.0f} um, peak {peak:.2f}")

    row = run_point(exp, 'frequency', exp.modulation.freq_f, cfg.seed)
    assert row['survival_peak'] > 0.0 and row['survival_total'] > 0.0
    print(f"[OK] Paired shot: survival_total {row['survival_total']:.3f}, survival_peak {row['survival_peak']:.3f}")
    return row


def stage_sweep(cfg):
    """Two-point spectrum through the sweep runner"""
    print("\n" + "=" * 80)
    print("STAGE 3: Sweep")
    print("=" * 80)

    result = run_sweep(cfg.sweep_spec('frequency'), progress=False)
    assert len(result.rows) == 2 and not result.failures
    summary = summarize(result)
    print(f"[OK] {len(result.rows)} points, {int(summary['n_converged'].sum())} converged fits")
    return result


def test_pipeline():
    cfg = stage_config()
    stage_shot(cfg)
    stage_sweep(cfg)


def main():
    """Run all stages"""
    print("\n" + "=" * 80)
    print("PARAMETRIC RESONANCE SIMULATOR - MODULE TESTS")
    print("=" * 80)

    try:
        test_pipeline()
        all_passed = True
    except Exception as e:
        print(f"[FAIL] Pipeline failed: {e}")
        import traceback
        traceback.print_exc()
        all_passed = False

    print("\n" + "=" * 80)
    print("TEST SUMMARY")
    print("=" * 80)
    if all_passed:
        print("[SUCCESS] ALL TESTS PASSED")
        print("\nNext steps:")
        print("1. Validate a configuration: python app.py validate --config config/co2_trap_config.json")
        print("2. Run a spectrum: python app.py spectrum --out results --workers 8")
    else:
        print("[FAIL] SOME TESTS FAILED")
    print("=" * 80 + "\n")
    return all_passed


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
