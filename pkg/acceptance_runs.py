"""
Acceptance-scale runs
Full-size sweeps that check resonance position, red shift, decay shapes,
the peak-per-atom law, heating and saturation against their expected ranges.

    python acceptance_runs.py --out acceptance --workers 8
    python acceptance_runs.py --only harmonic warm

Each run takes minutes to hours; the quick suite lives in test_*.py.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Tuple

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from src.config_io import RunConfig, config_from_resolved, load_config, write_sweep_csv
from src.errors import SimulationError
from src.experiments import (
    SweepResult,
    decay_shapes,
    find_resonance,
    heating_rate,
    peak_depletion_exponent,
    run_sweep,
    saturation_check,
    summarize,
)
from src.trap_physics import trap_frequencies

logger = logging.getLogger(__name__)

BASE_CONFIG = Path(__file__).parent / 'config' / 'co2_trap_config.json'
Check = Tuple[str, bool, str]


def _config(workers: int, **overrides) -> RunConfig:
    """Shipped configuration with section__key overrides; None removes a key"""
    flat = load_config(BASE_CONFIG).resolved()
    flat['sweep.workers'] = workers
    for key, value in overrides.items():
        dotted = key.replace('__', '.')
        if value is None:
            flat.pop(dotted, None)
        else:
            flat[dotted] = value
    return config_from_resolved(flat, source='acceptance')


def _sweep(cfg: RunConfig, axis: str, out_dir: Path, name: str) -> SweepResult:
    result = run_sweep(cfg.sweep_spec(axis), checkpoint_path=out_dir / f'{name}.csv')
    write_sweep_csv(result, out_dir / f'{name}.csv')
    summarize(result).to_csv(out_dir / f'{name}_summary.csv', index=False, float_format='%.9g')
    return result


def harmonic(out_dir: Path, workers: int) -> List[Check]:
    """Cold start: the dip sits at 2 f_r"""
    cfg = _config(workers, sample__temperature=None, sample__temperature_fraction=0.02,
                  collisions__enabled=False, modulation__depth_h=0.1, modulation__duration_T=0.1,
                  sweep__frequencies={'start': 1800.0, 'stop': 3200.0, 'step': 50.0},
                  sweep__repetitions=1)
    f_r, _ = trap_frequencies(cfg.experiment.trap)
    result = _sweep(cfg, 'frequency', out_dir, 'harmonic_spectrum')
    est = find_resonance(result, 'peak')
    offset = abs(est.f_min - 2 * f_r) / (2 * f_r)
    return [('harmonic dip within 5% of 2 f_r', offset < 0.05, f'f_min = {est.f_min:.0f} Hz')]


def warm(out_dir: Path, workers: int) -> List[Check]:
    """Warm start: red shift of both dips and stronger depletion than loss"""
    cfg = _config(workers, modulation__depth_h=0.15, modulation__duration_T=0.2)
    f_r, _ = trap_frequencies(cfg.experiment.trap)
    result = _sweep(cfg, 'frequency', out_dir, 'warm_spectrum')
    peak = find_resonance(result, 'peak')
    total = find_resonance(result, 'total')
    shift = 2 * f_r - total.f_min

    summary = summarize(result)
    at = summary.iloc[int(np.argmin(np.abs(summary['value'] - peak.f_min)))]
    depletion = 1.0 - at['survival_peak_mean']
    loss = 1.0 - at['survival_total_mean']
    return [
        ('peak dip below 2 f_r', peak.f_min < 2 * f_r, f'f_min(peak) = {peak.f_min:.0f} Hz'),
        ('total dip at or below peak dip', total.f_min <= peak.f_min, f'f_min(total) = {total.f_min:.0f} Hz'),
        ('total dip shifted by 0.1-0.6 kHz', 100.0 <= shift <= 600.0, f'shift = {shift:.0f} Hz'),
        ('depletion contrast above loss contrast', depletion > loss,
         f'1 - peak = {depletion:.3f}, 1 - total = {loss:.3f}'),
    ]


def durations(out_dir: Path, workers: int) -> List[Check]:
    """Duration sweep at 2.5 kHz: decay shapes, peak-per-atom law and heating rate"""
    cfg = _config(workers, modulation__depth_h=0.15, imaging__focal_depth=20e-6)
    exp = cfg.experiment
    result = _sweep(cfg, 'duration', out_dir, 'timesweep')

    shapes = decay_shapes(result)
    slope, stderr = peak_depletion_exponent(result)
    rate = heating_rate(result, exp.imaging.expansion_time, exp.trap.mass, exp.trap)
    rate_uk = rate.rate * 1e6
    return [
        ('survival_peak exponential', shapes.peak_log_r2 >= 0.9 and shapes.peak_log_r2 > shapes.peak_linear_r2,
         f'R2 log {shapes.peak_log_r2:.3f}, linear {shapes.peak_linear_r2:.3f}'),
        ('survival_total linear after a plateau',
         shapes.total_threshold > 0 and shapes.total_post_threshold_r2 >= 0.9,
         f'threshold {shapes.total_threshold * 1e3:.0f} ms, R2 {shapes.total_post_threshold_r2:.3f}'),
        ('peak-per-atom exponent -1.5 +- 0.2', abs(slope + 1.5) <= 0.2, f'slope {slope:.2f} +- {stderr:.2f}'),
        ('heating rate 1e2-1e4 uK/s', 1e2 <= rate_uk <= 1e4, f'{rate_uk:.0f} uK/s over {rate.n_points} points'),
    ]


def saturation(out_dir: Path, workers: int) -> List[Check]:
    """Long duration sweep: temperature levels off between 0.2 and 0.5 U0"""
    cfg = _config(workers, modulation__depth_h=0.15,
                  sweep__durations=[0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0], sweep__repetitions=1)
    result = _sweep(cfg, 'duration', out_dir, 'saturation')
    ratio = saturation_check(result, cfg.experiment.trap)
    return [('saturation 0.2-0.5 U0', 0.2 <= ratio <= 0.5, f'k T_sat / U0 = {ratio:.3f}')]


RUNS: Dict[str, Callable[[Path, int], List[Check]]] = {
    'harmonic': harmonic,
    'warm': warm,
    'durations': durations,
    'saturation': saturation,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description='Acceptance-scale sweeps')
    parser.add_argument('--out', type=Path, default=Path('acceptance'))
    parser.add_argument('--workers', type=int, default=8)
    parser.add_argument('--only', nargs='+', choices=sorted(RUNS), default=list(RUNS))
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    args.out.mkdir(parents=True, exist_ok=True)

    print("\n" + "=" * 80)
    print("ACCEPTANCE RUNS")
    print("=" * 80)

    checks: List[Check] = []
    for name in args.only:
        logger.info('Running %s', name)
        try:
            checks.extend(RUNS[name](args.out, args.workers))
        except SimulationError as exc:
            checks.append((name, False, f'{type(exc).__name__}: {exc}'))

    for label, passed, detail in checks:
        print(f"[{'OK' if passed else 'FAIL'}] {label}: {detail}")
    failed = sum(not passed for _, passed, _ in checks)
    print("=" * 80)
    print("[SUCCESS] ALL CHECKS PASSED" if not failed else f"[FAIL] {failed} of {len(checks)} checks failed")
    print("=" * 80 + "\n")
    return 0 if not failed else 1


if __name__ == "__main__":
    sys.exit(main())
