"""
Parametric Resonance Experiments
Frequency, duration and depth sweeps with paired unmodulated references, plus
the analyses applied to their survival curves
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats
from tqdm import tqdm

from .collisions import CollisionSpec, macro_weight_for_density
from .dynamics import IntegrationSpec, evolve
from .errors import (
    ImagingError,
    InsufficientDataError,
    NotSaturatedError,
    ResonanceNotBracketedError,
    SimulationError,
)
from .imaging import (
    CloudImage,
    GaussFit,
    MIN_FRAME_RADII,
    ImageSpec,
    expand,
    fit_gaussian,
    frame_covers,
    integrated_intensity,
    peak_intensity,
    render,
    temperature_from_expansion,
    temperature_from_single_expansion,
)
from .thermal_sampler import Ensemble, SampleSpec, measure_temperature, sample_thermal
from .trap_physics import (
    ModulationSpec,
    TrapSpec,
    anharmonic_shift_estimate,
    trap_frequencies,
)

logger = logging.getLogger(__name__)

SWEEP_AXES = {'frequency': 'freq_f', 'duration': 'duration_T', 'depth': 'depth_h'}
CSV_COLUMNS = [
    'value', 'rep', 'seed', 'survival_total', 'survival_peak',
    'r_axial_m', 'r_radial_m', 'temperature_K', 'n_alive', 'converged'
]
SURVIVAL_EPSILON = 0.05
RESONANCE_WINDOW = 5


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to run one modulated shot"""
    trap: TrapSpec
    sample: SampleSpec
    integration: IntegrationSpec = field(default_factory=IntegrationSpec)
    collisions: CollisionSpec = field(default_factory=CollisionSpec)
    modulation: ModulationSpec = field(default_factory=ModulationSpec)
    imaging: ImageSpec = field(default_factory=ImageSpec)
    box_halfwidth_px: int = 2
    random_phase: bool = False

    def __post_init__(self):
        if self.box_halfwidth_px < 0:
            raise ValueError('box_halfwidth_px must be >= 0')


@dataclass(frozen=True)
class SweepSpec:
    """A one-dimensional scan of the modulation over frequency, duration or depth"""
    config: ExperimentConfig
    swept_axis: str
    values: Tuple[float, ...]
    repetitions: int = 3
    normalize: bool = True
    workers: int = 1
    master_seed: Optional[int] = None  # defaults to config.sample.seed

    def __post_init__(self):
        if self.swept_axis not in SWEEP_AXES:
            raise ValueError(f'swept_axis must be one of {sorted(SWEEP_AXES)}, got {self.swept_axis!r}')
        if len(self.values) == 0:
            raise ValueError('sweep values must be non-empty')
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError('sweep values must be strictly increasing')
        if self.repetitions < 1:
            raise ValueError('repetitions must be >= 1')
        if self.workers < 1:
            raise ValueError('workers must be >= 1')
        # every swept value must produce a valid ModulationSpec
        for value in self.values:
            modulation_at(self.config.modulation, self.swept_axis, value)

    def point_seeds(self) -> List[int]:
        """One seed per repetition, shared by every swept value"""
        master = self.master_seed if self.master_seed is not None else self.config.sample.seed
        children = np.random.SeedSequence(master).spawn(self.repetitions)
        return [int(child.generate_state(1)[0]) for child in children]


@dataclass
class SweepResult:
    """One row per (value, repetition); failures carry NaN observables"""
    rows: pd.DataFrame
    swept_axis: str
    seeds: List[int] = field(default_factory=list)
    failures: List[Dict[str, object]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return self.rows[CSV_COLUMNS]


@dataclass
class ResonanceEstimate:
    f_min: float
    depth_of_dip: float
    uncertainty: float
    method: str
    observable: str


@dataclass
class HeatingRateEstimate:
    rate: float  # K/s
    uncertainty: float
    intercept: float  # K
    n_points: int
    r_squared: float


@dataclass
class DecayShape:
    """Shape of survival curves against modulation time"""
    peak_log_r2: float
    peak_linear_r2: float
    peak_decay_time: float  # s, from the log-linear fit
    total_threshold: float  # s, last duration still on the plateau
    total_post_threshold_r2: float
    total_loss_slope: float  # 1/s


def modulation_at(mod: ModulationSpec, swept_axis: str, value: float) -> ModulationSpec:
    """Copy of mod with the swept parameter set to value"""
    return replace(mod, **{SWEEP_AXES[swept_axis]: float(value)})


def _prepare(config: ExperimentConfig, mod: ModulationSpec, seed: int):
    """Sample the initial cloud and resolve seed-dependent settings"""
    if config.random_phase:
        phase = np.random.default_rng([seed, 0xF0]).uniform(0.0, 2.0 * np.pi)
        mod = replace(mod, phase0=float(phase))
    ens0 = sample_thermal(config.trap, replace(config.sample, seed=seed))
    cspec = config.collisions
    if cspec.enabled:
        cspec = replace(cspec, seed=seed)
        if cspec.peak_density is not None:
            cspec = replace(cspec, macro_weight=macro_weight_for_density(ens0, config.trap, cspec.peak_density))
    return ens0, mod, cspec


def _shot(config: ExperimentConfig, ens0: Ensemble, mod: ModulationSpec,
          cspec: CollisionSpec) -> Tuple[Ensemble, CloudImage, GaussFit, float]:
    """Modulate, release, expand, image and fit"""
    final, _ = evolve(ens0, config.trap, mod, config.integration, cspec)
    img, total = _image(config, final)
    return final, img, fit_gaussian(img), total


def _image(config: ExperimentConfig, ens: Ensemble) -> Tuple[CloudImage, float]:
    """Image of the released cloud and its integrated column count"""
    spec = config.imaging
    released = expand(ens, spec.expansion_time, spec.gravity_enabled, spec.gravity_g)
    img = render(released, spec)
    if spec.focal_depth is None:
        return img, integrated_intensity(img)
    # survival_total always counts the full column
    column = render(released, replace(spec, focal_depth=None))
    return img, integrated_intensity(column)


def _check_frame(img: CloudImage, fit: GaussFit):
    """Reject a converged fit whose cloud is too wide for the frame to hold"""
    if fit.converged and not frame_covers(img, fit, MIN_FRAME_RADII):
        extent_z, extent_x = img.extent
        raise ImagingError(
            f'frame of {extent_z * 1e3:.2f} x {extent_x * 1e3:.2f} mm covers fewer than '
            f'{MIN_FRAME_RADII:g} fitted radii (r_axial {fit.radii[0] * 1e6:.0f} um, '
            f'r_radial {fit.radii[1] * 1e6:.0f} um); enlarge imaging.width/height or pixel_size'
        )


def run_point(
    config: ExperimentConfig,
    swept_axis: str,
    value: float,
    seed: int,
    normalize: bool = True,
    return_image: bool = False
) -> Union[Dict[str, object], Tuple[Dict[str, object], CloudImage]]:
    """
    Run one modulated shot and its unmodulated reference

    The reference is an h = 0 run from the same initial cloud and seed, with
    the same duration and time step; an h = 0 point is its own reference.
    Without normalization the total is divided by the initial atom number and
    the peak by the peak of the initial cloud imaged directly.

    Args:
        config: Experiment configuration
        swept_axis: 'frequency', 'duration' or 'depth'
        value: Value of the swept parameter (SI units)
        seed: Seed for sampling, collisions, phase and shot noise
        normalize: Pair with an unmodulated reference run
        return_image: Also return the modulated shot image

    Returns:
        Row dict with the CSV columns (rep filled in by the sweep)

    Raises:
        ImagingError: the frame spans fewer than 4 fitted radii, the peak box
            is clipped or the reference image is empty
    """
    mod = modulation_at(config.modulation, swept_axis, value)
    ens0, mod, cspec = _prepare(config, mod, seed)
    final, img, fit, total = _shot(config, ens0, mod, cspec)
    _check_frame(img, fit)
    peak = peak_intensity(img, fit, config.box_halfwidth_px)
    converged = fit.converged

    if not normalize:
        ref_img, _ = _image(config, ens0)
        ref_fit = fit_gaussian(ref_img)
        ref_total = float(ens0.n_initial)
        ref_peak = peak_intensity(ref_img, ref_fit, config.box_halfwidth_px)
        converged = converged and ref_fit.converged
    elif mod.depth_h == 0.0:
        ref_total, ref_peak = total, peak
    else:
        _, ref_img, ref_fit, ref_total = _shot(config, ens0, replace(mod, depth_h=0.0), cspec)
        ref_peak = peak_intensity(ref_img, ref_fit, config.box_halfwidth_px)
        converged = converged and ref_fit.converged

    if ref_total <= 0 or ref_peak <= 0:
        raise ImagingError('reference image is empty; cannot normalize survival')

    row = {
        'value': float(value),
        'rep': 0,
        'seed': int(seed),
        'survival_total': total / ref_total,
        'survival_peak': peak / ref_peak,
        'r_axial_m': fit.radii[0],
        'r_radial_m': fit.radii[1],
        'temperature_K': measure_temperature(final, config.trap.consts.boltzmann_k),
        'n_alive': final.n_alive,
        'converged': bool(converged)
    }
    for key in ('survival_total', 'survival_peak'):
        if row[key] > 1.0 + SURVIVAL_EPSILON:
            logger.warning('%s = %.3f exceeds 1 + %.2f at %s = %.6g (seed %d)',
                           key, row[key], SURVIVAL_EPSILON, swept_axis, value, seed)
    if return_image:
        return row, img
    return row


def _failed_row(value: float, rep: int, seed: int, error: str) -> Dict[str, object]:
    row = {key: float('nan') for key in CSV_COLUMNS}
    row.update(value=float(value), rep=rep, seed=int(seed), n_alive=-1, converged=False, error=error)
    return row


def _run_job(config: ExperimentConfig, swept_axis: str, value: float, rep: int,
             seed: int, normalize: bool) -> Dict[str, object]:
    try:
        row = run_point(config, swept_axis, value, seed, normalize)
    except (SimulationError, ValueError) as exc:
        return _failed_row(value, rep, seed, f'{type(exc).__name__}: {exc}')
    row['rep'] = rep
    row['error'] = ''
    return row


def _rows_frame(rows: List[Dict[str, object]]) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=CSV_COLUMNS + ['error'])
    frame['rep'] = frame['rep'].astype(int)
    frame['seed'] = frame['seed'].astype(np.int64)
    frame['n_alive'] = frame['n_alive'].astype(int)
    frame['converged'] = frame['converged'].astype(bool)
    return frame


def run_sweep(spec: SweepSpec, checkpoint_path: Optional[Union[str, Path]] = None,
              progress: bool = True) -> SweepResult:
    """
    Execute every (value, repetition) point, in parallel when workers > 1

    Rows come back ordered by value then repetition regardless of worker
    scheduling. A failing point becomes a row of NaN observables with
    converged=False; the sweep continues.

    Args:
        spec: Sweep specification
        checkpoint_path: CSV rewritten after every completed point
        progress: Show a progress bar

    Returns:
        SweepResult
    """
    seeds = spec.point_seeds()
    jobs = [(value, rep, seed) for value in spec.values for rep, seed in enumerate(seeds)]
    logger.info('Starting %s sweep: %d values x %d repetitions on %d worker(s)',
                spec.swept_axis, len(spec.values), spec.repetitions, spec.workers)

    runner = Parallel(n_jobs=spec.workers, return_as='generator')
    outputs = runner(
        delayed(_run_job)(spec.config, spec.swept_axis, value, rep, seed, spec.normalize)
        for value, rep, seed in jobs
    )

    rows = []
    failures = []
    for row in tqdm(outputs, total=len(jobs), desc=f'{spec.swept_axis} sweep', disable=not progress):
        rows.append(row)
        if row['error']:
            logger.warning('Point %s=%.6g rep %d failed: %s',
                           spec.swept_axis, row['value'], row['rep'], row['error'])
            failures.append({'value': row['value'], 'rep': row['rep'], 'seed': row['seed'],
                             'error': row['error']})
        else:
            logger.debug('Point %s=%.6g rep %d: survival_total=%.4f survival_peak=%.4f',
                         spec.swept_axis, row['value'], row['rep'],
                         row['survival_total'], row['survival_peak'])
        if checkpoint_path is not None:
            _rows_frame(rows)[CSV_COLUMNS].to_csv(checkpoint_path, index=False, float_format='%.9g')

    logger.info('Sweep finished: %d points, %d failed', len(rows), len(failures))
    return SweepResult(rows=_rows_frame(rows), swept_axis=spec.swept_axis, seeds=seeds, failures=failures)


def image_series(config: ExperimentConfig, durations: Sequence[float],
                 seed: int) -> List[Tuple[Dict[str, object], CloudImage]]:
    """Single shots at several modulation times, sharing one initial cloud seed"""
    shots = []
    for rep, duration in enumerate(durations):
        row, img = run_point(config, 'duration', duration, seed, return_image=True)
        row['rep'] = rep
        shots.append((row, img))
        logger.info('Imaged T = %.4g s: %d atoms, survival_peak=%.4f',
                    duration, row['n_alive'], row['survival_peak'])
    return shots


def summarize(result: SweepResult) -> pd.DataFrame:
    """Per-value mean and standard deviation across repetitions"""
    observables = ['survival_total', 'survival_peak', 'r_axial_m', 'r_radial_m', 'temperature_K', 'n_alive']
    rows = result.rows.copy()
    rows['n_alive'] = rows['n_alive'].where(rows['n_alive'] >= 0)
    grouped = rows.groupby('value', sort=True)
    summary = grouped[observables].agg(['mean', 'std'])
    summary.columns = [f'{name}_{stat}' for name, stat in summary.columns]
    summary['n_converged'] = grouped['converged'].sum().astype(int)
    summary['n_points'] = grouped.size()
    return summary.reset_index()


def _curve(result: SweepResult, column: str) -> Tuple[np.ndarray, np.ndarray]:
    summary = summarize(result)
    mean = summary[f'{column}_mean']
    ok = mean.notna()
    return summary['value'][ok].to_numpy(float), mean[ok].to_numpy(float)


def find_resonance(result: SweepResult, observable: str = 'peak') -> ResonanceEstimate:
    """
    Locate the survival minimum by a parabola through 5 points around the discrete minimum

    Args:
        result: Frequency sweep
        observable: 'peak' or 'total'

    Returns:
        ResonanceEstimate; uncertainty propagated from the fit covariance

    Raises:
        InsufficientDataError: fewer than 5 usable values
        ResonanceNotBracketedError: minimum at either end of the sweep
    """
    if observable not in ('peak', 'total'):
        raise ValueError(f"observable must be 'peak' or 'total', got {observable!r}")
    freqs, survival = _curve(result, f'survival_{observable}')
    if len(freqs) < RESONANCE_WINDOW:
        raise InsufficientDataError(f'need >= {RESONANCE_WINDOW} swept values, have {len(freqs)}')

    i_min = int(np.argmin(survival))
    if i_min == 0 or i_min == len(freqs) - 1:
        raise ResonanceNotBracketedError(
            f'resonance not bracketed: survival_{observable} is lowest at the sweep edge '
            f'{freqs[i_min]:.6g}'
        )

    lo = min(max(i_min - RESONANCE_WINDOW // 2, 0), len(freqs) - RESONANCE_WINDOW)
    x = freqs[lo:lo + RESONANCE_WINDOW]
    y = survival[lo:lo + RESONANCE_WINDOW]
    x_c = freqs[i_min]
    coeffs, cov = np.polyfit(x - x_c, y, 2, cov=True)
    a, b, c = coeffs

    if a > 0:
        offset = -b / (2.0 * a)
        if x[0] - x_c <= offset <= x[-1] - x_c:
            grad = np.array([b / (2.0 * a ** 2), -1.0 / (2.0 * a), 0.0])
            variance = float(grad @ cov @ grad)
            return ResonanceEstimate(
                f_min=float(x_c + offset),
                depth_of_dip=float(1.0 - (c - b * b / (4.0 * a))),
                uncertainty=float(np.sqrt(max(variance, 0.0))),
                method='parabolic-5pt',
                observable=observable
            )

    logger.warning('Parabolic fit unusable around %.6g; falling back to the discrete minimum', x_c)
    spacing = float(np.median(np.diff(freqs)))
    return ResonanceEstimate(
        f_min=float(x_c),
        depth_of_dip=float(1.0 - survival[i_min]),
        uncertainty=spacing,
        method='discrete-minimum',
        observable=observable
    )


def radii_to_temperatures(radii: np.ndarray, t_exp: float, mass: float,
                          trap: Optional[TrapSpec] = None) -> np.ndarray:
    """
    Temperatures from fitted radial 1/e radii after expansion t_exp

    With a trap the in-trap harmonic width is included; without one the
    cloud is treated as a point source at release.
    """
    sigmas = np.asarray(radii, dtype=float) / np.sqrt(2.0)
    if trap is not None:
        omega = 2.0 * np.pi * trap_frequencies(trap)[0]
        return np.array([temperature_from_single_expansion(s, t_exp, omega, mass, trap.consts.boltzmann_k)
                         for s in sigmas])
    return np.array([temperature_from_expansion(0.0, 0.0, s, t_exp, mass) for s in sigmas])


def heating_rate(duration_sweep: SweepResult, t_exp: float, mass: float,
                 trap: Optional[TrapSpec] = None) -> HeatingRateEstimate:
    """
    Linear heating rate dT/dT_mod from the expansion widths of a duration sweep

    The fit stops where the local slope first drops below 20% of the initial
    slope; a non-positive initial slope disables the cut.

    Raises:
        InsufficientDataError: fewer than 4 points before saturation
    """
    durations, radii = _curve(duration_sweep, 'r_radial_m')
    if len(durations) < 4:
        raise InsufficientDataError(f'heating rate needs >= 4 durations, have {len(durations)}')
    if np.any(np.diff(radii) < 0):
        logger.warning('Radial widths are not monotone in modulation time')

    temps = radii_to_temperatures(radii, t_exp, mass, trap)
    slopes = np.diff(temps) / np.diff(durations)
    n_use = len(durations)
    if slopes[0] > 0:
        below = np.flatnonzero(slopes < 0.2 * slopes[0])
        if below.size:
            n_use = int(below[0]) + 1
    if n_use < 4:
        raise InsufficientDataError(
            f'only {n_use} durations before saturation; need >= 4 for a heating rate'
        )

    fit = stats.linregress(durations[:n_use], temps[:n_use])
    return HeatingRateEstimate(
        rate=float(fit.slope),
        uncertainty=float(fit.stderr),
        intercept=float(fit.intercept),
        n_points=n_use,
        r_squared=float(fit.rvalue ** 2)
    )


def saturation_check(duration_sweep: SweepResult, trap: TrapSpec) -> float:
    """
    Saturated temperature as a fraction of the trap depth, k T_sat / U0

    Raises:
        NotSaturatedError: last three temperatures spread by 5% or more
    """
    _, temps = _curve(duration_sweep, 'temperature_K')
    if len(temps) < 3:
        raise InsufficientDataError(f'saturation check needs >= 3 durations, have {len(temps)}')
    tail = temps[-3:]
    mean = float(np.mean(tail))
    spread = (float(np.max(tail)) - float(np.min(tail))) / mean
    if spread >= 0.05:
        raise NotSaturatedError(f'not saturated: final temperatures vary by {100 * spread:.1f}%')
    return trap.consts.boltzmann_k * mean / trap.depth_U0


def _r_squared(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) < 3:
        return float('nan')
    return float(stats.linregress(x, y).rvalue ** 2)


def decay_shapes(result: SweepResult, plateau_tolerance: float = 0.02) -> DecayShape:
    """
    Compare exponential and linear descriptions of the duration-sweep curves

    survival_peak is scored by the R^2 of log(survival) and of survival against
    time. survival_total is taken as flat until it first falls below
    1 - plateau_tolerance; the linear R^2 is measured from the last flat point on.
    """
    durations, peak = _curve(result, 'survival_peak')
    _, total = _curve(result, 'survival_total')
    if len(durations) < 3:
        raise InsufficientDataError(f'decay shapes need >= 3 durations, have {len(durations)}')

    positive = peak > 0
    log_fit = stats.linregress(durations[positive], np.log(peak[positive]))
    decay_time = -1.0 / log_fit.slope if log_fit.slope < 0 else float('inf')

    dropped = np.flatnonzero(total < 1.0 - plateau_tolerance)
    if dropped.size:
        start = max(int(dropped[0]) - 1, 0)
        threshold = float(durations[start]) if dropped[0] > 0 else 0.0
    else:
        start, threshold = len(durations) - 1, float(durations[-1])
    post_x, post_y = durations[start:], total[start:]
    loss_slope = float(stats.linregress(post_x, post_y).slope) if len(post_x) >= 2 else float('nan')

    return DecayShape(
        peak_log_r2=float(log_fit.rvalue ** 2),
        peak_linear_r2=_r_squared(durations, peak),
        peak_decay_time=float(decay_time),
        total_threshold=threshold,
        total_post_threshold_r2=_r_squared(post_x, post_y),
        total_loss_slope=loss_slope
    )


def peak_depletion_exponent(result: SweepResult) -> Tuple[float, float]:
    """
    Exponent of the peak-per-atom signal against cloud temperature

    Regresses log(survival_peak / survival_total) on log T_c. Column images
    of a thermal cloud give -1; an in-focus slice (focal_depth well below the
    cloud size) gives -3/2.

    Returns:
        (slope, standard error)
    """
    summary = summarize(result)
    quotient = summary['survival_peak_mean'] / summary['survival_total_mean']
    temps = summary['temperature_K_mean']
    ok = (quotient > 0) & (temps > 0)
    if ok.sum() < 3:
        raise InsufficientDataError('peak depletion exponent needs >= 3 usable durations')
    fit = stats.linregress(np.log(temps[ok].to_numpy(float)), np.log(quotient[ok].to_numpy(float)))
    return float(fit.slope), float(fit.stderr)


def harmonic_predictions(trap: TrapSpec, temperature: Optional[float] = None) -> Dict[str, float]:
    """
    Harmonic resonance frequencies to report beside measured dips

    With a temperature the fundamental radial line is also given with the
    thermal anharmonic shift applied.
    """
    f_r, f_z = trap_frequencies(trap)
    predictions = {
        '2f_radial': 2.0 * f_r,
        'f_radial': f_r,
        '2f_axial': 2.0 * f_z,
        'f_axial': f_z
    }
    if temperature is not None:
        shift = anharmonic_shift_estimate(trap, temperature)
        predictions['2f_radial_thermal'] = 2.0 * f_r * (1.0 + shift)
    return predictions
