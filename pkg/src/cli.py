"""
Command-line interface for the parametric-resonance simulator

Subcommands: spectrum, timesweep, depthsweep, image, validate.
Exit status 0 on success, 1 for configuration or usage errors, 2 for runtime failures.
"""

import argparse
import logging
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import pandas as pd

from . import __version__
from .config_io import (
    RunConfig,
    RunManifest,
    load_config,
    validation_report,
    write_graymap,
    write_manifest,
    write_sweep_csv,
)
from .errors import AnalysisError, ConfigError, ImagingError, SimulationError
from .experiments import (
    CSV_COLUMNS,
    SweepResult,
    decay_shapes,
    find_resonance,
    harmonic_predictions,
    heating_rate,
    image_series,
    peak_depletion_exponent,
    run_sweep,
    saturation_check,
    summarize,
)

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / 'config' / 'co2_trap_config.json'
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    """Raised instead of argparse's own exit so the caller controls the exit code"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f'{self.prog}: error: {message}')


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=Path, default=DEFAULT_CONFIG,
                        help='JSON configuration or .manifest to replay')
    common.add_argument('--out', type=Path, default=None, help='output directory (default: output.dir)')
    common.add_argument('--seed', type=int, default=None, help='master seed (overrides sample.seed)')
    common.add_argument('--workers', type=int, default=None, help='parallel sweep workers')
    common.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    common.add_argument('-q', '--quiet', action='store_true', help='warnings and errors only')

    parser = _Parser(prog='parametric-trap',
                     description='Parametric excitation of cold atoms in a modulated dipole trap')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND', parser_class=_Parser)
    sub.required = True
    sub.add_parser('spectrum', parents=[common], help='modulation frequency sweep')
    sub.add_parser('timesweep', parents=[common], help='modulation time sweep')
    sub.add_parser('depthsweep', parents=[common], help='modulation depth sweep')
    sub.add_parser('image', parents=[common], help='single-shot images at output.image_durations')
    sub.add_parser('validate', parents=[common], help='check the configuration only')
    return parser


def _configure_logging(verbose: bool, quiet: bool):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s',
                        stream=sys.stderr, force=True)


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


def _flatten(prefix: str, values: Dict[str, Any]) -> Dict[str, Any]:
    return {f'{prefix}.{key}': value for key, value in values.items()}


def _attempt(analysis: Dict[str, Any], name: str, func: Callable[[], Dict[str, Any]]):
    """Run one analysis, recording its failure instead of aborting the command"""
    try:
        analysis.update(_flatten(name, func()))
    except (AnalysisError, ImagingError) as exc:
        logger.warning('%s analysis skipped: %s', name, exc)
        analysis[f'{name}.error'] = str(exc)


def _analyse_spectrum(cfg: RunConfig, result: SweepResult) -> Dict[str, Any]:
    analysis = _flatten('harmonic', harmonic_predictions(cfg.experiment.trap, cfg.experiment.sample.temperature))
    for observable in ('peak', 'total'):
        _attempt(analysis, f'resonance_{observable}', lambda o=observable: asdict(find_resonance(result, o)))
    for key in ('resonance_peak.f_min', 'resonance_total.f_min'):
        if key in analysis:
            logger.info('%s = %.1f Hz', key, analysis[key])
    return analysis


def _analyse_timesweep(cfg: RunConfig, result: SweepResult) -> Dict[str, Any]:
    exp = cfg.experiment
    analysis: Dict[str, Any] = {}
    _attempt(analysis, 'heating', lambda: asdict(
        heating_rate(result, exp.imaging.expansion_time, exp.trap.mass, exp.trap)))
    _attempt(analysis, 'saturation', lambda: {'ratio': saturation_check(result, exp.trap)})
    _attempt(analysis, 'decay', lambda: asdict(decay_shapes(result)))

    def exponent():
        slope, stderr = peak_depletion_exponent(result)
        return {'slope': slope, 'stderr': stderr}

    _attempt(analysis, 'peak_depletion_exponent', exponent)
    if 'heating.rate' in analysis:
        logger.info('Heating rate %.1f uK/s', analysis['heating.rate'] * 1e6)
    return analysis


def _run_sweep_command(cfg: RunConfig, args, out_dir: Path, axis: str, stem: str,
                       analyse: Optional[Callable[[RunConfig, SweepResult], Dict[str, Any]]]) -> RunManifest:
    started = _timestamp()
    spec = cfg.sweep_spec(axis, workers=args.workers)
    csv_path = out_dir / f'{stem}.csv'
    checkpoint = csv_path if cfg.sections['output']['checkpoint'] else None
    result = run_sweep(spec, checkpoint_path=checkpoint, progress=not args.quiet)
    write_sweep_csv(result, csv_path)
    summary_path = out_dir / f'{stem}_summary.csv'
    summarize(result).to_csv(summary_path, index=False, float_format='%.9g')
    analysis = analyse(cfg, result) if analyse else {}
    return RunManifest(
        config=cfg.resolved(),
        master_seed=cfg.seed,
        point_seeds=result.seeds,
        tool_version=__version__,
        command=args.command,
        started=started,
        finished=_timestamp(),
        outputs=[csv_path.name, summary_path.name],
        analysis=analysis,
        failed_points=result.failures,
    )


def _run_image_command(cfg: RunConfig, args, out_dir: Path) -> RunManifest:
    started = _timestamp()
    durations = cfg.sections['output']['image_durations']
    shots = image_series(cfg.experiment, durations, cfg.seed)
    outputs: List[str] = []
    rows = []
    for row, img in shots:
        name = f'image_T{row["value"] * 1e3:g}ms.pgm'
        write_graymap(img, out_dir / name)
        outputs.append(name)
        rows.append(row)
    table = pd.DataFrame(rows, columns=CSV_COLUMNS)
    table.to_csv(out_dir / 'images.csv', index=False, float_format='%.9g')
    outputs.append('images.csv')
    logger.info('Wrote %d images to %s', len(shots), out_dir)
    return RunManifest(
        config=cfg.resolved(),
        master_seed=cfg.seed,
        point_seeds=[cfg.seed],
        tool_version=__version__,
        command=args.command,
        started=started,
        finished=_timestamp(),
        outputs=outputs,
    )


SWEEP_COMMANDS = {
    'spectrum': ('frequency', 'spectrum', _analyse_spectrum),
    'timesweep': ('duration', 'timesweep', _analyse_timesweep),
    'depthsweep': ('depth', 'depthsweep', None),
}


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point; returns the process exit status

    Args:
        argv: Arguments without the program name (default sys.argv[1:])
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG

    _configure_logging(args.verbose, args.quiet)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.workers is not None and args.workers < 1:
            raise ConfigError('--workers must be >= 1')
    except ConfigError as exc:
        logger.error('Configuration error in %s: %s', args.config, exc)
        return EXIT_CONFIG

    if args.command == 'validate':
        for check, when in validation_report(cfg):
            print(f'[{when}] {check}')
        print(f'[OK] {args.config} is valid')
        return EXIT_OK

    out_dir = args.out if args.out is not None else Path(cfg.sections['output']['dir'])
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == 'image':
            manifest = _run_image_command(cfg, args, out_dir)
        else:
            axis, stem, analyse = SWEEP_COMMANDS[args.command]
            manifest = _run_sweep_command(cfg, args, out_dir, axis, stem, analyse)
        manifest_path = write_manifest(manifest, out_dir / f'{args.command}.manifest')
        logger.info('Manifest written to %s', manifest_path)
    except ConfigError as exc:
        logger.error('Configuration error: %s', exc)
        return EXIT_CONFIG
    except (SimulationError, ValueError, OSError) as exc:
        logger.error('%s failed: %s', args.command, exc)
        return EXIT_RUNTIME
    return EXIT_OK
