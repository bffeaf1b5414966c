"""
Configuration and Result I/O
JSON run configuration with physical units, sweep CSV files, P2 graymaps and
flat key = value run manifests
"""

import difflib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import constants as csts

from .collisions import CollisionSpec
from .dynamics import IntegrationSpec, default_time_step, max_time_step
from .errors import ConfigError, ImagingError, SimulationError
from .experiments import CSV_COLUMNS, ExperimentConfig, SweepResult, SweepSpec, modulation_at
from .imaging import CloudImage, ImageSpec
from .thermal_sampler import SampleSpec
from .trap_physics import (
    RB87_MASS,
    BeamGeometry,
    ModulationSpec,
    PhysConsts,
    TrapSpec,
    u0_from_radial_frequency,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# unit -> (SI factor, dimension)
UNITS: Dict[str, Tuple[float, str]] = {
    'm': (1.0, 'length'),
    'cm': (csts.centi, 'length'),
    'mm': (csts.milli, 'length'),
    'um': (csts.micro, 'length'),
    'µm': (csts.micro, 'length'),
    'μm': (csts.micro, 'length'),
    'nm': (csts.nano, 'length'),
    's': (1.0, 'time'),
    'ms': (csts.milli, 'time'),
    'us': (csts.micro, 'time'),
    'µs': (csts.micro, 'time'),
    'μs': (csts.micro, 'time'),
    'ns': (csts.nano, 'time'),
    'Hz': (1.0, 'frequency'),
    'kHz': (csts.kilo, 'frequency'),
    'MHz': (csts.mega, 'frequency'),
    'K': (1.0, 'temperature'),
    'mK': (csts.milli, 'temperature'),
    'uK': (csts.micro, 'temperature'),
    'µK': (csts.micro, 'temperature'),
    'μK': (csts.micro, 'temperature'),
    'nK': (csts.nano, 'temperature'),
    'J': (1.0, 'energy'),
    'm^-3': (1.0, 'density'),
    'cm^-3': (csts.centi ** -3, 'density'),
    'kg': (1.0, 'mass'),
    'u': (csts.atomic_mass, 'mass'),
    'm/s^2': (1.0, 'acceleration'),
    'rad': (1.0, 'angle'),
}

# key -> (kind, default); kinds are physical dimensions or int/bool/str/number,
# 'list:<dim>' for explicit lists and 'range:<dim>' for a list or {start, stop, step}
SCHEMA: Dict[str, Dict[str, Tuple[str, Any]]] = {
    'trap': {
        'f_radial': ('frequency', 1250.0),
        'depth': ('energy', None),
        'w0': ('length', 55e-6),
        'z_R': ('length', 750e-6),
        'gravity': ('bool', False),
        'atom_mass': ('mass', RB87_MASS),
        'gravity_g': ('acceleration', 9.81),
    },
    'sample': {
        'n_atoms': ('int', 5000),
        'temperature': ('temperature', 65e-6),
        'temperature_fraction': ('number', None),
        'seed': ('int', 0),
        'burn_in': ('int', 10_000),
        'thinning': ('int', 10),
        'proposal_scale_pos': ('length', None),
        'proposal_scale_vel': ('velocity', None),
        'walkers': ('int', 1),
    },
    'integration': {
        'dt': ('time', None),
        'loss_radius_factor': ('number', 4.0),
        'diag_interval': ('int', 200),
    },
    'collisions': {
        'enabled': ('bool', False),
        'scattering_length': ('length', 5.29e-9),
        'cell_size': ('length', None),
        'cell_size_axial': ('length', None),
        'macro_weight': ('number', 1.0),
        'peak_density': ('density', 6e19),
        'grid_half_cells': ('int', 256),
    },
    'modulation': {
        'depth_h': ('number', 0.15),
        'freq_f': ('frequency', 2500.0),
        'duration_T': ('time', 0.2),
        'phase0': ('angle', 0.0),
        'random_phase': ('bool', False),
    },
    'imaging': {
        'pixel_size': ('length', 10e-6),
        'width': ('int', 256),
        'height': ('int', 128),
        'blur_sigma': ('length', 0.0),
        'shot_noise': ('bool', False),
        'expansion_time': ('time', 3e-3),
        'focal_depth': ('length', None),
        'box_halfwidth_px': ('int', 2),
    },
    'sweep': {
        'frequencies': ('range:frequency', {'start': 1600.0, 'stop': 3000.0, 'step': 50.0}),
        'durations': ('range:time', [0.005, 0.01, 0.025, 0.05, 0.1, 0.15, 0.2, 0.3]),
        'depths': ('range:number', [0.0, 0.05, 0.1, 0.15, 0.2]),
        'repetitions': ('int', 3),
        'normalize': ('bool', True),
        'workers': ('int', 8),
    },
    'output': {
        'dir': ('str', 'results'),
        'image_durations': ('list:time', [0.005, 0.025, 0.1, 0.3]),
        'checkpoint': ('bool', True),
    },
}

SWEEP_KEYS = {'frequency': 'frequencies', 'duration': 'durations', 'depth': 'depths'}
_NUMBER = r'[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?'
_QUANTITY = re.compile(rf'^\s*({_NUMBER})\s*(\S*)\s*$')


@dataclass
class RunConfig:
    """Validated configuration; `sections` holds SI values with defaults filled in"""
    sections: Dict[str, Dict[str, Any]]
    experiment: ExperimentConfig
    source: Optional[str] = None

    def resolved(self) -> Dict[str, Any]:
        """Flat 'section.key' mapping of every setting in SI units"""
        flat = {}
        for section, values in self.sections.items():
            for key, value in values.items():
                flat[f'{section}.{key}'] = value
        return flat

    def sweep_values(self, swept_axis: str) -> Tuple[float, ...]:
        return tuple(self.sections['sweep'][SWEEP_KEYS[swept_axis]])

    def sweep_spec(self, swept_axis: str, workers: Optional[int] = None) -> SweepSpec:
        sweep = self.sections['sweep']
        return SweepSpec(
            config=self.experiment,
            swept_axis=swept_axis,
            values=self.sweep_values(swept_axis),
            repetitions=sweep['repetitions'],
            normalize=sweep['normalize'],
            workers=workers if workers is not None else sweep['workers'],
        )

    @property
    def seed(self) -> int:
        return self.sections['sample']['seed']

    def with_seed(self, seed: int) -> 'RunConfig':
        flat = self.resolved()
        flat['sample.seed'] = int(seed)
        return config_from_resolved(flat, source=self.source)


def _offset_to_line_col(text: str, offset: int) -> Tuple[int, int]:
    line = text.count('\n', 0, offset) + 1
    column = offset - (text.rfind('\n', 0, offset) + 1) + 1
    return line, column


def _locate(text: Optional[str], section: str, key: Optional[str] = None) -> Tuple[Optional[int], Optional[int]]:
    """Line and column of "section" (or of "key" inside it) in the JSON text"""
    if not text:
        return None, None
    match = re.search(rf'"{re.escape(section)}"\s*:', text)
    if match is None:
        return None, None
    offset = match.start()
    if key is not None:
        inner = re.compile(rf'"{re.escape(key)}"\s*:').search(text, match.end())
        if inner is not None:
            offset = inner.start()
    return _offset_to_line_col(text, offset)


def _error(message: str, text: Optional[str], section: str, key: Optional[str] = None) -> ConfigError:
    line, column = _locate(text, section, key)
    name = f'{section}.{key}' if key else section
    return ConfigError(f'{name}: {message}', line=line, column=column, key=name)


def parse_quantity(value: Any, dimension: str) -> float:
    """
    Convert a number or a "<number> <unit>" string to SI

    Raises:
        ValueError: unknown unit or a unit of the wrong dimension
    """
    if isinstance(value, bool):
        raise ValueError(f'expected a {dimension}, got a boolean')
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f'expected a {dimension}, got {type(value).__name__}')
    match = _QUANTITY.match(value)
    if match is None:
        raise ValueError(f'cannot read {value!r} as a {dimension}')
    number, unit = float(match.group(1)), match.group(2)
    if not unit:
        return number
    if dimension == 'velocity' and unit.endswith('/s'):
        factor, unit_dim = UNITS.get(unit[:-2], (None, None))
        if unit_dim == 'length':
            return number * factor
    if unit not in UNITS:
        close = difflib.get_close_matches(unit, list(UNITS), n=1)
        hint = f"; did you mean '{close[0]}'?" if close else ''
        raise ValueError(f'unknown unit {unit!r}{hint}')
    factor, unit_dim = UNITS[unit]
    if dimension == 'energy' and unit_dim == 'temperature':
        return number * factor * csts.Boltzmann
    if unit_dim != dimension:
        raise ValueError(f'unit {unit!r} is a {unit_dim}, expected a {dimension}')
    return number * factor


def _parse_value(kind: str, value: Any) -> Any:
    if value is None:
        return None
    if kind == 'int':
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ValueError(f'expected an integer, got {value!r}')
        return int(value)
    if kind == 'bool':
        if not isinstance(value, bool):
            raise ValueError(f'expected true or false, got {value!r}')
        return value
    if kind == 'str':
        if not isinstance(value, str):
            raise ValueError(f'expected a string, got {value!r}')
        return value
    if kind == 'number':
        return parse_quantity(value, 'dimensionless')
    if kind.startswith('list:'):
        if not isinstance(value, list):
            raise ValueError(f'expected a list, got {value!r}')
        return [_parse_value(kind[5:], item) for item in value]
    if kind.startswith('range:'):
        inner = kind[6:]
        if isinstance(value, dict):
            unknown = set(value) - {'start', 'stop', 'step'}
            if unknown or len(value) != 3:
                raise ValueError('a range needs exactly the keys start, stop, step')
            start, stop, step = (_parse_value(inner, value[k]) for k in ('start', 'stop', 'step'))
            if not step > 0 or stop < start:
                raise ValueError('a range needs step > 0 and stop >= start')
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [float(x) for x in start + step * np.arange(count)]
        return _parse_value('list:' + inner, value)
    return parse_quantity(value, kind)


def _resolve_sections(raw: Dict[str, Any], text: Optional[str]) -> Dict[str, Dict[str, Any]]:
    if not isinstance(raw, dict):
        raise ConfigError('configuration must be a JSON object of sections')
    sections = {}
    for section, body in raw.items():
        if section in ('description', 'version'):
            continue
        if section not in SCHEMA:
            close = difflib.get_close_matches(section, list(SCHEMA), n=1)
            hint = f"; nearest valid section is '{close[0]}'" if close else ''
            raise _error(f'unknown section{hint}', text, section)
        if not isinstance(body, dict):
            raise _error('section must be a JSON object', text, section)
        for key in body:
            if key not in SCHEMA[section]:
                close = difflib.get_close_matches(key, list(SCHEMA[section]), n=1)
                hint = f"; nearest valid key is '{close[0]}'" if close else ''
                raise _error(f'unknown key{hint}', text, section, key)

    for section, keys in SCHEMA.items():
        body = raw.get(section, {})
        resolved = {}
        for key, (kind, default) in keys.items():
            value = body.get(key, default)
            try:
                resolved[key] = _parse_value(kind, value)
            except ValueError as exc:
                raise _error(str(exc), text, section, key) from exc
        sections[section] = resolved

    trap = sections['trap']
    if 'f_radial' in raw.get('trap', {}) and trap['depth'] is not None:
        raise _error('give either f_radial or depth, not both', text, 'trap', 'depth')
    sample = sections['sample']
    if 'temperature' in raw.get('sample', {}) and sample['temperature_fraction'] is not None:
        raise _error('give either temperature or temperature_fraction, not both', text, 'sample',
                     'temperature_fraction')
    return sections


def _materialize(sections: Dict[str, Dict[str, Any]], text: Optional[str]) -> ExperimentConfig:
    """Build the domain objects, filling derived defaults back into sections"""
    trap_s = sections['trap']
    try:
        consts = PhysConsts(atom_mass=trap_s['atom_mass'], gravity_g=trap_s['gravity_g'])
        geometry = BeamGeometry(w0=trap_s['w0'], z_R=trap_s['z_R'])
        if trap_s['depth'] is None:
            trap_s['depth'] = u0_from_radial_frequency(trap_s['f_radial'], geometry.w0, consts.atom_mass)
        trap_s['f_radial'] = None
        trap = TrapSpec(depth_U0=trap_s['depth'], geometry=geometry,
                        gravity_enabled=trap_s['gravity'], consts=consts)
    except ValueError as exc:
        raise _error(str(exc), text, 'trap') from exc

    sample_s = sections['sample']
    if sample_s['temperature_fraction'] is not None:
        sample_s['temperature'] = sample_s['temperature_fraction'] * trap.depth_kelvin
        sample_s['temperature_fraction'] = None
    if sample_s['temperature'] >= trap.depth_kelvin:
        logger.warning('Sample temperature %.3g K is not below the trap depth %.3g K',
                       sample_s['temperature'], trap.depth_kelvin)

    coll_s = sections['collisions']
    if coll_s['cell_size'] is None:
        coll_s['cell_size'] = trap.geometry.w0 / 4.0
    if coll_s['cell_size_axial'] is None:
        coll_s['cell_size_axial'] = trap.geometry.z_R / 10.0

    mod_s = sections['modulation']
    img_s = sections['imaging']
    built = {}
    factories = {
        'sample': lambda s: SampleSpec(**{k: v for k, v in s.items() if k != 'temperature_fraction'}),
        'integration': lambda s: IntegrationSpec(**s),
        'collisions': lambda s: CollisionSpec(
            enabled=s['enabled'], scattering_length=s['scattering_length'], cell_size=s['cell_size'],
            cell_size_axial=s['cell_size_axial'], macro_weight=s['macro_weight'],
            peak_density=s['peak_density'], grid_half_cells=s['grid_half_cells']),
        'modulation': lambda s: ModulationSpec(
            depth_h=s['depth_h'], freq_f=s['freq_f'], duration_T=s['duration_T'], phase0=s['phase0']),
        'imaging': lambda s: ImageSpec(
            pixel_size=s['pixel_size'], width=s['width'], height=s['height'], blur_sigma=s['blur_sigma'],
            shot_noise=s['shot_noise'], expansion_time=s['expansion_time'], focal_depth=s['focal_depth'],
            gravity_enabled=trap.gravity_enabled, gravity_g=trap.consts.gravity_g),
    }
    for section, factory in factories.items():
        try:
            built[section] = factory(sections[section])
        except ValueError as exc:
            raise _error(str(exc), text, section) from exc

    try:
        experiment = ExperimentConfig(
            trap=trap,
            sample=built['sample'],
            integration=built['integration'],
            collisions=built['collisions'],
            modulation=built['modulation'],
            imaging=built['imaging'],
            box_halfwidth_px=img_s['box_halfwidth_px'],
            random_phase=mod_s['random_phase'],
        )
    except ValueError as exc:
        raise _error(str(exc), text, 'imaging', 'box_halfwidth_px') from exc

    _check_sweeps(sections, experiment, text)
    _check_time_step(sections, experiment, text)
    return experiment


def _check_sweeps(sections, experiment: ExperimentConfig, text: Optional[str]):
    sweep = sections['sweep']
    for axis, key in SWEEP_KEYS.items():
        values = sweep[key]
        if not values:
            raise _error('sweep values must be non-empty', text, 'sweep', key)
        if any(b <= a for a, b in zip(values, values[1:])):
            raise _error('sweep values must be strictly increasing', text, 'sweep', key)
        for value in values:
            try:
                modulation_at(experiment.modulation, axis, value)
            except ValueError as exc:
                raise _error(str(exc), text, 'sweep', key) from exc
    for key in ('repetitions', 'workers'):
        if sweep[key] < 1:
            raise _error(f'{key} must be >= 1', text, 'sweep', key)
    if any(t < 0 for t in sections['output']['image_durations']):
        raise _error('image durations must be >= 0', text, 'output', 'image_durations')


def _check_time_step(sections, experiment: ExperimentConfig, text: Optional[str]):
    dt = experiment.integration.dt
    if dt is None:
        return
    f_max = max([experiment.modulation.freq_f] + list(sections['sweep']['frequencies']))
    bound = max_time_step(experiment.trap, ModulationSpec(freq_f=f_max))
    if dt > bound:
        raise _error(f'time step {dt:.3g} s exceeds 1/(50 max(f_radial, f)) = {bound:.3g} s',
                     text, 'integration', 'dt')


def _build(raw: Dict[str, Any], text: Optional[str], source: Optional[str]) -> RunConfig:
    sections = _resolve_sections(raw, text)
    experiment = _materialize(sections, text)
    return RunConfig(sections=sections, experiment=experiment, source=source)


def parse_config(text: str, source: Optional[str] = None) -> RunConfig:
    """
    Parse a JSON run configuration

    Scalars are SI numbers or strings with a unit suffix ("1.25 kHz",
    "55 um", "65 uK", "3 ms", "6e13 cm^-3"). Missing keys take their defaults.

    Args:
        text: JSON document
        source: Name used in messages (usually the file path)

    Returns:
        RunConfig with every default materialized

    Raises:
        ConfigError: syntax error, unknown key, bad unit or violated precondition;
            carries the line and column when known
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f'invalid JSON: {exc.msg}', line=exc.lineno, column=exc.colno) from exc
    return _build(raw, text, source)


def config_from_resolved(flat: Dict[str, Any], source: Optional[str] = None) -> RunConfig:
    """Rebuild a RunConfig from the flat mapping produced by RunConfig.resolved()"""
    raw: Dict[str, Dict[str, Any]] = {}
    for name, value in flat.items():
        section, _, key = name.partition('.')
        raw.setdefault(section, {})[key] = value
    raw.get('trap', {}).pop('f_radial', None)
    raw.get('sample', {}).pop('temperature_fraction', None)
    return _build(raw, None, source)


def load_config(path: PathLike) -> RunConfig:
    """Load a JSON configuration, or replay the configuration recorded in a .manifest file"""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ConfigError(f'cannot read configuration {path}: {exc}') from exc
    if path.suffix == '.manifest':
        manifest = parse_manifest(text)
        return config_from_resolved(manifest.config, source=str(path))
    return parse_config(text, source=str(path))


def validation_report(config: RunConfig) -> List[Tuple[str, str]]:
    """Each precondition and whether parsing has checked it or it is only known at run time"""
    exp = config.experiment
    dt = exp.integration.dt if exp.integration.dt is not None else default_time_step(exp.trap, exp.modulation)
    extent_z, extent_x = exp.imaging.extent
    return [
        ('trap depth > 0, waist and Rayleigh range > 0, finite trap frequencies', 'parse-time'),
        ('modulation depth 0 <= h < 1, frequency and duration >= 0', 'parse-time'),
        ('sample n_atoms >= 1, temperature > 0, thinning >= 1', 'parse-time'),
        (f'time step {dt:.4g} s within 1/(50 max(f_radial, f))', 'parse-time'),
        ('loss radius factor >= 2', 'parse-time'),
        ('collision scattering length, cell size > 0 and macro weight >= 1', 'parse-time'),
        ('image pixel size > 0, expansion time >= 0', 'parse-time'),
        ('sweep values non-empty and strictly increasing, repetitions >= 1', 'parse-time'),
        ('Metropolis acceptance within [5%, 95%]', 'runtime'),
        ('integrator state stays finite', 'runtime'),
        ('cloud stays inside the collision grid', 'runtime'),
        ('at least 2 alive atoms for temperature and density estimates', 'runtime'),
        ('image has >= 10 nonzero pixels for the Gaussian fit', 'runtime'),
        ('peak box lies inside the image', 'runtime'),
        (f'{extent_z * 1e3:.2f} x {extent_x * 1e3:.2f} mm frame spans >= 4 fitted radii on both axes', 'runtime'),
    ]


def write_sweep_csv(result: SweepResult, path: PathLike) -> Path:
    """Write one row per point with 9 significant digits"""
    if len(result.rows) == 0:
        raise ValueError('cannot write an empty sweep result')
    path = Path(path)
    try:
        result.to_frame().to_csv(path, index=False, float_format='%.9g')
    except OSError as exc:
        raise SimulationError(f'cannot write sweep CSV {path}: {exc}') from exc
    logger.info('Wrote %d rows to %s', len(result.rows), path)
    return path


def read_sweep_csv(path: PathLike, swept_axis: str = 'frequency') -> SweepResult:
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except OSError as exc:
        raise SimulationError(f'cannot read sweep CSV {path}: {exc}') from exc
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise SimulationError(f'{path} is missing columns {missing}')
    frame = frame[CSV_COLUMNS].copy()
    frame['converged'] = frame['converged'].astype(bool)
    frame['error'] = ''
    seeds = [int(s) for s in frame.sort_values('rep')['seed'].unique()]
    return SweepResult(rows=frame, swept_axis=swept_axis, seeds=seeds)


def write_graymap(img: CloudImage, path: PathLike) -> float:
    """
    Write a plain (P2) 16-bit graymap

    Counts are scaled so the brightest pixel is 65535; the scale factor,
    pixel size and expansion time go in a comment line.

    Returns:
        The count scale (graymap value per count)
    """
    peak = float(img.pixels.max()) if img.pixels.size else 0.0
    scale = 65535.0 / peak if peak > 0 else 1.0
    values = np.rint(img.pixels * scale).astype(np.int64)
    height, width = values.shape
    lines = [
        'P2',
        f'# pixel_size_m={img.pixel_size:.9g} expansion_time_s={img.expansion_time:.9g} count_scale={scale:.9g}',
        f'# line_of_sight={img.metadata.get("line_of_sight", "y")} out_of_frame={img.out_of_frame}',
        f'{width} {height}',
        '65535',
    ]
    lines.extend(' '.join(str(v) for v in row) for row in values)
    path = Path(path)
    try:
        path.write_text('\n'.join(lines) + '\n', encoding='ascii')
    except OSError as exc:
        raise SimulationError(f'cannot write graymap {path}: {exc}') from exc
    return scale


_PGM_HEADER = re.compile(r'^P2\s+((?:#.*\n\s*)*)(\d+)\s+(\d+)\s+(?:#.*\n\s*)*(\d+)\s', re.MULTILINE)


def read_graymap(path: PathLike) -> CloudImage:
    """Read a P2 graymap written by write_graymap back into counts"""
    path = Path(path)
    text = path.read_text(encoding='ascii')
    match = _PGM_HEADER.match(text)
    if match is None:
        raise ImagingError(f'not a plain PGM file: {path}')
    comments, width, height = match.group(1), int(match.group(2)), int(match.group(3))
    meta = dict(re.findall(r'(\w+)=(\S+)', comments))
    scale = float(meta.get('count_scale', 1.0))
    values = np.array(text[match.end():].split(), dtype=float)
    if values.size != width * height:
        raise ImagingError(f'{path}: expected {width * height} pixels, found {values.size}')
    return CloudImage(
        pixels=values.reshape(height, width) / scale,
        pixel_size=float(meta.get('pixel_size_m', 1.0)),
        expansion_time=float(meta.get('expansion_time_s', 0.0)),
        out_of_frame=int(meta.get('out_of_frame', 0)),
        metadata={'line_of_sight': meta.get('line_of_sight', 'y'), 'count_scale': scale}
    )


@dataclass
class RunManifest:
    """Everything needed to replay a run"""
    config: Dict[str, Any]
    master_seed: int
    point_seeds: List[int] = field(default_factory=list)
    tool_version: str = ''
    command: str = ''
    started: str = ''
    finished: str = ''
    outputs: List[str] = field(default_factory=list)
    analysis: Dict[str, Any] = field(default_factory=dict)
    failed_points: List[Dict[str, Any]] = field(default_factory=list)


def _json_value(value: Any) -> str:
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return json.dumps(None)
    return json.dumps(value, ensure_ascii=False)


def format_manifest(manifest: RunManifest) -> str:
    entries = {f'config.{k}': v for k, v in manifest.config.items()}
    entries.update({
        'seed.master': manifest.master_seed,
        'seed.points': manifest.point_seeds,
        'tool.version': manifest.tool_version,
        'run.command': manifest.command,
        'run.started': manifest.started,
        'run.finished': manifest.finished,
        'run.outputs': manifest.outputs,
        'run.failed_points': manifest.failed_points,
    })
    entries.update({f'analysis.{k}': v for k, v in manifest.analysis.items()})
    return ''.join(f'{key} = {_json_value(entries[key])}\n' for key in sorted(entries))


def parse_manifest(text: str) -> RunManifest:
    """Parse flat 'key = json-value' lines; blank lines and # comments are skipped"""
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith('#'):
            continue
        key, sep, value = stripped.partition(' = ')
        if not sep:
            raise ConfigError("manifest lines must read 'key = value'", line=lineno, column=1)
        try:
            entries[key] = json.loads(value)
        except json.JSONDecodeError as exc:
            raise ConfigError(f'bad manifest value for {key}: {exc.msg}',
                              line=lineno, column=len(key) + 4 + exc.colno - 1, key=key) from exc

    config = {k[len('config.'):]: v for k, v in entries.items() if k.startswith('config.')}
    analysis = {k[len('analysis.'):]: v for k, v in entries.items() if k.startswith('analysis.')}
    if not config:
        raise ConfigError('manifest contains no config.* entries')
    return RunManifest(
        config=config,
        master_seed=int(entries.get('seed.master', config.get('sample.seed', 0))),
        point_seeds=list(entries.get('seed.points', [])),
        tool_version=entries.get('tool.version', ''),
        command=entries.get('run.command', ''),
        started=entries.get('run.started', ''),
        finished=entries.get('run.finished', ''),
        outputs=list(entries.get('run.outputs', [])),
        analysis=analysis,
        failed_points=list(entries.get('run.failed_points', [])),
    )


def write_manifest(manifest: RunManifest, path: PathLike) -> Path:
    path = Path(path)
    try:
        path.write_text(format_manifest(manifest), encoding='utf-8')
    except OSError as exc:
        raise SimulationError(f'cannot write manifest {path}: {exc}') from exc
    return path


def read_manifest(path: PathLike) -> RunManifest:
    path = Path(path)
    try:
        return parse_manifest(path.read_text(encoding='utf-8'))
    except OSError as exc:
        raise ConfigError(f'cannot read manifest {path}: {exc}') from exc
