"""Run configuration: line-oriented `key = value` text with `[section]` headers.

    # comment
    [grid]
    extents = 1.0, 1.0
    n_cells = 48, 48
    faces = noslip, noslip, slip, slip
    [material]
    law = default_logrho_doublewell, K = 1.0, beta = 1.0

A line may carry several comma-separated assignments; a comma starts a new assignment
only when followed by `name =`, so list values keep their commas. Sections: grid,
material, initial, stepper, forcing, mms. Unknown sections or keys, bad values and range
violations raise ConfigError with the offending line. Omitted keys take the defaults
below; serialize_config writes every field so a round trip reparses to an equal Config.
"""
from __future__ import annotations
import logging, re
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Optional, Tuple
from mesh import FACE_NAMES, MIN_CELLS, _TAG_ALIASES
from material import LAWS, law_parameters
from scenarios import FORCINGS, SCENARIOS
from stepper import StepperConfig

log = logging.getLogger(__name__)

SECTIONS = ('grid', 'material', 'initial', 'stepper', 'forcing', 'mms')
_SPLIT = re.compile(r',\s*(?=[A-Za-z_]\w*\s*=)')
_KEY = re.compile(r'^[A-Za-z_]\w*$')
# config spelling -> law keyword
_LAW_ALIASES = {'lambda': 'lam'}
_LAW_NAMES = {v: k for k, v in _LAW_ALIASES.items()}


class ConfigError(ValueError):
    def __init__(self, msg: str, line: Optional[int] = None):
        super().__init__(f'line {line}: {msg}' if line else msg)
        self.line = line


@dataclass(frozen=True)
class GridConfig:
    extents: Tuple[float, ...] = (1.0,)
    n_cells: Tuple[int, ...] = (32,)
    faces: Tuple[str, ...] = ('noslip', 'noslip')


@dataclass(frozen=True)
class MaterialConfig:
    law: str = 'default_logrho_doublewell'
    params: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class InitialConfig:
    scenario: str = 'equilibrium'
    params: Dict[str, object] = field(default_factory=dict)
    snapshot: str = ''


@dataclass(frozen=True)
class ForcingConfig:
    f_ext: str = 'none'
    params: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class MMSConfig:
    study: str = 'both'
    levels: int = 3
    base_cells: int = 16
    dt: float = 1e-3
    t_end: float = 5e-3
    temporal_cells: int = 16
    temporal_dt: float = 4e-3
    temporal_t_end: float = 0.04


@dataclass(frozen=True)
class Config:
    grid: GridConfig = field(default_factory=GridConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    stepper: StepperConfig = field(default_factory=StepperConfig)
    forcing: ForcingConfig = field(default_factory=ForcingConfig)
    mms: MMSConfig = field(default_factory=MMSConfig)


# --------------------------------------------------------------------------- value parsing

def _num(text: str, key: str, line: int, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f'{key}: expected {kind.__name__}, got {text!r}', line) from None


def _list(text: str, key: str, line: int, kind=float) -> tuple:
    items = [p.strip() for p in text.split(',') if p.strip()]
    if not items:
        raise ConfigError(f'{key}: empty list', line)
    return tuple(_num(p, key, line, kind) if kind is not str else p for p in items)


def _typed(default, text: str, key: str, line: int):
    """Convert text to the type of a default value."""
    if isinstance(default, bool):
        return text.lower() in ('1', 'true', 'yes')
    if isinstance(default, int):
        return _num(text, key, line, int)
    if isinstance(default, float):
        return _num(text, key, line, float)
    return text


def _check(ok: bool, msg: str, line: int):
    if not ok:
        raise ConfigError(msg, line)


# --------------------------------------------------------------------------- parse

def _tokenize(text: str) -> Dict[str, Dict[str, Tuple[str, int]]]:
    out: Dict[str, Dict[str, Tuple[str, int]]] = {s: {} for s in SECTIONS}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if line.startswith('['):
            if not line.endswith(']'):
                raise ConfigError(f'malformed section header {line!r}', lineno)
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ConfigError(f'unknown section [{section}] (known: {", ".join(SECTIONS)})', lineno)
            continue
        if section is None:
            raise ConfigError('assignment outside of a [section]', lineno)
        for part in _SPLIT.split(line):
            if '=' not in part:
                raise ConfigError(f'expected key = value, got {part.strip()!r}', lineno)
            key, value = (s.strip() for s in part.split('=', 1))
            if not _KEY.match(key):
                raise ConfigError(f'invalid key {key!r}', lineno)
            if key in out[section]:
                raise ConfigError(f'[{section}] {key} given twice', lineno)
            out[section][key] = (value, lineno)
    return out


def _grid(entries) -> GridConfig:
    known = {'extents', 'n_cells', 'faces'}
    for key, (_, line) in entries.items():
        _check(key in known, f'unknown key [grid] {key}', line)
    ext_line = entries.get('extents', ('', 0))[1]
    extents = _list(entries['extents'][0], 'extents', ext_line) if 'extents' in entries else None
    n_line = entries.get('n_cells', ('', 0))[1]
    n_cells = _list(entries['n_cells'][0], 'n_cells', n_line, int) if 'n_cells' in entries else None
    dim = len(extents) if extents else (len(n_cells) if n_cells else 1)
    _check(dim in (1, 2), f'grid must be 1D or 2D, got {dim} axes', ext_line or n_line)
    extents = extents or (1.0,) * dim
    n_cells = n_cells or (32,) * dim
    if len(n_cells) == 1 and dim == 2:
        n_cells = n_cells * 2
    _check(len(n_cells) == dim, f'n_cells needs {dim} values, got {len(n_cells)}', n_line)
    for e in extents:
        _check(e > 0, f'extents must be positive, got {e}', ext_line)
    for n in n_cells:
        _check(n >= MIN_CELLS, f'n_cells must be >= {MIN_CELLS}, got {n}', n_line)
    if 'faces' in entries:
        text, line = entries['faces']
        raw = _list(text, 'faces', line, str)
        if len(raw) == 1:
            raw = raw * (2 * dim)
        _check(len(raw) == 2 * dim, f'faces needs {2 * dim} tags ({", ".join(FACE_NAMES[:2 * dim])})', line)
        faces = []
        for tag in raw:
            _check(tag.lower() in _TAG_ALIASES, f'faces: unknown tag {tag!r} (use noslip or slip)', line)
            faces.append(_TAG_ALIASES[tag.lower()])
        faces = tuple(faces)
    else:
        faces = ('noslip',) * (2 * dim)
    return GridConfig(tuple(float(e) for e in extents), tuple(int(n) for n in n_cells), faces)


_POSITIVE = ('eps', 'gamma', 'eta')
_NONNEGATIVE = ('K', 'beta')


def _material(entries) -> MaterialConfig:
    law, line = entries.get('law', (MaterialConfig.law, 0))
    _check(law in LAWS, f'unknown material law {law!r} (known: {", ".join(sorted(LAWS))})', line)
    allowed = law_parameters(law)
    defaults = {p: LAWS[law].__defaults__[i] for i, p in enumerate(allowed)}
    params = {k: float(v) for k, v in defaults.items()}
    for key, (text, kline) in entries.items():
        if key == 'law':
            continue
        name = _LAW_ALIASES.get(key, key)
        _check(name in allowed, f'unknown key [material] {key} for law {law}', kline)
        value = _num(text, key, kline)
        if name in _POSITIVE:
            _check(value > 0, f'{key} must be positive, got {value}', kline)
        if name in _NONNEGATIVE:
            _check(value >= 0, f'{key} must be nonnegative, got {value}', kline)
        params[name] = value
    if 'eta' in params and 'lam' in params:
        bad_line = entries.get('lambda', entries.get('lam', ('', 0)))[1]
        _check(2 * params['eta'] + params['lam'] > 0, '2 eta + lambda must be positive', bad_line)
    return MaterialConfig(law, params)


def _named_params(table, name: str, entries, section: str, skip: Tuple[str, ...]) -> Dict[str, object]:
    params = dict(table[name])
    for key, (text, line) in entries.items():
        if key in skip:
            continue
        _check(key in table[name], f'unknown key [{section}] {key} for {name}', line)
        params[key] = _typed(table[name][key], text, key, line)
    return params


def _initial(entries) -> InitialConfig:
    name, line = entries.get('scenario', (InitialConfig.scenario, 0))
    _check(name in SCENARIOS, f'unknown scenario {name!r} (known: {", ".join(sorted(SCENARIOS))})', line)
    params = _named_params(SCENARIOS, name, entries, 'initial', ('scenario', 'snapshot'))
    for key in ('rho_mean',):
        _check(params[key] > 0, f'{key} must be positive', entries.get(key, ('', line))[1])
    for key in ('mode', 'modes'):
        if key in params:
            _check(params[key] >= 1, f'{key} must be >= 1', entries.get(key, ('', line))[1])
    snapshot = entries.get('snapshot', ('', 0))[0]
    return InitialConfig(name, params, snapshot)


_STEPPER_RANGES = {
    'dt0': (lambda v: v > 0, 'must be positive'),
    't_end': (lambda v: v >= 0, 'must be nonnegative'),
    'picard_tol': (lambda v: v > 0, 'must be positive'),
    'max_picard': (lambda v: v >= 1, 'must be >= 1'),
    'max_halvings': (lambda v: v >= 0, 'must be nonnegative'),
    'snapshot_every': (lambda v: v >= 0, 'must be nonnegative'),
    'cfl_max': (lambda v: 0 < v <= 1, 'must lie in (0, 1]'),
    'linear_tol': (lambda v: v > 0, 'must be positive'),
    'density_floor': (lambda v: 0 <= v < 1, 'must lie in [0, 1)'),
    'grow_after': (lambda v: v >= 1, 'must be >= 1'),
    'compat_rtol': (lambda v: v > 0, 'must be positive'),
}


def _stepper(entries) -> StepperConfig:
    base = StepperConfig()
    known = {f.name: f for f in fields(StepperConfig)}
    values = {}
    for key, (text, line) in entries.items():
        _check(key in known, f'unknown key [stepper] {key}', line)
        if key == 'weak_norm_weights':
            w = _list(text, key, line)
            _check(len(w) == 5 and all(x >= 0 for x in w) and any(x > 0 for x in w),
                   'weak_norm_weights needs 5 nonnegative values, not all zero', line)
            values[key] = tuple(float(x) for x in w)
            continue
        value = _typed(getattr(base, key), text, key, line)
        ok, msg = _STEPPER_RANGES[key]
        _check(ok(value), f'{key} {msg}, got {value}', line)
        values[key] = value
    return replace(base, **values)


def _forcing(entries) -> ForcingConfig:
    name, line = entries.get('f_ext', (ForcingConfig.f_ext, 0))
    _check(name in FORCINGS, f'unknown forcing {name!r} (known: {", ".join(sorted(FORCINGS))})', line)
    return ForcingConfig(name, _named_params(FORCINGS, name, entries, 'forcing', ('f_ext',)))


def _mms(entries) -> MMSConfig:
    base = MMSConfig()
    known = {f.name for f in fields(MMSConfig)}
    values = {}
    for key, (text, line) in entries.items():
        _check(key in known, f'unknown key [mms] {key}', line)
        value = _typed(getattr(base, key), text, key, line)
        if key == 'study':
            _check(value in ('spatial', 'temporal', 'both'), f'study must be spatial, temporal or both', line)
        elif key == 'levels':
            _check(value >= 2, f'levels must be >= 2, got {value}', line)
        elif key in ('base_cells', 'temporal_cells'):
            _check(value >= MIN_CELLS, f'{key} must be >= {MIN_CELLS}, got {value}', line)
        else:
            _check(value > 0, f'{key} must be positive, got {value}', line)
        values[key] = value
    return replace(base, **values)


def parse_config(text: str) -> Config:
    raw = _tokenize(text)
    cfg = Config(grid=_grid(raw['grid']), material=_material(raw['material']), initial=_initial(raw['initial']),
                 stepper=_stepper(raw['stepper']), forcing=_forcing(raw['forcing']), mms=_mms(raw['mms']))
    if cfg.initial.scenario == 'manufactured':
        _check(len(cfg.grid.extents) == 2 and all(f == 'slip' for f in cfg.grid.faces),
               'manufactured scenario needs a 2D grid with faces = slip', raw['initial'].get('scenario', ('', 0))[1])
    return cfg


def load_config(path) -> Config:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f'cannot read config {path}: {exc.strerror}') from None
    return parse_config(text)


# --------------------------------------------------------------------------- serialize

def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ', '.join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: Config) -> str:
    lines: List[str] = ['[grid]', f'extents = {_fmt(cfg.grid.extents)}', f'n_cells = {_fmt(cfg.grid.n_cells)}',
                        f'faces = {_fmt(cfg.grid.faces)}', '', '[material]', f'law = {cfg.material.law}']
    lines += [f'{_LAW_NAMES.get(k, k)} = {_fmt(v)}' for k, v in cfg.material.params.items()]
    lines += ['', '[initial]', f'scenario = {cfg.initial.scenario}']
    lines += [f'{k} = {_fmt(v)}' for k, v in cfg.initial.params.items()]
    if cfg.initial.snapshot:
        lines.append(f'snapshot = {cfg.initial.snapshot}')
    lines += ['', '[stepper]'] + [f'{f.name} = {_fmt(getattr(cfg.stepper, f.name))}' for f in fields(StepperConfig)]
    lines += ['', '[forcing]', f'f_ext = {cfg.forcing.f_ext}']
    lines += [f'{k} = {_fmt(v)}' for k, v in cfg.forcing.params.items()]
    lines += ['', '[mms]'] + [f'{f.name} = {_fmt(getattr(cfg.mms, f.name))}' for f in fields(MMSConfig)]
    return '\n'.join(lines) + '\n'


def config_template() -> str:
    """Commented template listing every section and key with its default."""
    head = ['# NSCH run configuration. Omitted keys take the values shown.',
            '# Grids are 1D (one extent) or 2D; faces are x_lo, x_hi[, y_lo, y_hi] with tags noslip | slip.',
            f'# Material laws: {", ".join(sorted(LAWS))}.',
            f'# Scenarios: {", ".join(sorted(SCENARIOS))} (per-scenario keys below are for equilibrium).',
            f'# Forcings: {", ".join(sorted(FORCINGS))}.',
            '# Several assignments may share a line: law = default_logrho_doublewell, K = 1.0', '']
    return '\n'.join(head) + serialize_config(Config())
