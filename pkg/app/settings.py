"""Translate the application config into simulation and solver settings"""
from __future__ import annotations

import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from app.baselines import BaselineOptions
from app.bench import AXES, ExperimentSpec
from app.errors import ConfigError
from app.models import SystemConfig
from app.reconstruct import UplinkOptions
from app.sparse_core import IrlsOptions, StepPolicy

logger = logging.getLogger(__name__)

SYSTEM_KEYS = {
    'ANTENNAS': 'M',
    'SUBCARRIERS': 'N',
    'USERS': 'K',
    'SUBCARRIER_SPACING': 'f0',
    'CARRIER_UL': 'fc_ul',
    'CARRIER_DL': 'fc_dl',
    'SPACING_OVER_LAMBDA': 'd_over_lambda',
}
AXIS_POINTS = {'snr': 'SNR_POINTS', 'bandwidth': 'BANDWIDTH_POINTS', 'antennas': 'ANTENNA_POINTS'}


def _number(mapping, key, kind, errors):
    try:
        value = mapping[key]
    except KeyError:
        errors.append(f"{key} is missing")
        return None
    try:
        if kind is int and float(value) != int(value):
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        errors.append(f"{key} must be {kind.__name__}, got {value!r}")
        return None


def load_system_config(mapping):
    """SystemConfig from UPPER_CASE keys, reporting every problem at once"""
    errors = []
    values = {}
    for key, name in SYSTEM_KEYS.items():
        kind = int if name in ('M', 'N', 'K') else float
        values[name] = _number(mapping, key, kind, errors)
    if errors:
        raise ConfigError(errors)
    return SystemConfig(**values)


def load_irls_options(mapping, grid_key):
    errors = []
    options = IrlsOptions(
        epsilon=_number(mapping, 'IRLS_EPSILON', float, errors) or 0.0,
        prune_ratio=_number(mapping, 'IRLS_PRUNE_RATIO', float, errors) or 0.0,
        eta=_number(mapping, 'IRLS_ETA', float, errors) or 0.0,
        max_iterations=_number(mapping, 'IRLS_MAX_ITERATIONS', int, errors) or 0,
        L_initial=_number(mapping, grid_key, int, errors) or 0,
        detection_factor=_number(mapping, 'IRLS_DETECTION_FACTOR', float, errors) or 0.0,
        step=StepPolicy(kind=mapping.get('IRLS_STEP', 'gauss_newton')),
    )
    if errors:
        raise ConfigError(errors)
    errors = options.validate()
    if errors:
        raise ConfigError(errors)
    return options


def load_uplink_options(mapping):
    return UplinkOptions(doa=load_irls_options(mapping, 'DOA_GRID'),
                         delay=load_irls_options(mapping, 'DELAY_GRID'),
                         delay_span=float(mapping.get('DELAY_SPAN', 1.0)))


def load_baseline_options(mapping):
    errors = []
    options = BaselineOptions(
        L_doa=_number(mapping, 'DOA_GRID', int, errors),
        L_delay=_number(mapping, 'DELAY_GRID', int, errors),
        max_blocks=_number(mapping, 'OMP_MAX_BLOCKS', int, errors),
        levels=_number(mapping, 'REFINE_LEVELS', int, errors),
        delay_span=float(mapping.get('DELAY_SPAN', 1.0)),
        irls=load_irls_options(mapping, 'DOA_GRID'),
        delay=load_irls_options(mapping, 'DELAY_GRID'),
    )
    if errors:
        raise ConfigError(errors)
    return options


def load_experiment(mapping, axis=None, trials=None, estimators=None, seed=None, timing=False):
    """ExperimentSpec from the config, with command-line overrides"""
    axis = axis or mapping.get('AXIS', 'snr')
    if axis not in AXES:
        raise ConfigError(f"axis must be one of {AXES}, got {axis!r}")
    errors = []
    trials = trials if trials is not None else _number(mapping, 'TRIALS', int, errors)
    seed = seed if seed is not None else _number(mapping, 'SEED', int, errors)
    paths = _number(mapping, 'PATHS', int, errors)
    if errors:
        raise ConfigError(errors)
    spec = ExperimentSpec(
        cfg=load_system_config(mapping),
        axis=axis,
        values=tuple(sorted(float(v) for v in mapping.get(AXIS_POINTS[axis], []))),
        trials=trials,
        estimators=tuple(estimators or mapping.get('ESTIMATORS', ['proposed'])),
        seed=seed,
        paths=paths,
        snr_db=float(mapping.get('SWEEP_SNR', 10.0)),
        delay_span=float(mapping.get('DELAY_SPAN', 1.0)),
        uplink=load_uplink_options(mapping),
        baseline=load_baseline_options(mapping),
        reciprocity=mapping.get('RECIPROCITY', 'physical'),
        pilot_layout=mapping.get('PILOT_LAYOUT', 'comb'),
        zc_root=int(mapping.get('ZC_ROOT', 1)),
        separation_guard=bool(mapping.get('SEPARATION_GUARD', True)),
        timing=timing,
    )
    errors.extend(spec.validate())
    if spec.reciprocity not in ('physical', 'numeric'):
        errors.append("RECIPROCITY must be 'physical' or 'numeric'")
    if errors:
        raise ConfigError(errors)
    return spec


def apply_config_file(app, path):
    """Overlay a TOML file of UPPER_CASE keys onto the app config"""
    if path is None:
        return
    try:
        app.config.from_file(str(path), load=tomllib.load, text=False)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    logger.info(f"loaded configuration from {path}")
