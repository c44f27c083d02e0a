"""Monte-Carlo benchmark: metrics, paired sweeps and aggregation"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import partial
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import t as student_t

from app.baselines import BaselineKind, BaselineOptions, estimate_uplink_baseline
from app.downlink import downlink_paths, downlink_row, estimate_downlink
from app.errors import ConfigError, DimensionError, NoPathsDetected
from app.models import (SystemConfig, allocate_pilots, channel_matrix, draw_paths,
                        observe_uplink, wrap_angle)
from app.reconstruct import UplinkOptions, estimate_uplink

logger = logging.getLogger(__name__)

AXES = ('snr', 'bandwidth', 'antennas')
ESTIMATORS = ('proposed', 'polished') + tuple(kind.value for kind in BaselineKind)
ANGLE_CAP = np.pi ** 2
DELAY_CAP = 1.0


class MatchResult(NamedTuple):
    error: float
    missed: int
    false_alarms: int


def match_paths(truth, estimate, distance, cap, cell=0.0):
    """Optimal one-to-one assignment minimizing the summed squared distance

    Unmatched true paths add their squared distance to the edge of the
    nearest estimate's resolution cell (width ``cell``, centred on the
    estimate), capped at ``cap``; the full cap when there is no estimate.
    """
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    estimate = np.atleast_1d(np.asarray(estimate, dtype=float))
    if estimate.size == 0:
        return MatchResult(float(cap * truth.size), int(truth.size), 0)
    if truth.size == 0:
        return MatchResult(0.0, 0, int(estimate.size))
    gaps = distance(truth[:, None], estimate[None, :])
    cost = gaps ** 2
    rows, cols = linear_sum_assignment(cost)
    error = float(np.minimum(cost[rows, cols], cap).sum())
    unmatched = np.setdiff1d(np.arange(truth.size), rows)
    if unmatched.size:
        edge = np.abs(gaps[unmatched].min(axis=1) - cell / 2)
        error += float(np.minimum(edge ** 2, cap).sum())
    return MatchResult(error, int(unmatched.size), int(estimate.size - cols.size))


def _angle_distance(a, b):
    return np.abs(wrap_angle(a - b))


def _field(x, *names):
    for name in names:
        if hasattr(x, name):
            return getattr(x, name)
    return x


def match_angles(truth, est, cfg=None):
    """Angle matching; with ``cfg`` a missed path is charged from the 2 pi/M cell edge"""
    cell = 2 * np.pi / cfg.M if cfg is not None else 0.0
    return match_paths(_field(truth, 'phi'), _field(est, 'phi_hat', 'phi'), _angle_distance, ANGLE_CAP, cell)


def match_delays(truth, est, cfg):
    """Delay matching in units of 1/(N f0); the resolution cell is one unit"""
    tau = np.asarray(_field(truth, 'tau')) / cfg.delay_cell
    est = np.asarray(_field(est, 'tau_hat', 'tau')) / cfg.delay_cell
    return match_paths(tau, est, lambda a, b: np.abs(a - b), DELAY_CAP, 1.0)


def mse_angles(truth, est, cfg=None):
    """Summed squared wrap-aware angle error over the matched paths"""
    return match_angles(truth, est, cfg).error


def mse_delays(truth, est, cfg):
    """Summed squared delay error in delay cells"""
    return match_delays(truth, est, cfg).error


def nmse(H_true, H_hat):
    H_true = np.asarray(getattr(H_true, 'H', H_true))
    H_hat = np.asarray(getattr(H_hat, 'H', H_hat))
    if H_true.shape != H_hat.shape:
        raise DimensionError(f"shape mismatch {H_true.shape} vs {H_hat.shape}")
    reference = np.linalg.norm(H_true) ** 2
    if reference == 0:
        raise DimensionError("reference channel is zero")
    return float(np.linalg.norm(H_true - H_hat) ** 2 / reference)


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep: a base config, an axis with its values and the trials per value"""
    cfg: SystemConfig
    axis: str
    values: tuple
    trials: int
    estimators: tuple = ('proposed',)
    seed: int = 0
    paths: int = 6
    snr_db: float = 10.0
    delay_span: float = 1.0
    uplink: UplinkOptions = field(default_factory=UplinkOptions)
    baseline: BaselineOptions = field(default_factory=BaselineOptions)
    reciprocity: str = 'physical'
    pilot_layout: str = 'comb'
    zc_root: int = 1
    separation_guard: bool = True
    downlink: bool = True
    timing: bool = False

    def validate(self):
        errors = []
        if self.axis not in AXES:
            errors.append(f"axis must be one of {AXES}")
        if self.trials < 1:
            errors.append("trials must be at least 1")
        values = np.asarray(self.values, dtype=float)
        if values.size == 0 or not np.all(np.isfinite(values)):
            errors.append("sweep values must be finite and nonempty")
        elif np.any(np.diff(values) < 0):
            errors.append("sweep values must be sorted")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            errors.append(f"unknown estimators {unknown}; choose from {ESTIMATORS}")
        if self.paths < 1:
            errors.append("paths must be at least 1")
        if not self.delay_span > 0:
            errors.append("delay_span must be positive")
        return errors

    def point(self, value):
        """(config, snr) of one sweep value"""
        if self.axis == 'snr':
            return self.cfg, float(value)
        if self.axis == 'bandwidth':
            return self.cfg.with_bandwidth(value), self.snr_db
        return self.cfg.replace(M=int(value)), self.snr_db


@dataclass
class MetricRow:
    value: float
    estimator: str
    trial: int
    user: int
    p_hat: int = 0
    mse_phi: float = float('nan')
    mse_tau: float = float('nan')
    missed: int = 0
    false_alarms: int = 0
    nmse_ul: float = float('nan')
    nmse_dl: float = float('nan')
    iterations: int = 0
    converged: int = 0
    failed: int = 0
    obs_hash: str = ''
    wall_time: float = float('nan')


def header(timing=False):
    names = [f.name for f in fields(MetricRow)]
    return names if timing else [n for n in names if n != 'wall_time']


def _rng(*entropy):
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


def run_estimator(name, obs, cfg, spec):
    """Dispatch on the estimator id; 'polished' is the proposed chain plus the joint refit"""
    if name == 'proposed':
        return estimate_uplink(obs, cfg, spec.uplink)
    if name == 'polished':
        return estimate_uplink(obs, cfg, replace(spec.uplink, polish=True))
    return estimate_uplink_baseline(name, obs, cfg, spec.baseline)


def with_noise_variance(options, sigma2):
    """Let every engine know the noise level of this sweep point; 0.0 is noiseless"""
    if isinstance(options, UplinkOptions):
        return replace(options, doa=options.doa.replace(noise_variance=sigma2),
                       delay=options.delay.replace(noise_variance=sigma2))
    return replace(options, noise_variance=sigma2, irls=options.irls.replace(noise_variance=sigma2),
                   delay=options.delay.replace(noise_variance=sigma2))


def trial_paths(spec, cfg, trial):
    """(uplink paths, downlink paths) of one trial, drawn over the sweep's delay span"""
    channel_rng = _rng(spec.seed, trial)
    paths = draw_paths(channel_rng, spec.paths, cfg, spec.separation_guard, spec.delay_span)
    return paths, downlink_paths(paths, cfg, channel_rng)


def run_trial(spec, value_index, trial):
    """Every estimator on one shared channel draw and one shared noise draw"""
    value = spec.values[value_index]
    cfg, snr_db = spec.point(value)
    user = trial % cfg.K
    paths, paths_dl = trial_paths(spec, cfg, trial)
    alloc = allocate_pilots(cfg, spec.pilot_layout, spec.zc_root)
    H = channel_matrix(paths, cfg)
    obs = observe_uplink(H, alloc, user, snr_db, _rng(spec.seed, trial, value_index), seed=spec.seed)
    digest = obs.digest()
    paired = replace(spec, uplink=with_noise_variance(spec.uplink, obs.noise_variance),
                     baseline=with_noise_variance(spec.baseline, obs.noise_variance))

    rows = []
    for name in spec.estimators:
        row = MetricRow(float(value), name, trial, user, obs_hash=digest)
        start = time.perf_counter()
        try:
            est = run_estimator(name, obs, cfg, paired)
        except NoPathsDetected:
            angles = match_angles(paths, np.empty(0), cfg)
            row.mse_phi, row.missed = angles.error, angles.missed
            row.mse_tau = match_delays(paths, np.empty(0), cfg).error
            row.nmse_ul = row.nmse_dl = 1.0
            rows.append(row)
            continue
        except Exception as exc:
            logger.exception(f"{name} failed at {spec.axis}={value}, trial {trial}: {exc}")
            row.failed = 1
            rows.append(row)
            continue
        if spec.timing:
            row.wall_time = time.perf_counter() - start
        angles = match_angles(paths, est, cfg)
        row.p_hat = est.P_hat
        row.mse_phi, row.missed, row.false_alarms = angles
        row.mse_tau = match_delays(paths, est, cfg).error
        row.nmse_ul = nmse(H, est.H_hat)
        doa = est.diagnostics.get('doa', {})
        row.iterations = int(doa.get('iterations', 0))
        row.converged = int(bool(doa.get('converged', False)))
        if spec.downlink:
            try:
                dl = estimate_downlink(est, paths_dl, snr_db, _rng(spec.seed, trial, value_index, 1), cfg,
                                       obs.subcarriers, spec.reciprocity)
                row.nmse_dl = nmse(downlink_row(paths_dl, cfg), dl.H_dl_hat)
            except Exception as exc:
                logger.warning(f"{name} downlink failed at {spec.axis}={value}, trial {trial}: {exc}")
        rows.append(row)
    return rows


def run_sweep(spec, sink=None, workers=1):
    """Run the sweep value by value; rows are handed to ``sink`` as each value completes

    Rows are ordered by (value, estimator, trial) regardless of ``workers``.
    """
    errors = spec.validate()
    if errors:
        raise ConfigError(errors)
    table = []
    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for value_index, value in enumerate(spec.values):
            task = partial(run_trial, spec, value_index)
            trials = range(spec.trials)
            results = executor.map(task, trials) if executor else map(task, trials)
            rows = [row for batch in results for row in batch]
            rows.sort(key=lambda r: (spec.estimators.index(r.estimator), r.trial))
            logger.info(f"{spec.axis}={value}: {len(rows)} rows, {sum(r.failed for r in rows)} failed")
            if sink is not None:
                sink(rows)
            table.extend(rows)
    finally:
        if executor:
            executor.shutdown()
    return table


def _row_dict(row):
    return asdict(row) if isinstance(row, MetricRow) else row


SUMMARY_METRICS = ('mse_phi', 'mse_tau', 'nmse_ul', 'nmse_dl', 'p_hat', 'missed', 'false_alarms',
                   'iterations', 'wall_time')


def aggregate(rows, confidence=0.95):
    """Per (value, estimator) means with t-interval half-widths over successful trials"""
    groups = {}
    for row in map(_row_dict, rows):
        groups.setdefault((float(row['value']), row['estimator']), []).append(row)
    summary = []
    for (value, estimator), members in sorted(groups.items(), key=lambda kv: kv[0]):
        ok = [r for r in members if not int(r['failed'])]
        entry = {'value': value, 'estimator': estimator, 'trials': len(members),
                 'failures': len(members) - len(ok)}
        for metric in SUMMARY_METRICS:
            data = np.array([float(r[metric]) for r in ok if metric in r], dtype=float)
            data = data[np.isfinite(data)]
            if data.size == 0:
                continue
            entry[metric] = float(data.mean())
            if data.size > 1:
                spread = data.std(ddof=1) / np.sqrt(data.size)
                entry[f'{metric}_ci'] = float(student_t.ppf(0.5 + confidence / 2, data.size - 1) * spread)
            else:
                entry[f'{metric}_ci'] = 0.0
        summary.append(entry)
    return summary
