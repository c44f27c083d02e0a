"""Reading and writing observations, estimates and metric tables"""
from __future__ import annotations

import csv
import json
import logging
import os

import numpy as np
from openpyxl import Workbook

from app.errors import DimensionError
from app.models import Observation, PathSet, SystemConfig

logger = logging.getLogger(__name__)

INT_COLUMNS = {'trial', 'user', 'p_hat', 'missed', 'false_alarms', 'iterations', 'converged', 'failed'}
TEXT_COLUMNS = {'estimator', 'obs_hash'}


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def save_observation(path, obs, cfg, truth=None, H=None):
    """Store one observation (and optionally its ground truth) as .npz"""
    _ensure_parent(path)
    arrays = {
        'Y': obs.Y,
        'subcarriers': obs.subcarriers,
        'pilots': obs.pilots,
        'user': np.int64(obs.user),
        'snr_db': np.float64(obs.snr_db),
        'noise_variance': np.float64(obs.noise_variance),
        'seed': np.int64(-1 if obs.seed is None else obs.seed),
        'config': np.array(json.dumps(cfg.to_dict())),
    }
    if truth is not None:
        arrays.update(phi=truth.phi, tau=truth.tau, beta=truth.beta)
    if H is not None:
        arrays['H'] = getattr(H, 'H', H)
    with open(path, 'wb') as handle:
        np.savez(handle, **arrays)
    logger.info(f"saved observation of user {obs.user} to {path}")


def load_observation(path):
    """Return (observation, config, truth or None, H or None)"""
    with np.load(path, allow_pickle=False) as data:
        missing = [k for k in ('Y', 'subcarriers', 'pilots', 'config') if k not in data]
        if missing:
            raise DimensionError(f"{path} lacks {', '.join(missing)}")
        cfg = SystemConfig.from_dict(json.loads(str(data['config'])))
        seed = int(data['seed']) if 'seed' in data else -1
        obs = Observation(data['Y'], data['subcarriers'], data['pilots'], user=int(data['user']),
                          snr_db=float(data['snr_db']), seed=None if seed < 0 else seed,
                          noise_variance=float(data['noise_variance']))
        truth = PathSet(data['phi'], data['tau'], data['beta']) if 'phi' in data else None
        H = np.array(data['H']) if 'H' in data else None
    obs.check(cfg)
    return obs, cfg, truth, H


def write_json(path, payload):
    _ensure_parent(path)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)


class RowWriter:
    """Append metric rows to a CSV file with a single header line"""

    def __init__(self, path, columns):
        _ensure_parent(path)
        self.path = path
        self.columns = list(columns)
        self.handle = open(path, 'w', encoding='utf-8', newline='')
        self.writer = csv.DictWriter(self.handle, fieldnames=self.columns, extrasaction='ignore',
                                     lineterminator='\n')
        self.writer.writeheader()

    def __call__(self, rows):
        for row in rows:
            self.writer.writerow(row if isinstance(row, dict) else vars(row))
        self.handle.flush()

    def close(self):
        self.handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_rows(path):
    """Metric rows from CSV with their numeric columns restored"""
    rows = []
    with open(path, encoding='utf-8', newline='') as handle:
        for raw in csv.DictReader(handle):
            row = {}
            for key, text in raw.items():
                if key in TEXT_COLUMNS:
                    row[key] = text
                elif key in INT_COLUMNS:
                    row[key] = int(text)
                else:
                    row[key] = float(text)
            rows.append(row)
    return rows


def write_summary_csv(path, summary):
    columns = []
    for entry in summary:
        columns.extend(k for k in entry if k not in columns)
    with RowWriter(path, columns) as writer:
        writer(summary)


def write_workbook(path, summary, metrics=('mse_phi', 'mse_tau', 'nmse_ul', 'nmse_dl')):
    """One sheet per metric: sweep values down, estimators across"""
    _ensure_parent(path)
    wb = Workbook()
    wb.remove(wb.active)
    values = sorted({e['value'] for e in summary})
    estimators = list(dict.fromkeys(e['estimator'] for e in summary))
    lookup = {(e['value'], e['estimator']): e for e in summary}
    for metric in metrics:
        ws = wb.create_sheet(metric)
        ws.append(['value'] + estimators)
        for value in values:
            ws.append([value] + [lookup.get((value, name), {}).get(metric) for name in estimators])
    ws = wb.create_sheet('summary')
    columns = []
    for entry in summary:
        columns.extend(k for k in entry if k not in columns)
    ws.append(columns)
    for entry in summary:
        ws.append([entry.get(c) for c in columns])
    wb.save(path)
    logger.info(f"wrote workbook {path}")
