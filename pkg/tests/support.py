"""Small systems and channel builders shared by the tests"""
import numpy as np

from app.models import PathSet, SystemConfig, allocate_pilots, channel_matrix, observe_uplink
from app.sparse_core import IrlsOptions


def small_config(**changes):
    """16 antennas, 32 subcarriers, 4 users: T = 8 pilots, fs = 1 GHz"""
    values = dict(M=16, N=32, K=4, f0=1e9 / 32)
    values.update(changes)
    return SystemConfig(**values)


def observe(paths, cfg, user=0, snr_db=np.inf, seed=0, bse=True):
    H = channel_matrix(paths, cfg, bse=bse)
    alloc = allocate_pilots(cfg)
    obs = observe_uplink(H, alloc, user, snr_db, np.random.default_rng(seed), seed=seed)
    return obs, H


def paths(phi, tau_cells, beta, cfg):
    """PathSet with delays given in cells of 1/(N f0)"""
    return PathSet(phi, np.asarray(tau_cells, dtype=float) * cfg.delay_cell, beta)


def fast_options(L, **changes):
    return IrlsOptions(L_initial=L, max_iterations=200).replace(**changes)
