"""Uplink DOA estimation: block IRLS over the beam-squint angle dictionary"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from app.dictionary import DoaFamily
from app.sparse_core import IrlsDiagnostics, IrlsOptions, run_irls

logger = logging.getLogger(__name__)


@dataclass
class DoaEstimate:
    """Recovered normalized DOAs (ascending) and their T-long block coefficients"""
    phi_hat: np.ndarray
    x_blocks: np.ndarray
    diagnostics: IrlsDiagnostics = field(default_factory=IrlsDiagnostics)

    @property
    def P_hat(self):
        return len(self.phi_hat)


def estimate_doas(obs, cfg, options=None, bse=True):
    """Run block IRLS on vec(Y^T) with blocks of size T

    With ``bse=False`` the rotation matrices are dropped and the dictionary
    is the frequency-independent one.
    """
    obs.check(cfg)
    options = options or IrlsOptions()
    family = DoaFamily(cfg, obs.subcarriers, bse=bse)
    grid, x, diagnostics = run_irls(family, obs.Y.T, options)
    logger.info(f"user {obs.user}: {len(grid)} angles after {diagnostics.iterations} iterations")
    return DoaEstimate(grid, x, diagnostics)
