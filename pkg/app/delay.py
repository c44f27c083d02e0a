"""Uplink delay estimation: block IRLS over the delay dictionary"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from app.dictionary import DelayFamily
from app.sparse_core import IrlsDiagnostics, IrlsOptions, run_irls

logger = logging.getLogger(__name__)


@dataclass
class DelayEstimate:
    """Recovered delays in seconds (ascending) and their M-long block coefficients

    Under beam squint the delays refer to the array centroid; pairing with an
    angle turns them into antenna-0 delays.
    """
    tau_hat: np.ndarray
    x_blocks: np.ndarray
    diagnostics: IrlsDiagnostics = field(default_factory=IrlsDiagnostics)

    @property
    def P_hat(self):
        return len(self.tau_hat)


def estimate_delays(obs, cfg, options=None, span=1.0):
    """Run block IRLS on vec(Y S^-1) with blocks of size M

    The initial grid covers ``span`` delay cells of 1/(N f0).
    """
    obs.check(cfg)
    options = options or IrlsOptions()
    family = DelayFamily(cfg, obs.subcarriers, span=span)
    grid, x, diagnostics = run_irls(family, obs.compensated(), options)
    logger.info(f"user {obs.user}: {len(grid)} delays after {diagnostics.iterations} iterations")
    return DelayEstimate(grid, x, diagnostics)
