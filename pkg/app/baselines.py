"""Competing estimators: on-grid block OMP, grid refinement and squint-blind IRLS"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from app.delay import DelayEstimate, estimate_delays
from app.dictionary import DelayFamily, DoaFamily
from app.doa import DoaEstimate, estimate_doas
from app.errors import NoPathsDetected
from app.models import wrap_angle
from app.reconstruct import assemble_uplink
from app.sparse_core import IrlsDiagnostics, IrlsOptions, run_irls

logger = logging.getLogger(__name__)


class BaselineKind(str, enum.Enum):
    ONGRID = 'ongrid'
    REFINE = 'refine'
    NOBSE = 'nobse'
    NOMMV = 'nommv'


@dataclass(frozen=True)
class BaselineOptions:
    """Competitor settings

    ``noise_variance`` drives the OMP stopping rule; ``None`` stops only on
    ``max_blocks`` or an exact fit.
    """
    L_doa: int = 128
    L_delay: int = 128
    max_blocks: int = 8
    levels: int = 4
    noise_variance: float | None = None
    delay_span: float = 1.0
    irls: IrlsOptions = field(default_factory=IrlsOptions)
    delay: IrlsOptions = field(default_factory=IrlsOptions)


def omp_stop_energy(noise_variance, rows):
    """xi^2 = sigma^2 n (1 + 2/sqrt(n)) for n observed entries"""
    return noise_variance * rows * (1 + 2 / np.sqrt(rows))


def block_omp(dictionary, y, noise_variance=None, max_blocks=8):
    """Greedy block selection with a least-squares refit on the active blocks

    Returns:
        (support, x): selected block indices in selection order and their
        len(support) x B coefficients
    """
    Yb = dictionary.arrange(y)
    y_energy = float(np.vdot(Yb, Yb).real)
    if y_energy == 0:
        raise NoPathsDetected("observation is identically zero")
    if noise_variance:
        stop = omp_stop_energy(noise_variance, Yb.size)
    else:
        stop = 1e-20 * y_energy
    A = dictionary.gains.transpose(1, 2, 0)  # (B, R, L)
    support = []
    x = np.zeros((0, dictionary.B), dtype=complex)
    residual = Yb
    while len(support) < min(max_blocks, dictionary.L) and np.vdot(residual, residual).real > stop:
        energy = np.sum(np.abs(dictionary.adjoint(residual)) ** 2, axis=1)
        energy[support] = -np.inf
        support.append(int(np.argmax(energy)))
        x = np.empty((len(support), dictionary.B), dtype=complex)
        for b in range(dictionary.B):
            x[:, b] = np.linalg.lstsq(A[b][:, support], Yb[b], rcond=None)[0]
        residual = Yb - dictionary.take(support).apply(x)
    if not support:
        raise NoPathsDetected("observation energy is below the OMP stopping level")
    return support, x


def _omp_on_grid(family, Yb, grid, noise_variance, max_blocks):
    dictionary = family(grid)
    support, x = block_omp(dictionary, Yb, noise_variance, max_blocks)
    return grid[support], x


def refine_support(family, Yb, grid, cell, levels, noise_variance=None, max_blocks=8):
    """Block OMP on a coarse grid, then ``levels`` rounds of local re-selection

    Each round searches a grid of spacing cell/2 within one coarse cell of
    every selected point, then halves the cell.
    """
    points, x = _omp_on_grid(family, Yb, np.asarray(grid, dtype=float), noise_variance, max_blocks)
    count = len(points)
    for level in range(levels):
        cell = cell / 2
        offsets = cell * np.arange(-2, 3)
        local = np.unique(family.project((points[:, None] + offsets[None, :]).ravel()))
        points, x = _omp_on_grid(family, Yb, local, noise_variance, count)
    order = np.argsort(points)
    return points[order], x[order]


def ongrid_block_omp(obs, cfg, L=128, max_blocks=8, noise_variance=None, bse=True):
    """Angles restricted to the uniform grid of size L"""
    family = DoaFamily(cfg, obs.subcarriers, bse=bse)
    noise_variance = obs.noise_variance if noise_variance is None else noise_variance
    points, x = refine_support(family, obs.Y.T, family.initial_grid(L), family.cell(L), 0,
                               noise_variance, max_blocks)
    return DoaEstimate(points, x, IrlsDiagnostics(iterations=len(points), converged=True))


def grid_refinement(obs, cfg, options=None):
    options = options or BaselineOptions()
    family = DoaFamily(cfg, obs.subcarriers)
    noise_variance = obs.noise_variance if options.noise_variance is None else options.noise_variance
    points, x = refine_support(family, obs.Y.T, family.initial_grid(options.L_doa), family.cell(options.L_doa),
                               options.levels, noise_variance, options.max_blocks)
    return DoaEstimate(points, x, IrlsDiagnostics(iterations=options.levels + 1, converged=True))


def offgrid_no_bse(obs, cfg, options=None):
    """Proposed engine with the frequency-independent angle dictionary"""
    options = options or BaselineOptions()
    return estimate_doas(obs, cfg, options.irls, bse=False)


def _circular_clusters(angles, width):
    order = np.argsort(angles)
    angles = np.asarray(angles)[order]
    clusters = [[order[0]]]
    for prev, cur, idx in zip(angles[:-1], angles[1:], order[1:]):
        if cur - prev < width:
            clusters[-1].append(idx)
        else:
            clusters.append([idx])
    if len(clusters) > 1 and angles[0] + 2 * np.pi - angles[-1] < width:
        clusters[0] = clusters.pop() + clusters[0]
    return clusters


def offgrid_no_mmv(obs, cfg, options=None):
    """Each pilot subcarrier solved on its own (blocks of size 1), angles then clustered

    A cluster is kept when at least half the subcarriers report an angle in
    it; its estimate is the circular mean of the members weighted by their
    coefficient energy.
    """
    options = options or BaselineOptions()
    angles, coefficients, slots = [], [], []
    for q, n in enumerate(obs.subcarriers):
        family = DoaFamily(cfg, [n], bse=False)
        try:
            grid, x, _ = run_irls(family, obs.Y[:, q][None, :], options.irls)
        except NoPathsDetected:
            continue
        angles.extend(grid)
        coefficients.extend(x[:, 0])
        slots.extend([q] * len(grid))
    if not angles:
        raise NoPathsDetected("no subcarrier produced an angle")
    angles = np.asarray(angles)
    coefficients = np.asarray(coefficients)
    phi_hat, blocks = [], []
    for members in _circular_clusters(angles, 2 * np.pi / cfg.M):
        if len({slots[i] for i in members}) < max(1, obs.T / 2):
            continue
        energy = np.abs(coefficients[members]) ** 2
        phi_hat.append(float(np.angle(np.sum(energy * np.exp(1j * angles[members])))))
        block = np.zeros(obs.T, dtype=complex)
        for i in members:
            block[slots[i]] = coefficients[i]
        blocks.append(block)
    if not phi_hat:
        raise NoPathsDetected("no angle was reported consistently across subcarriers")
    phi_hat = wrap_angle(phi_hat)
    order = np.argsort(phi_hat)
    return DoaEstimate(phi_hat[order], np.asarray(blocks)[order], IrlsDiagnostics(converged=True))


def _omp_delays(obs, cfg, options, noise_variance, levels, max_blocks):
    family = DelayFamily(cfg, obs.subcarriers, span=options.delay_span)
    points, x = refine_support(family, obs.compensated(), family.initial_grid(options.L_delay),
                               family.cell(options.L_delay), levels, noise_variance, max_blocks)
    return DelayEstimate(points, x)


def estimate_uplink_baseline(kind, obs, cfg, options=None):
    """End-to-end uplink estimate using a competitor for the angles (and delays)

    Grid-based competitors use their own method for delays too; squint-blind
    ones reuse the proposed delay stage and rebuild with the frequency
    independent model. No joint polishing is applied.
    """
    kind = BaselineKind(kind)
    options = options or BaselineOptions()
    noise_variance = obs.noise_variance if options.noise_variance is None else options.noise_variance
    bse = kind in (BaselineKind.ONGRID, BaselineKind.REFINE)
    if kind is BaselineKind.ONGRID:
        doa = ongrid_block_omp(obs, cfg, options.L_doa, options.max_blocks, noise_variance)
    elif kind is BaselineKind.REFINE:
        doa = grid_refinement(obs, cfg, options)
    elif kind is BaselineKind.NOBSE:
        doa = offgrid_no_bse(obs, cfg, options)
    else:
        doa = offgrid_no_mmv(obs, cfg, options)

    if bse:
        levels = 0 if kind is BaselineKind.ONGRID else options.levels
        delays = _omp_delays(obs, cfg, options, noise_variance, levels, options.max_blocks)
        mismatch = delays.P_hat != doa.P_hat
        if mismatch:
            delays = _omp_delays(obs, cfg, options, 0.0, levels, doa.P_hat)
    else:
        delays = estimate_delays(obs, cfg, options.delay, span=options.delay_span)
        mismatch = delays.P_hat != doa.P_hat
        if mismatch:
            forced = options.delay.replace(keep_blocks=min(doa.P_hat, options.delay.L_initial))
            delays = estimate_delays(obs, cfg, forced, span=options.delay_span)
    return assemble_uplink(doa.phi_hat, delays.tau_hat, obs, cfg, bse=bse, polish=False, mismatch=mismatch,
                           diagnostics={'doa': doa.diagnostics.to_dict()})
