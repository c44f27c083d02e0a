"""Pairing of angles with delays, gain recovery and uplink reconstruction"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lstsq
from scipy.optimize import least_squares

from app.delay import estimate_delays
from app.doa import estimate_doas
from app.models import ChannelMatrix, centroid_delay, path_signature, signature_exponent, wrap_angle
from app.sparse_core import IrlsOptions

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10
DUPLICATE_CORRELATION = 1 - 1e-9


@dataclass(frozen=True)
class UplinkOptions:
    """Settings for the end-to-end uplink estimator"""
    doa: IrlsOptions = field(default_factory=IrlsOptions)
    delay: IrlsOptions = field(default_factory=IrlsOptions)
    delay_span: float = 1.0
    polish: bool = False
    bse: bool = True


@dataclass
class UplinkEstimate:
    phi: np.ndarray
    tau: np.ndarray
    beta_hat: np.ndarray
    H_hat: ChannelMatrix
    residual: float
    stage_mismatch: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def P_hat(self):
        return len(self.phi)

    @property
    def pairs(self):
        return list(zip(self.phi.tolist(), self.tau.tolist()))

    def to_dict(self):
        return {
            'P_hat': self.P_hat,
            'phi': self.phi.tolist(),
            'tau': self.tau.tolist(),
            'beta_hat': [[b.real, b.imag] for b in self.beta_hat],
            'residual': self.residual,
            'stage_mismatch': self.stage_mismatch,
            'diagnostics': self.diagnostics,
        }


def _angle_responses(phi, cfg, subcarriers, bse):
    """(P, M, T) array of exp(-j m (1 + n f0/fc) phi_p)"""
    exponent = signature_exponent(cfg, subcarriers, bse=bse)
    return np.exp(-1j * exponent[None, :, :] * np.asarray(phi)[:, None, None])


def _delay_responses(tau, cfg, subcarriers):
    """(P, T) array of exp(-j 2 pi n f0 tau_p)"""
    return np.exp(-2j * np.pi * np.outer(tau, subcarriers * cfg.f0))


def _centroid_shift(phi, cfg, bse):
    return centroid_delay(phi, cfg) if bse else np.zeros_like(np.asarray(phi, dtype=float))


def reference_delay(phi, tau_hat, cfg, bse=True):
    """Antenna-0 delay of a path whose delay was fitted over the whole array

    The delay stage locks onto the array centroid, which trails antenna 0 by
    (M-1) phi / (4 pi fc) under beam squint. The squint-blind model has no
    such offset.
    """
    upper = np.nextafter(1.0 / cfg.f0, 0.0)
    return np.clip(np.asarray(tau_hat, dtype=float) - _centroid_shift(phi, cfg, bse), 0.0, upper)


def pairing_scores(phi_hat, tau_hat, obs, cfg, bse=True):
    """|<vec Xi(phi_i, tau_j - c(phi_i)), vec(Y S^-1)>| on the pilot subcarriers

    ``tau_hat`` are delay-stage (array-centroid) delays and c is the centroid
    offset of ``reference_delay``.
    """
    Z = obs.compensated()
    A = _angle_responses(phi_hat, cfg, obs.subcarriers, bse)
    C = np.einsum('imq,mq->iq', A.conj(), Z)
    C = C * _delay_responses(-_centroid_shift(phi_hat, cfg, bse), cfg, obs.subcarriers).conj()
    return np.abs(C @ _delay_responses(tau_hat, cfg, obs.subcarriers).conj().T)


def _bind(phi_hat, tau_hat, matches, cfg, bse):
    return [(float(phi_hat[i]), float(reference_delay(phi_hat[i], tau_hat[j], cfg, bse)))
            for i, j in matches]


def pair_paths(phi_hat, tau_hat, obs, cfg, bse=True):
    """Greedy matching: bind the best-scoring (angle, delay) pair, remove both, repeat

    Mismatched counts yield min(len(phi_hat), len(tau_hat)) pairs. The
    returned delays refer to antenna 0.
    """
    phi_hat = np.asarray(phi_hat, dtype=float)
    tau_hat = np.asarray(tau_hat, dtype=float)
    if len(phi_hat) != len(tau_hat):
        logger.warning(f"pairing {len(phi_hat)} angles with {len(tau_hat)} delays")
    scores = pairing_scores(phi_hat, tau_hat, obs, cfg, bse)
    matches = []
    for _ in range(min(len(phi_hat), len(tau_hat))):
        i, j = np.unravel_index(np.argmax(scores), scores.shape)
        matches.append((i, j))
        scores[i, :] = -np.inf
        scores[:, j] = -np.inf
    return _bind(phi_hat, tau_hat, matches, cfg, bse)


def exhaustive_pairing(phi_hat, tau_hat, obs, cfg, bse=True):
    """Matching that maximizes the summed score over every permutation"""
    phi_hat = np.asarray(phi_hat, dtype=float)
    tau_hat = np.asarray(tau_hat, dtype=float)
    scores = pairing_scores(phi_hat, tau_hat, obs, cfg, bse)
    P = min(scores.shape)
    best, best_value = None, -np.inf
    for rows in itertools.permutations(range(scores.shape[0]), P):
        for cols in itertools.permutations(range(scores.shape[1]), P):
            value = scores[list(rows), list(cols)].sum()
            if value > best_value:
                best, best_value = (rows, cols), value
    return _bind(phi_hat, tau_hat, zip(*best), cfg, bse)


def gain_matrix(pairs, cfg, subcarriers, bse=True):
    """Columns vec(Xi(phi_p, tau_p)) restricted to the pilot subcarriers"""
    if not pairs:
        return np.zeros((cfg.M * len(subcarriers), 0), dtype=complex)
    return np.column_stack([path_signature(phi, tau, cfg, subcarriers, bse=bse).reshape(-1, order='F')
                            for phi, tau in pairs])


def _duplicate_columns(B):
    norms = np.linalg.norm(B, axis=0)
    duplicate = np.zeros(B.shape[1], dtype=bool)
    for j in range(B.shape[1]):
        for i in range(j):
            if duplicate[i]:
                continue
            corr = abs(np.vdot(B[:, i], B[:, j])) / (norms[i] * norms[j])
            if corr >= DUPLICATE_CORRELATION:
                duplicate[j] = True
                break
    return duplicate


def estimate_gains(pairs, obs, cfg, bse=True):
    """Least-squares gains beta = B^+ vec(Y S^-1)

    Near-duplicate pairs are merged: the later copy gets a zero gain and its
    twin carries the combined gain.
    """
    B = gain_matrix(pairs, cfg, obs.subcarriers, bse)
    beta = np.zeros(B.shape[1], dtype=complex)
    if B.shape[1] == 0:
        return beta
    duplicate = _duplicate_columns(B)
    if duplicate.any():
        logger.warning(f"merged {int(duplicate.sum())} duplicate pairs before the gain fit")
    z = obs.compensated().reshape(-1, order='F')
    solution, _, _, _ = lstsq(B[:, ~duplicate], z, cond=RANK_TOLERANCE)
    beta[~duplicate] = solution
    return beta


def rebuild_uplink(pairs, beta_hat, cfg, bse=True):
    """Sum of beta_p Xi(phi_p, tau_p) over all N subcarriers"""
    H = np.zeros((cfg.M, cfg.N), dtype=complex)
    for (phi, tau), beta in zip(pairs, beta_hat):
        H += beta * path_signature(phi, tau, cfg, bse=bse)
    return ChannelMatrix(H)


def _pack(phi, tau_cells, beta):
    return np.concatenate([phi, tau_cells, beta.real, beta.imag])


def _unpack(theta, P):
    phi, tau_cells, re, im = np.split(theta, [P, 2 * P, 3 * P])
    return phi, tau_cells, re + 1j * im


def polish_pairs(pairs, beta, obs, cfg, bse=True):
    """Jointly refine every (phi, tau, beta) by nonlinear least squares on the exact model

    Delays are refined in units of 1/(N f0). The refinement is kept only if
    it lowers the pilot residual.
    """
    if not pairs:
        return pairs, beta
    P = len(pairs)
    Z = obs.compensated()
    n = obs.subcarriers
    exponent = signature_exponent(cfg, n, bse=bse)  # (M, T)
    ramp = 2 * np.pi * n / cfg.N  # phase per delay cell

    def signatures(phi, tau_cells):
        return (np.exp(-1j * exponent[None] * phi[:, None, None])
                * np.exp(-1j * np.outer(tau_cells, ramp))[:, None, :])

    def residual(theta):
        phi, tau_cells, b = _unpack(theta, P)
        r = (Z - np.einsum('p,pmq->mq', b, signatures(phi, tau_cells))).reshape(-1)
        return np.concatenate([r.real, r.imag])

    def jacobian(theta):
        phi, tau_cells, b = _unpack(theta, P)
        xi = signatures(phi, tau_cells)
        cols = np.concatenate([
            (b[:, None, None] * 1j * exponent[None] * xi).reshape(P, -1),
            (b[:, None, None] * 1j * ramp[None, None, :] * xi).reshape(P, -1),
            -xi.reshape(P, -1),
            -1j * xi.reshape(P, -1),
        ]).T
        return np.concatenate([cols.real, cols.imag])

    phi0 = np.array([p[0] for p in pairs])
    tau0 = np.array([p[1] for p in pairs]) / cfg.delay_cell
    start = _pack(phi0, tau0, np.asarray(beta, dtype=complex))
    cost0 = 0.5 * np.sum(residual(start) ** 2)
    fit = least_squares(residual, start, jac=jacobian, method='lm', x_scale='jac')
    if not fit.cost < cost0:
        return pairs, beta
    phi, tau_cells, b = _unpack(fit.x, P)
    upper = np.nextafter(1.0 / cfg.f0, 0.0)
    tau = np.clip(tau_cells * cfg.delay_cell, 0.0, upper)
    logger.debug(f"polish lowered the pilot residual cost from {cost0:.4g} to {fit.cost:.4g}")
    return list(zip(wrap_angle(phi).tolist(), tau.tolist())), b


def pilot_residual(pairs, beta, obs, cfg, bse=True):
    """Relative residual ||vec(Y S^-1) - B beta|| / ||Y S^-1||"""
    z = obs.compensated().reshape(-1, order='F')
    r = z - gain_matrix(pairs, cfg, obs.subcarriers, bse) @ np.asarray(beta)
    return float(np.linalg.norm(r) / np.linalg.norm(z))


def assemble_uplink(doa_phi, delay_tau, obs, cfg, bse=True, polish=False, mismatch=False, diagnostics=None):
    """Pair, fit gains, optionally polish, and rebuild the full channel"""
    pairs = pair_paths(doa_phi, delay_tau, obs, cfg, bse)
    beta = estimate_gains(pairs, obs, cfg, bse)
    if polish:
        pairs, beta = polish_pairs(pairs, beta, obs, cfg, bse)
    phi = np.array([p[0] for p in pairs])
    tau = np.array([p[1] for p in pairs])
    return UplinkEstimate(phi, tau, np.asarray(beta, dtype=complex), rebuild_uplink(pairs, beta, cfg, bse),
                          pilot_residual(pairs, beta, obs, cfg, bse), mismatch, diagnostics or {})


def estimate_uplink(obs, cfg, options=None):
    """Angles, then delays, then pairing, gains and reconstruction

    When the two stages disagree on the path count the delay stage is re-run
    with the count forced to the angle stage's.
    """
    options = options or UplinkOptions()
    doa = estimate_doas(obs, cfg, options.doa, bse=options.bse)
    delays = estimate_delays(obs, cfg, options.delay, span=options.delay_span)
    mismatch = delays.P_hat != doa.P_hat
    if mismatch:
        logger.warning(f"user {obs.user}: {doa.P_hat} angles but {delays.P_hat} delays, forcing the delay count")
        forced = options.delay.replace(keep_blocks=min(doa.P_hat, options.delay.L_initial))
        delays = estimate_delays(obs, cfg, forced, span=options.delay_span)
    diagnostics = {'doa': doa.diagnostics.to_dict(), 'delay': delays.diagnostics.to_dict()}
    return assemble_uplink(doa.phi_hat, delays.tau_hat, obs, cfg, bse=options.bse, polish=options.polish,
                           mismatch=mismatch, diagnostics=diagnostics)
