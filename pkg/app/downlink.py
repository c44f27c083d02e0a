"""FDD downlink estimation through angle-delay reciprocity"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lstsq, pinv

from app.errors import DimensionError, PilotError, SquintError
from app.models import PathSet, complex_noise, noise_variance, path_signature

logger = logging.getLogger(__name__)

RECIPROCITY_MODES = ('physical', 'numeric')
FEEDBACK_DTYPE = np.dtype('<f8')
LEAKAGE_RCOND = 1e-10


@dataclass(frozen=True)
class DownlinkParams:
    """Downlink normalized DODs (at fc_dl) and delays shared with the uplink"""
    phi: np.ndarray
    tau: np.ndarray

    @property
    def P(self):
        return len(self.phi)

    @property
    def pairs(self):
        return list(zip(np.asarray(self.phi).tolist(), np.asarray(self.tau).tolist()))


@dataclass
class DownlinkEstimate:
    params: DownlinkParams
    beta_dl_hat: np.ndarray
    H_dl_hat: np.ndarray
    feedback_payload: bytes

    @property
    def P_hat(self):
        return self.params.P


def _scale_angles(phi, cfg, mode):
    phi = np.asarray(phi, dtype=float)
    if mode == 'numeric':
        return phi.copy()
    if mode != 'physical':
        raise DimensionError(f"unknown reciprocity mode {mode!r}")
    if np.any(np.abs(phi) > 2 * np.pi * cfg.d_over_lambda * (1 + 1e-12)):
        raise SquintError("uplink angle has no physical direction for this antenna spacing")
    # d is fixed in meters, so the phase step scales with the carrier
    return phi * cfg.fc_dl / cfg.fc_ul


def reciprocal_params(uplink, cfg, mode='physical'):
    """Carry angles, delays and path count from an uplink estimate to the downlink"""
    return DownlinkParams(_scale_angles(uplink.phi, cfg, mode), np.asarray(uplink.tau, dtype=float).copy())


def downlink_paths(paths_ul, cfg, rng):
    """True downlink paths: same directions and delays, fresh CN(0,1) gains"""
    beta = (rng.standard_normal(paths_ul.P) + 1j * rng.standard_normal(paths_ul.P)) / np.sqrt(2)
    return PathSet(_scale_angles(paths_ul.phi, cfg, 'physical'), paths_ul.tau, beta)


def beamforming_matrix(params, cfg, subcarriers):
    """Column p is vec(Xi_dl(phi_p, tau_p) on the pilots) / (M T)"""
    T = len(subcarriers)
    columns = [path_signature(phi, tau, cfg, subcarriers, carrier='downlink').reshape(-1, order='F')
               for phi, tau in params.pairs]
    if not columns:
        return np.zeros((cfg.M * T, 0), dtype=complex)
    return np.column_stack(columns) / (cfg.M * T)


def downlink_pilots(P, T):
    """P orthonormal rows of the unitary T-point DFT"""
    if P > T:
        raise PilotError(f"{P} paths need more than the {T} pilot subcarriers")
    if P < 1:
        raise PilotError("at least one path is needed")
    p = np.arange(P)[:, None]
    q = np.arange(T)[None, :]
    return np.exp(-2j * np.pi * p * q / T) / np.sqrt(T)


def downlink_row(paths, cfg, subcarriers=None):
    """Stacked downlink channel (sum_p beta_p vec Xi_p)^H as a 1 x (M n) row"""
    n = np.arange(cfg.N) if subcarriers is None else np.asarray(subcarriers)
    h = np.zeros(cfg.M * len(n), dtype=complex)
    for phi, tau, beta in zip(paths.phi, paths.tau, paths.beta):
        h += beta * path_signature(phi, tau, cfg, n, carrier='downlink').reshape(-1, order='F')
    return h.conj()[None, :]


def observe_downlink(true_dl, F, S_dl, snr_db, rng, cfg, subcarriers):
    """Pilot row received by the user: y = H_dl F S_dl + e

    Each subcarrier q is beamformed independently with weight T F_q, so the
    per-subcarrier beam toward path p is Xi_dl[:, q] / M.
    """
    T = len(subcarriers)
    M = cfg.M
    H = np.zeros((M, T), dtype=complex)
    for phi, tau, beta in zip(true_dl.phi, true_dl.tau, true_dl.beta):
        H += beta * path_signature(phi, tau, cfg, subcarriers, carrier='downlink')
    W = T * F.reshape(M, T, F.shape[1], order='F')
    y = np.einsum('mq,mqp,pq->q', H.conj(), W, S_dl)
    sigma2 = noise_variance(snr_db)
    if sigma2 > 0:
        y = y + complex_noise(rng, y.shape, sigma2)
    return y


def estimate_downlink_gains(y_dl, S_dl):
    """beta^H = y S^+"""
    return (np.asarray(y_dl)[None, :] @ pinv(S_dl))[0].conj()


def leakage_matrix(params, F, S_dl, cfg, subcarriers):
    """Lambda[k, j]: share of path k's gain in the j-th least-squares output

    Evaluated on the signatures the base station assumes, so it is exact when
    the reciprocal parameters are. Beams overlap whenever the paths'
    signatures are not orthogonal on the pilot subcarriers.
    """
    M, T = cfg.M, len(subcarriers)
    xi = np.stack([path_signature(phi, tau, cfg, subcarriers, carrier='downlink')
                   for phi, tau in params.pairs])  # (P, M, T)
    W = T * F.reshape(M, T, F.shape[1], order='F')
    G = np.einsum('kmq,mqp->kpq', xi.conj(), W)
    return np.einsum('kpq,pq,jq->kj', G, S_dl, S_dl.conj())


def correct_leakage(beta_fed_back, leakage):
    """Undo the beam overlap: conj(beta) solves Lambda^T conj(beta) = conj(beta_fed_back)"""
    z = np.conj(np.asarray(beta_fed_back, dtype=complex))
    solution, _, _, _ = lstsq(leakage.T, z, cond=LEAKAGE_RCOND)
    return solution.conj()


def encode_feedback(beta):
    """P complex gains as little-endian float64 (real, imag) pairs"""
    beta = np.asarray(beta, dtype=complex)
    return np.column_stack([beta.real, beta.imag]).astype(FEEDBACK_DTYPE).tobytes()


def decode_feedback(payload):
    pairs = np.frombuffer(payload, dtype=FEEDBACK_DTYPE).reshape(-1, 2)
    return pairs[:, 0] + 1j * pairs[:, 1]


def estimate_downlink(uplink, true_dl, snr_db, rng, cfg, subcarriers, mode='physical'):
    """Reciprocal parameters, beamformed pilots, gain feedback and reconstruction

    The base station rebuilds the channel from the uplink-derived parameters
    and the decoded feedback only, after removing the overlap between beams.
    """
    params = reciprocal_params(uplink, cfg, mode)
    subcarriers = np.asarray(subcarriers)
    F = beamforming_matrix(params, cfg, subcarriers)
    S_dl = downlink_pilots(params.P, len(subcarriers))
    y = observe_downlink(true_dl, F, S_dl, snr_db, rng, cfg, subcarriers)
    payload = encode_feedback(estimate_downlink_gains(y, S_dl))

    beta = correct_leakage(decode_feedback(payload), leakage_matrix(params, F, S_dl, cfg, subcarriers))
    H = downlink_row(PathSet(params.phi, params.tau, beta), cfg)
    logger.debug(f"downlink feedback of {params.P} gains ({len(payload)} bytes)")
    return DownlinkEstimate(params, beta, H, payload)
