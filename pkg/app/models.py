"""Physical-layer types and beam-squint channel synthesis"""
from __future__ import annotations

import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from app.errors import ConfigError, DimensionError, PilotError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0


def wrap_angle(phi):
    """Wrap angles onto [-pi, pi)"""
    return np.mod(np.asarray(phi, dtype=float) + np.pi, 2 * np.pi) - np.pi


def _require_finite(name, *values):
    for value in values:
        if not np.all(np.isfinite(value)):
            raise DimensionError(f"{name}: non-finite input")


@dataclass(frozen=True)
class SystemConfig:
    """Array, OFDM and carrier geometry shared by every operation

    Attributes:
        M: antenna count
        N: subcarrier count
        K: user count
        f0: subcarrier spacing in Hz
        fc_ul: uplink carrier in Hz
        fc_dl: downlink carrier in Hz
        d_over_lambda: antenna spacing in uplink wavelengths
    """
    M: int = 64
    N: int = 64
    K: int = 8
    f0: float = 1e9 / 64
    fc_ul: float = 60e9
    fc_dl: float = 61e9
    d_over_lambda: float = 0.5

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ConfigError(errors)

    def validate(self):
        """Return every violated constraint as a message"""
        errors = []
        for name in ('M', 'N', 'K'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                errors.append(f"{name} must be a positive integer, got {value!r}")
        for name in ('f0', 'fc_ul', 'fc_dl', 'd_over_lambda'):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                errors.append(f"{name} must be finite and positive, got {value!r}")
        if errors:
            return errors

        if self.K > self.N:
            errors.append(f"K={self.K} users exceed N={self.N} subcarriers")
        if self.M > 2 * self.N * self.fc_ul / self.fs:
            errors.append(f"M={self.M} exceeds 2*N*fc_ul/fs={2 * self.N * self.fc_ul / self.fs:.1f}")
        if (self.M - 1) / (2 * self.N) * self.fs / self.fc_ul >= 1:
            errors.append("aperture condition (M-1)/(2N)*fs/fc_ul < 1 violated")
        if self.d_over_lambda * self.fs / self.fc_ul >= 1:
            errors.append("spacing condition d*fs/(lambda_ul*fc_ul) < 1 violated")
        return errors

    @property
    def T(self):
        """Pilot subcarriers per user"""
        return self.N // self.K

    @property
    def fs(self):
        """Bandwidth (symbol rate) in Hz"""
        return self.N * self.f0

    @property
    def delay_cell(self):
        """Delay resolution 1/(N f0) in seconds"""
        return 1.0 / (self.N * self.f0)

    def carrier(self, which='uplink'):
        if which == 'uplink':
            return self.fc_ul
        if which == 'downlink':
            return self.fc_dl
        raise DimensionError(f"unknown carrier {which!r}")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_bandwidth(self, fs):
        """Same geometry with the subcarrier spacing set so that N*f0 = fs"""
        return self.replace(f0=float(fs) / self.N)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


@dataclass(frozen=True)
class PathSet:
    """Angles, delays and complex gains of one user's P paths"""
    phi: np.ndarray
    tau: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float)).copy()
        tau = np.atleast_1d(np.asarray(self.tau, dtype=float)).copy()
        beta = np.atleast_1d(np.asarray(self.beta, dtype=complex)).copy()
        if not (phi.ndim == tau.ndim == beta.ndim == 1) or not (len(phi) == len(tau) == len(beta)):
            raise DimensionError("phi, tau and beta must be vectors of equal length")
        _require_finite('PathSet', phi, tau, beta)
        for arr in (phi, tau, beta):
            arr.setflags(write=False)
        object.__setattr__(self, 'phi', phi)
        object.__setattr__(self, 'tau', tau)
        object.__setattr__(self, 'beta', beta)

    @property
    def P(self):
        return len(self.phi)

    def validate(self, cfg):
        """Return the violated PathSet invariants for the given config"""
        errors = []
        if np.any(self.phi < -np.pi) or np.any(self.phi >= np.pi):
            errors.append("angles must lie in [-pi, pi)")
        if np.any(self.tau < 0) or np.any(self.tau >= 1.0 / cfg.f0):
            errors.append("delays must lie in [0, 1/f0)")
        if len(np.unique(self.phi)) != self.P:
            errors.append("angles must be pairwise distinct")
        if len(np.unique(self.tau)) != self.P:
            errors.append("delays must be pairwise distinct")
        return errors

    def union(self, other):
        return PathSet(np.concatenate([self.phi, other.phi]),
                       np.concatenate([self.tau, other.tau]),
                       np.concatenate([self.beta, other.beta]))

    def with_gains(self, beta):
        return PathSet(self.phi, self.tau, beta)

    def subset(self, index):
        index = np.asarray(index)
        return PathSet(self.phi[index], self.tau[index], self.beta[index])


@dataclass(frozen=True)
class ChannelMatrix:
    """M x N complex channel over all subcarriers"""
    H: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        if H.ndim != 2:
            raise DimensionError("channel must be a matrix")
        object.__setattr__(self, 'H', H)

    @property
    def shape(self):
        return self.H.shape

    def columns(self, subcarriers):
        return self.H[:, np.asarray(subcarriers)]


@dataclass(frozen=True)
class PilotAllocation:
    """Disjoint subcarrier sets and unit-modulus pilots, one row per user"""
    sets: tuple
    pilots: tuple
    layout: str = 'comb'
    root: int = 1

    def __post_init__(self):
        sets = tuple(np.asarray(s, dtype=int) for s in self.sets)
        pilots = tuple(np.asarray(p, dtype=complex) for p in self.pilots)
        if len(sets) != len(pilots):
            raise DimensionError("one pilot sequence per subcarrier set is required")
        for s, p in zip(sets, pilots):
            if s.shape != p.shape:
                raise DimensionError("pilot length must match its subcarrier set")
        object.__setattr__(self, 'sets', sets)
        object.__setattr__(self, 'pilots', pilots)

    @property
    def K(self):
        return len(self.sets)

    def user(self, k):
        if not 0 <= k < self.K:
            raise DimensionError(f"user {k} outside 0..{self.K - 1}")
        return self.sets[k], self.pilots[k]

    def scaled(self, factor):
        """Same allocation with every pilot multiplied by ``factor``"""
        return dataclasses.replace(self, pilots=tuple(factor * p for p in self.pilots))


@dataclass(frozen=True)
class Observation:
    """Received pilots of one user: Y = H[:, sets_k] diag(s_k) + E"""
    Y: np.ndarray
    subcarriers: np.ndarray
    pilots: np.ndarray
    user: int = 0
    snr_db: float = float('inf')
    seed: int | None = None
    noise_variance: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=complex)
        subcarriers = np.asarray(self.subcarriers, dtype=int)
        pilots = np.asarray(self.pilots, dtype=complex)
        if Y.ndim != 2 or Y.shape[1] != len(subcarriers) or len(pilots) != len(subcarriers):
            raise DimensionError(f"observation {Y.shape} does not match {len(subcarriers)} pilot subcarriers")
        object.__setattr__(self, 'Y', Y)
        object.__setattr__(self, 'subcarriers', subcarriers)
        object.__setattr__(self, 'pilots', pilots)

    @property
    def M(self):
        return self.Y.shape[0]

    @property
    def T(self):
        return self.Y.shape[1]

    def check(self, cfg):
        if self.M != cfg.M or np.any(self.subcarriers < 0) or np.any(self.subcarriers >= cfg.N):
            raise DimensionError(f"observation {self.Y.shape} inconsistent with M={cfg.M}, N={cfg.N}")

    def compensated(self):
        """Pilot-compensated observation Y S^-1"""
        if np.any(np.abs(self.pilots) == 0):
            raise PilotError("pilot matrix is not invertible")
        return self.Y / self.pilots[None, :]

    def digest(self):
        """SHA-256 of the received samples"""
        return hashlib.sha256(np.ascontiguousarray(self.Y).tobytes()).hexdigest()


def steering_vector(phi, f, M, fc):
    """Wideband array response exp(-j m (1 + f/fc) phi), m = 0..M-1"""
    _require_finite('steering_vector', phi, f, fc)
    if M < 1 or fc <= 0:
        raise DimensionError("steering_vector needs M >= 1 and fc > 0")
    m = np.arange(M)
    return np.exp(-1j * m * ((1.0 + f / fc) * phi))


def delay_vector(tau, N, f0):
    """Subcarrier phase ramp exp(-j 2 pi n f0 tau), n = 0..N-1"""
    _require_finite('delay_vector', tau, f0)
    if N < 1 or f0 <= 0:
        raise DimensionError("delay_vector needs N >= 1 and f0 > 0")
    n = np.arange(N)
    return np.exp(-2j * np.pi * n * (f0 * tau))


def _subcarrier_index(cfg, subcarriers):
    if subcarriers is None:
        return np.arange(cfg.N)
    n = np.atleast_1d(np.asarray(subcarriers, dtype=int))
    if np.any(n < 0) or np.any(n >= cfg.N):
        raise DimensionError(f"subcarrier index outside 0..{cfg.N - 1}")
    return n


def wideband_factor_matrix(phi, cfg, carrier='uplink'):
    """Beam-squint factors exp(-j m (n f0/fc) phi) over all antennas and subcarriers"""
    _require_finite('wideband_factor_matrix', phi)
    fc = cfg.carrier(carrier)
    m = np.arange(cfg.M)
    n = np.arange(cfg.N)
    return np.exp(-1j * np.outer(m, n * cfg.f0 / fc) * phi)


def signature_exponent(cfg, subcarriers, carrier='uplink', bse=True):
    """Per-(antenna, subcarrier) angle multiplier m (1 + n f0/fc)"""
    n = _subcarrier_index(cfg, subcarriers)
    squint = n * cfg.f0 / cfg.carrier(carrier) if bse else np.zeros(len(n))
    return np.outer(np.arange(cfg.M), 1.0 + squint)


def path_signature(phi, tau, cfg, subcarriers=None, carrier='uplink', bse=True):
    """Contribution of one unit-gain path to the channel on the given subcarriers"""
    _require_finite('path_signature', phi, tau)
    n = _subcarrier_index(cfg, subcarriers)
    exponent = signature_exponent(cfg, n, carrier, bse)
    return np.exp(-1j * exponent * phi) * np.exp(-2j * np.pi * n * (cfg.f0 * tau))[None, :]


def signature_correlation(phi1, tau1, phi2, tau2, cfg):
    """Normalized inner product of two path signatures over all subcarriers"""
    xi1 = path_signature(phi1, tau1, cfg)
    xi2 = path_signature(phi2, tau2, cfg)
    return np.vdot(xi1, xi2) / (cfg.M * cfg.N)


def channel_matrix(paths, cfg, bse=True, carrier='uplink'):
    """Sum of beta_p times the path signature over all N subcarriers"""
    H = np.zeros((cfg.M, cfg.N), dtype=complex)
    for phi, tau, beta in zip(paths.phi, paths.tau, paths.beta):
        H += beta * path_signature(phi, tau, cfg, carrier=carrier, bse=bse)
    return ChannelMatrix(H)


def _min_circular_gap(values):
    if len(values) < 2:
        return np.inf
    v = np.sort(values)
    gaps = np.diff(np.concatenate([v, [v[0] + 2 * np.pi]]))
    return gaps.min()


def _min_gap(values):
    if len(values) < 2:
        return np.inf
    return np.diff(np.sort(values)).min()


def separation_limits(P, cfg, delay_span=1.0):
    """Minimum angle and delay gaps enforced when drawing paths

    The delay gap is 1/(4 N f0), shrunk to span/(2P) cells when P paths
    would not fit in the delay span otherwise.
    """
    angle_gap = 2 * np.pi / (4 * cfg.M)
    delay_gap = min(0.25, delay_span / (2 * P)) * cfg.delay_cell
    return angle_gap, delay_gap


def draw_paths(rng, P, cfg, separation_guard=True, delay_span=1.0, max_attempts=10_000):
    """Draw P paths: beta ~ CN(0,1), phi ~ U[-pi, pi), tau ~ U[0, span/(N f0))"""
    if P < 1:
        raise DimensionError("P must be at least 1")
    angle_gap, delay_gap = separation_limits(P, cfg, delay_span)
    for attempt in range(max_attempts):
        phi = rng.uniform(-np.pi, np.pi, size=P)
        tau = rng.uniform(0.0, delay_span, size=P) * cfg.delay_cell
        if not separation_guard:
            break
        if _min_circular_gap(phi) >= angle_gap and _min_gap(tau) >= delay_gap:
            break
    else:
        raise ConfigError(f"could not draw {P} separated paths in {max_attempts} attempts")
    if attempt:
        logger.debug(f"draw_paths rejected {attempt} draws")
    beta = (rng.standard_normal(P) + 1j * rng.standard_normal(P)) / np.sqrt(2)
    return PathSet(phi, tau, beta)


def zadoff_chu(T, root=1):
    """Unit-modulus Zadoff-Chu sequence of length T"""
    q = np.arange(T)
    if T % 2:
        return np.exp(-1j * np.pi * root * q * (q + 1) / T)
    return np.exp(-1j * np.pi * root * q * q / T)


def allocate_pilots(cfg, layout='comb', root=1):
    """Give each user T disjoint subcarriers and a Zadoff-Chu pilot

    ``comb`` interleaves users (user k gets k, k+K, ...); ``contiguous``
    gives user k the block kT .. kT+T-1.
    """
    if cfg.K > cfg.N or cfg.T < 1:
        raise ConfigError(f"cannot allocate {cfg.K} users over {cfg.N} subcarriers")
    T, K = cfg.T, cfg.K
    if layout == 'comb':
        sets = [k + K * np.arange(T) for k in range(K)]
    elif layout == 'contiguous':
        sets = [k * T + np.arange(T) for k in range(K)]
    else:
        raise ConfigError(f"unknown pilot layout {layout!r}")
    sequence = zadoff_chu(T, root)
    return PilotAllocation(tuple(sets), tuple(sequence.copy() for _ in range(K)), layout, root)


def noise_variance(snr_db):
    """Noise power for unit pilot power at the given SNR; +inf is noiseless, -inf has no signal"""
    if np.isposinf(snr_db):
        return 0.0
    if np.isneginf(snr_db):
        return np.inf
    _require_finite('snr_db', snr_db)
    return float(10.0 ** (-snr_db / 10.0))


def complex_noise(rng, shape, variance):
    return np.sqrt(variance / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def observe_uplink(H, alloc, k, snr_db, rng, seed=None):
    """Received pilots of user k

    snr_db=inf gives the noiseless observation; snr_db=-inf drops the signal
    and returns unit-variance noise.
    """
    H = H.H if isinstance(H, ChannelMatrix) else np.asarray(H, dtype=complex)
    subcarriers, pilots = alloc.user(k)
    if np.any(subcarriers >= H.shape[1]):
        raise DimensionError("pilot subcarriers outside the channel")
    sigma2 = noise_variance(snr_db)
    Y = H[:, subcarriers] * pilots[None, :]
    if np.isinf(sigma2):
        sigma2 = 1.0
        Y = np.zeros_like(Y)
    if sigma2 > 0:
        Y = Y + complex_noise(rng, Y.shape, sigma2)
    return Observation(Y, subcarriers, pilots, user=k, snr_db=float(snr_db), seed=seed,
                       noise_variance=sigma2)


def observe_all_users(channels, alloc, snr_db, rng, seed=None):
    """One OFDM block: every user's pilots on their own subcarriers"""
    if len(channels) != alloc.K:
        raise DimensionError(f"{len(channels)} channels for {alloc.K} users")
    return [observe_uplink(H, alloc, k, snr_db, rng, seed) for k, H in enumerate(channels)]


def to_normalized_angle(theta, d_over_lambda=0.5):
    """Physical angle (radians) to normalized DOA 2 pi d sin(theta)/lambda"""
    return 2 * np.pi * d_over_lambda * np.sin(theta)


def to_physical_angle(phi, d_over_lambda=0.5):
    ratio = np.asarray(phi) / (2 * np.pi * d_over_lambda)
    if np.any(np.abs(ratio) > 1 + 1e-12):
        raise DimensionError("normalized angle has no physical counterpart")
    return np.arcsin(np.clip(ratio, -1.0, 1.0))


def centroid_delay(phi, cfg, carrier='uplink'):
    """Mean extra delay the squinted array adds over antenna 0, (M-1) phi / (4 pi fc)

    Antenna m sees a path m phi / (2 pi fc) later than antenna 0, so a delay
    fitted jointly over all antennas lands on the array centroid.
    """
    return (cfg.M - 1) * np.asarray(phi, dtype=float) / (4 * np.pi * cfg.carrier(carrier))


def spatial_wideband_delay(M, theta, fs, fc, d_over_lambda=0.5):
    """Travel time across the array (antenna 0 to M-1) in symbol periods 1/fs"""
    spacing = d_over_lambda * SPEED_OF_LIGHT / fc
    return (M - 1) * spacing * np.sin(theta) / SPEED_OF_LIGHT * fs
