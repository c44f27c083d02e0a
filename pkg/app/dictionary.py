"""Shift-invariant block dictionaries for angle and delay estimation

Every dictionary here is stored as a gain tensor ``gains[i, b, r]``: block
``i`` maps its coefficient vector ``x[i, :]`` (length B) onto an observation
arranged as a B x R matrix ``Yb`` by

    Yb[b, r] = sum_i gains[i, b, r] * x[i, b]

The materialized matrix acts on ``x`` flattened block by block (index
``i*B + b``) and produces ``Yb`` flattened column-major (index ``b + B*r``).
For angles Yb is Y^T (B = T, R = M) so the rows follow vec(Y^T); for delays
Yb is Y S^-1 (B = M, R = T) so the rows follow vec(Y S^-1).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator

from app.errors import DimensionError
from app.models import _subcarrier_index, centroid_delay, signature_exponent, wrap_angle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BlockDictionary:
    """Block dictionary with its derivative along each block's grid parameter"""
    grid: np.ndarray
    gains: np.ndarray
    d_gains: np.ndarray

    @property
    def L(self):
        return self.gains.shape[0]

    @property
    def B(self):
        return self.gains.shape[1]

    @property
    def R(self):
        return self.gains.shape[2]

    def arrange(self, y):
        """Accept either Yb or its column-major vectorization"""
        y = np.asarray(y, dtype=complex)
        if y.ndim == 1:
            if y.size != self.B * self.R:
                raise DimensionError(f"observation length {y.size} != {self.B * self.R}")
            return y.reshape(self.B, self.R, order='F')
        if y.shape != (self.B, self.R):
            raise DimensionError(f"observation shape {y.shape} != {(self.B, self.R)}")
        return y

    def apply(self, x):
        """D x as a B x R matrix"""
        x = np.asarray(x).reshape(self.L, self.B)
        return np.einsum('ibr,ib->br', self.gains, x)

    def adjoint(self, Yb):
        """D^H y as an L x B matrix"""
        return np.einsum('ibr,br->ib', self.gains.conj(), self.arrange(Yb))

    def matvec(self, x):
        return self.apply(x).reshape(-1, order='F')

    def rmatvec(self, y):
        return self.adjoint(y).reshape(-1)

    def as_operator(self):
        """Implicit operator: never materializes the (B R) x (L B) matrix"""
        return LinearOperator((self.B * self.R, self.L * self.B), matvec=self.matvec,
                              rmatvec=self.rmatvec, dtype=complex)

    def matrix(self):
        B, R, L = self.B, self.R, self.L
        D = np.zeros((R, B, L, B), dtype=complex)
        b = np.arange(B)
        D[:, b, :, b] = self.gains.transpose(1, 2, 0)
        return D.reshape(R * B, L * B)

    def block(self, i):
        """Columns of block i of the materialized matrix"""
        return self.matrix()[:, i * self.B:(i + 1) * self.B]

    def take(self, index):
        index = np.asarray(index, dtype=int)
        return type(self)(self.grid[index], self.gains[index], self.d_gains[index])


class DictionaryFamily:
    """A block dictionary as a differentiable function of its grid"""
    block_size = None
    rows = None
    periodic = False
    # width of one resolvable cell of the physical system; None falls back to the grid spacing
    resolution = None

    def atoms(self, grid):
        """Return (gains, d_gains) for the grid"""
        raise NotImplementedError

    def project(self, grid):
        return np.asarray(grid, dtype=float)

    def initial_grid(self, L):
        raise NotImplementedError

    def cell(self, L):
        """Spacing of the uniform grid of size L"""
        raise NotImplementedError

    def difference(self, a, b):
        """Signed step from a to b"""
        return np.asarray(b, dtype=float) - np.asarray(a, dtype=float)

    def distance(self, a, b):
        return np.abs(self.difference(a, b))

    def __call__(self, grid):
        grid = np.asarray(grid, dtype=float)
        gains, d_gains = self.atoms(grid)
        return BlockDictionary(grid, gains, d_gains)


class DoaFamily(DictionaryFamily):
    """Beam-squint angle dictionary: gains[i, q, m] = exp(-j m (1 + n_q f0/fc) phi_i)

    With ``bse=False`` every rotation is the identity and the atoms are
    2 pi periodic in the angle.
    """
    periodic = True

    def __init__(self, cfg, subcarriers, bse=True, carrier='uplink'):
        self.cfg = cfg
        self.subcarriers = _subcarrier_index(cfg, subcarriers)
        self.bse = bse
        self.carrier = carrier
        # (T, M): exponent of phi for subcarrier slot q and antenna m
        self.exponent = signature_exponent(cfg, self.subcarriers, carrier, bse).T
        self.block_size = len(self.subcarriers)
        self.rows = cfg.M
        self.resolution = 2 * np.pi / cfg.M

    def atoms(self, grid):
        phase = -1j * self.exponent[None, :, :] * grid[:, None, None]
        gains = np.exp(phase)
        return gains, -1j * self.exponent[None, :, :] * gains

    def project(self, grid):
        return wrap_angle(grid)

    def initial_grid(self, L):
        return uniform_angle_grid(L)

    def cell(self, L):
        return 2 * np.pi / L

    def difference(self, a, b):
        return wrap_angle(np.asarray(b, dtype=float) - np.asarray(a, dtype=float))


class DelayFamily(DictionaryFamily):
    """Delay dictionary: gains[i, m, q] = exp(-j 2 pi n_q f0 tau_i) for every antenna m

    The atoms share one delay across the array, so under beam squint they fit
    the array-centroid delay. Grid points may therefore sit up to ``lead``
    seconds below zero.
    """

    def __init__(self, cfg, subcarriers, span=1.0):
        self.cfg = cfg
        self.subcarriers = _subcarrier_index(cfg, subcarriers)
        self.span = span
        self.block_size = cfg.M
        self.rows = len(self.subcarriers)
        self.rate = 2 * np.pi * self.subcarriers * cfg.f0
        self.resolution = cfg.delay_cell
        self.lead = float(centroid_delay(np.pi, cfg))

    def atoms(self, grid):
        ramp = np.exp(-1j * np.outer(grid, self.rate))
        gains = np.broadcast_to(ramp[:, None, :], (len(grid), self.cfg.M, self.rows))
        d_gains = np.broadcast_to((-1j * self.rate)[None, None, :] * ramp[:, None, :], gains.shape)
        return gains, d_gains

    def project(self, grid):
        upper = np.nextafter(1.0 / self.cfg.f0, 0.0)
        return np.clip(np.asarray(grid, dtype=float), -self.lead, upper)

    def initial_grid(self, L):
        return uniform_delay_grid(L, self.cfg, self.span)

    def cell(self, L):
        return self.span * self.cfg.delay_cell / L


def uniform_angle_grid(L):
    """-pi + 2 pi i / L for i = 0..L-1"""
    if L < 1:
        raise DimensionError("grid size must be positive")
    return -np.pi + 2 * np.pi * np.arange(L) / L


def uniform_delay_grid(L, cfg, span=1.0):
    """i span / (L N f0) for i = 0..L-1; the endpoint span/(N f0) is excluded"""
    if L < 1:
        raise DimensionError("grid size must be positive")
    return np.arange(L) * span / (L * cfg.N * cfg.f0)


def rotation_matrix(phi, m, subcarriers, cfg):
    """Diagonal T x T frequency rotation of antenna m"""
    if not 0 <= m < cfg.M:
        raise DimensionError(f"antenna index {m} outside 0..{cfg.M - 1}")
    n = _subcarrier_index(cfg, subcarriers)
    return np.diag(np.exp(-1j * m * (n * cfg.f0 / cfg.fc_ul) * phi))


def doa_atom(phi, subcarriers, cfg):
    """MT x T block: row block m is a(phi, 0)[m] times the rotation of antenna m"""
    n = _subcarrier_index(cfg, subcarriers)
    return np.vstack([np.exp(-1j * m * phi) * rotation_matrix(phi, m, n, cfg)
                      for m in range(cfg.M)])


@dataclass(frozen=True)
class DoaDictionary(BlockDictionary):
    """Angle dictionary over a fixed subcarrier list"""
    subcarriers: np.ndarray = None

    @property
    def D(self):
        return self.matrix()

    def take(self, index):
        index = np.asarray(index, dtype=int)
        return DoaDictionary(self.grid[index], self.gains[index], self.d_gains[index], self.subcarriers)


@dataclass(frozen=True)
class DelayDictionary(BlockDictionary):
    """Delay dictionary: block i = b(tau_i) restricted to the pilots, Kronecker I_M"""
    subcarriers: np.ndarray = None

    @property
    def D(self):
        return self.matrix()

    def take(self, index):
        index = np.asarray(index, dtype=int)
        return DelayDictionary(self.grid[index], self.gains[index], self.d_gains[index], self.subcarriers)


def doa_dictionary(grid, subcarriers, cfg, bse=True):
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise DimensionError("grid must be nonempty")
    family = DoaFamily(cfg, subcarriers, bse=bse)
    gains, d_gains = family.atoms(grid)
    return DoaDictionary(grid, gains, d_gains, family.subcarriers)


def delay_dictionary(grid, subcarriers, cfg):
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise DimensionError("grid must be nonempty")
    family = DelayFamily(cfg, subcarriers)
    gains, d_gains = family.atoms(grid)
    return DelayDictionary(grid, gains, d_gains, family.subcarriers)
