"""Block-sparse IRLS with parametric grid refinement

The engine alternates block reweighting, a descent step on the grid
parameters of a parametric dictionary, a weighted ridge solve and pruning of
dead blocks. It works for any ``DictionaryFamily``; angle and delay
estimation only differ in the family they pass in.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np

from app.errors import ConfigError, NoPathsDetected

logger = logging.getLogger(__name__)

RIDGE = 1e-12
STEP_KINDS = ('gauss_newton', 'gradient')
ROUTES = ('auto', 'woodbury', 'direct')


@dataclass(frozen=True)
class StepPolicy:
    """Backtracking line search on the grid

    Attributes:
        kind: 'gauss_newton' scales the gradient by a diagonal curvature,
            'gradient' takes plain steepest-descent steps
        shrink: factor applied to the step after each failed trial
        max_halvings: trials before giving up on this iteration
        max_move: largest move of any grid point per iteration, in cells
        interpolate: try the minimizer of a parabola through the accepted step
        expand: when the full step is accepted, keep doubling it while the
            objective decreases and no point moves more than ``max_move``
    """
    kind: str = 'gauss_newton'
    shrink: float = 0.5
    max_halvings: int = 30
    max_move: float = 0.5
    interpolate: bool = True
    expand: bool = True


@dataclass(frozen=True)
class IrlsOptions:
    """Solver settings

    Thresholds are relative unless stated: ``prune_ratio`` to the strongest
    block energy, ``eta`` to the coefficient norm, ``grid_tolerance`` to the
    initial grid spacing and ``merge_tolerance`` to the family's resolution
    cell (2 pi/M for angles, 1/(N f0) for delays). While the grid is still
    moving, points only merge once they are also closer than half the
    initial spacing.

    ``noise_variance`` of None means unknown: the detection threshold then
    uses the noise level estimated from the observation. 0.0 means noiseless.
    """
    epsilon: float = 1e-3
    prune_ratio: float = 1e-2
    prune_threshold: float | None = None
    eta: float = 1e-4
    max_iterations: int = 200
    L_initial: int = 128
    step: StepPolicy = field(default_factory=StepPolicy)
    grid_tolerance: float = 1e-7
    merge_tolerance: float = 0.05
    residual_floor: float = 1e-10
    refine_after: int = 1
    keep_blocks: int | None = None
    noise_variance: float | None = None
    detection_factor: float = 5.0
    lam_initial: float | None = None
    route: str = 'auto'

    def validate(self):
        errors = []
        for name in ('epsilon', 'eta', 'grid_tolerance', 'residual_floor'):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be positive")
        for name in ('prune_ratio', 'merge_tolerance', 'detection_factor'):
            if not getattr(self, name) >= 0:
                errors.append(f"{name} must be nonnegative")
        if self.prune_threshold is not None and not self.prune_threshold >= 0:
            errors.append("prune_threshold must be nonnegative")
        if self.max_iterations < 1:
            errors.append("max_iterations must be at least 1")
        if self.L_initial < 1:
            errors.append("L_initial must be at least 1")
        if self.keep_blocks is not None and not 1 <= self.keep_blocks <= self.L_initial:
            errors.append("keep_blocks must lie in 1..L_initial")
        if self.noise_variance is not None and not 0 <= self.noise_variance < np.inf:
            errors.append("noise_variance must be finite and nonnegative")
        if self.lam_initial is not None and not self.lam_initial > 0:
            errors.append("lam_initial must be positive")
        if self.step.kind not in STEP_KINDS:
            errors.append(f"step kind must be one of {STEP_KINDS}")
        if not 0 < self.step.shrink < 1:
            errors.append("step shrink must lie in (0, 1)")
        if self.route not in ROUTES:
            errors.append(f"route must be one of {ROUTES}")
        return errors

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass
class SparseState:
    """Current iterate: coefficients x (L x B), grid (L), lambda"""
    x: np.ndarray
    grid: np.ndarray
    lam: float
    iteration: int = 0

    @property
    def L(self):
        return len(self.grid)

    def energies(self):
        return np.sum(np.abs(self.x) ** 2, axis=1)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    v_before: float
    v_after: float
    residual: float
    blocks: int
    lam: float


@dataclass
class IrlsDiagnostics:
    iterations: int = 0
    converged: bool = False
    regularized: bool = False
    merged: int = 0
    records: list = field(default_factory=list)

    @property
    def v_trace(self):
        return np.array([r.v_after for r in self.records])

    @property
    def residual_trace(self):
        return np.array([r.residual for r in self.records])

    def to_records(self):
        return [asdict(r) for r in self.records]

    def to_dict(self):
        return {'iterations': self.iterations, 'converged': self.converged,
                'regularized': self.regularized, 'merged': self.merged}


class IrlsResult(NamedTuple):
    grid: np.ndarray
    x: np.ndarray
    diagnostics: IrlsDiagnostics


class RefineResult(NamedTuple):
    grid: np.ndarray
    v_before: float
    v_after: float
    step: float


def block_weights(x, epsilon):
    """Per-block weight 1/(||x_i||^2 + epsilon); block i's weight covers all B entries"""
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[:, None]
    return 1.0 / (np.sum(np.abs(x) ** 2, axis=1) + epsilon)


def _solve_batched(lhs, rhs):
    try:
        out = np.linalg.solve(lhs, rhs)
        if np.all(np.isfinite(out)):
            return out, False
    except np.linalg.LinAlgError:
        pass
    n = lhs.shape[-1]
    scale = np.max(np.abs(np.diagonal(lhs, axis1=-2, axis2=-1)))
    ridge = RIDGE * max(scale, 1.0) * np.eye(n)
    logger.warning(f"singular {n}x{n} system, retrying with a {RIDGE:g} ridge")
    return np.linalg.solve(lhs + ridge, rhs), True


def solve_coefficients(dictionary, y, weights, lam, route='auto'):
    """x = (D^H D + G/lambda)^-1 D^H y, solved independently for each b

    The Woodbury form x = S D^H (I + D S D^H)^-1 y with S = lambda G^-1
    inverts an R x R system per b instead of an L x L one. ``route='auto'``
    picks the smaller side.

    Returns:
        (x, regularized): x as an L x B matrix; regularized is True when a
        ridge had to be added to a singular system
    """
    if not lam > 0:
        raise ConfigError("lambda must be positive")
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ConfigError("weights must be positive")
    Yb = dictionary.arrange(y)
    s = lam / weights
    A = dictionary.gains.transpose(1, 2, 0)  # (B, R, L)
    Ah = A.conj().transpose(0, 2, 1)  # (B, L, R)
    L, R = dictionary.L, dictionary.R
    if route == 'auto':
        route = 'woodbury' if L > R else 'direct'
    if route == 'woodbury':
        K = (A * s[None, None, :]) @ Ah + np.eye(R)
        z, regularized = _solve_batched(K, Yb[:, :, None])
        x = s[None, :] * (Ah @ z)[:, :, 0]
    elif route == 'direct':
        G = Ah @ A + np.diag(1.0 / s)
        x, regularized = _solve_batched(G, (Ah @ Yb[:, :, None]))
        x = x[:, :, 0]
    else:
        raise ConfigError(f"unknown route {route!r}")
    return x.T.copy(), regularized


def surrogate(dictionary, y, weights, lam, route='auto'):
    """v = -y^H D (D^H D + G/lambda)^-1 D^H y, evaluated as -Re(y^H D x)"""
    Yb = dictionary.arrange(y)
    x, _ = solve_coefficients(dictionary, Yb, weights, lam, route)
    return float(-np.real(np.vdot(Yb, dictionary.apply(x))))


def _gradient_terms(dictionary, Yb, x):
    residual = Yb - dictionary.apply(x)
    dx = dictionary.d_gains * x[:, :, None]
    gradient = -2.0 * np.real(np.einsum('ibr,br->i', dx.conj(), residual))
    curvature = 2.0 * np.sum(np.abs(dx) ** 2, axis=(1, 2))
    return gradient, curvature


def surrogate_gradient(family, grid, y, weights, lam, route='auto'):
    """dv/dgrid[i] = -2 Re sum_{b,r} conj(dD_i x_i)[b, r] (y - D x)[b, r]

    Differentiating every occurrence of D(grid) in v, the terms through the
    coefficient solve cancel at the weighted LS optimum, leaving only the
    explicit derivative of block i.
    """
    dictionary = family(grid)
    Yb = dictionary.arrange(y)
    x, _ = solve_coefficients(dictionary, Yb, weights, lam, route)
    return _gradient_terms(dictionary, Yb, x)[0]


def refine_grid(state, gradient, policy, objective, project, cell, curvature=None):
    """One backtracking descent step on the grid

    ``objective`` maps a grid to the surrogate value under fixed weights and
    lambda. A step is accepted only if it does not increase the objective;
    otherwise the grid is returned unchanged.
    """
    grid = np.asarray(state.grid, dtype=float)
    v_old = objective(grid)
    gradient = np.asarray(gradient, dtype=float)
    if not np.any(gradient):
        return RefineResult(grid, v_old, v_old, 0.0)

    if policy.kind == 'gauss_newton' and curvature is not None:
        curvature = np.asarray(curvature, dtype=float)
        direction = np.where(curvature > 0, -gradient / np.where(curvature > 0, curvature, 1.0), 0.0)
        if not np.any(direction):
            direction = -gradient * cell / np.max(np.abs(gradient))
    else:
        direction = -gradient * cell / np.max(np.abs(gradient))
    largest = np.max(np.abs(direction))
    if largest > policy.max_move * cell:
        direction *= policy.max_move * cell / largest
    slope = float(gradient @ direction)

    u = 1.0
    for _ in range(policy.max_halvings):
        candidate = project(grid + u * direction)
        v_new = objective(candidate)
        if v_new <= v_old:
            break
        u *= policy.shrink
    else:
        return RefineResult(grid, v_old, v_old, 0.0)

    if policy.expand and u == 1.0:
        limit = policy.max_move * cell
        reach = float(np.max(np.abs(direction)))
        while 2 * u * reach <= limit * (1 + 1e-12):
            trial = project(grid + 2 * u * direction)
            v_trial = objective(trial)
            if not v_trial < v_new:
                break
            u, candidate, v_new = 2 * u, trial, v_trial
        if u > 1.0:
            return RefineResult(candidate, v_old, v_new, u)

    if policy.interpolate and slope < 0:
        # parabola through v(0), v'(0) and v(u)
        curv = (v_new - v_old - slope * u) / u ** 2
        if curv > 0:
            t = -slope / (2 * curv)
            if 0 < t <= 2 * u and not np.isclose(t, u):
                trial = project(grid + t * direction)
                v_trial = objective(trial)
                if v_trial < v_new:
                    return RefineResult(trial, v_old, v_trial, t)
    return RefineResult(candidate, v_old, v_new, u)


def prune(state, mu, keep=None):
    """Drop blocks whose energy is at most mu

    With ``keep`` set, the ``keep`` strongest blocks always survive.
    """
    if mu < 0:
        raise ConfigError("mu must be nonnegative")
    energy = state.energies()
    alive = energy > mu
    if keep is not None and alive.sum() < keep:
        alive[np.argsort(energy)[::-1][:keep]] = True
    if not alive.any():
        raise NoPathsDetected("every block fell below the pruning threshold")
    return SparseState(state.x[alive], state.grid[alive], state.lam, state.iteration), alive


def merge_close(state, family, tolerance):
    """Fuse neighbouring grid points closer than ``tolerance``

    Coefficients are summed and the fused point sits at the energy-weighted
    position of the pair.
    """
    if state.L < 2 or tolerance <= 0:
        return state, 0
    order = np.argsort(state.grid)
    grid, x = state.grid[order].copy(), state.x[order].copy()
    keep = np.ones(len(grid), dtype=bool)
    energy = np.sum(np.abs(x) ** 2, axis=1)
    last = 0
    merged = 0
    neighbours = [(i - 1, i) for i in range(1, len(grid))]
    if family.periodic:
        neighbours.append((len(grid) - 1, 0))
    for a, b in neighbours:
        while a > 0 and not keep[a]:
            a -= 1
        if a == b or not keep[a] or not keep[b] or family.distance(grid[a], grid[b]) >= tolerance:
            continue
        strong, weak = (a, b) if energy[a] >= energy[b] else (b, a)
        total = energy[strong] + energy[weak]
        share = energy[weak] / total if total > 0 else 0.0
        grid[strong] = family.project(grid[strong] + share * family.difference(grid[strong], grid[weak]))
        x[strong] += x[weak]
        energy[strong] = np.sum(np.abs(x[strong]) ** 2)
        keep[weak] = False
        merged += 1
        last = strong
    if not merged:
        return state, 0
    logger.warning(f"merged {merged} nearby grid points around {grid[last]:.6g}")
    return SparseState(x[keep], grid[keep], state.lam, state.iteration), merged


def estimate_noise_variance(Yb, spread=4.0):
    """Noise power per entry from the singular values of the B x R observation

    For n x p white noise (n >= p) the squared singular values over n fill
    sigma^2 [(1 - sqrt(p/n))^2, (1 + sqrt(p/n))^2]. Values above ``spread``
    times the upper edge implied by the smallest one count as signal and the
    rest are averaged. Returns None when Yb has a single row or column.
    """
    Yb = np.asarray(Yb)
    n, p = max(Yb.shape), min(Yb.shape)
    if p < 2:
        return None
    power = np.linalg.svd(Yb, compute_uv=False) ** 2 / n
    ratio = np.sqrt(p / n)
    lower = max((1 - ratio) ** 2, 1.0 / p ** 2)
    edge = spread * power[-1] * (1 + ratio) ** 2 / lower
    return float(power[power <= edge].mean())


def initial_lambda(Yb, options):
    """1/sigma^2 from the known noise variance or the smallest singular value"""
    if options.lam_initial is not None:
        return options.lam_initial
    floor = options.residual_floor * np.vdot(Yb, Yb).real / Yb.size
    if options.noise_variance is not None:
        return 1.0 / max(options.noise_variance, floor)
    smallest = np.linalg.svd(Yb, compute_uv=False)[-1]
    return 1.0 / max(smallest ** 2 / max(Yb.shape), floor)


def update_lambda(residual_energy, y_energy, rows, floor):
    """lambda = MT / ||y - D x||^2, the residual floored relative to ||y||^2"""
    return rows / max(residual_energy, floor * y_energy)


def _final_solve(family, Yb, state, options):
    dictionary = family(state.grid)
    weights = block_weights(state.x, options.epsilon)
    x, regularized = solve_coefficients(dictionary, Yb, weights, state.lam, options.route)
    return SparseState(x, state.grid, state.lam, state.iteration), regularized


def run_irls(family, y, options=None, grid=None):
    """Estimate the active grid points and their block coefficients

    Args:
        family: DictionaryFamily giving D(grid) and its derivatives
        y: observation, B x R or its column-major vectorization
        options: IrlsOptions
        grid: initial grid, defaults to the family's uniform grid

    Returns:
        IrlsResult(grid, x, diagnostics) sorted by grid value

    Raises:
        NoPathsDetected: zero input, or every block pruned
    """
    options = options or IrlsOptions()
    errors = options.validate()
    if errors:
        raise ConfigError(errors)
    grid = family.initial_grid(options.L_initial) if grid is None else np.asarray(grid, dtype=float)
    cell = family.cell(len(grid))
    fuse = options.merge_tolerance * (family.resolution or cell)
    Yb = family(grid[:1]).arrange(y)
    y_energy = float(np.vdot(Yb, Yb).real)
    if y_energy == 0:
        raise NoPathsDetected("observation is identically zero")
    rows = Yb.size

    state = SparseState(np.zeros((len(grid), family.block_size), dtype=complex), grid,
                        initial_lambda(Yb, options))
    diagnostics = IrlsDiagnostics()
    for iteration in range(1, options.max_iterations + 1):
        weights = block_weights(state.x, options.epsilon)
        old_grid = state.grid
        lam = state.lam

        def objective(g):
            return surrogate(family(g), Yb, weights, lam, options.route)

        if iteration > options.refine_after:
            dictionary = family(state.grid)
            x_now, _ = solve_coefficients(dictionary, Yb, weights, lam, options.route)
            gradient, curvature = _gradient_terms(dictionary, Yb, x_now)
            refined = refine_grid(state, gradient, options.step, objective, family.project,
                                  cell, curvature)
            new_grid, v_before, v_after = refined.grid, refined.v_before, refined.v_after
        else:
            new_grid = state.grid
            v_before = v_after = objective(new_grid)

        dictionary = family(new_grid)
        x, regularized = solve_coefficients(dictionary, Yb, weights, lam, options.route)
        diagnostics.regularized |= regularized
        candidate = SparseState(x, new_grid, lam, iteration)

        mu = options.prune_threshold
        if mu is None:
            mu = options.prune_ratio * candidate.energies().max()
        pruned, alive = prune(candidate, mu, options.keep_blocks)
        pruned, merged = merge_close(pruned, family, min(fuse, cell / 2))

        settled = alive.all() and not merged and iteration > options.refine_after
        if settled:
            dx = np.linalg.norm(pruned.x - state.x)
            moved = np.max(family.distance(new_grid, old_grid))
            settled = (dx <= options.eta * np.linalg.norm(pruned.x)
                       and moved <= options.grid_tolerance * cell)
        if settled:
            # a settled grid may still hold one path split over two nearby points
            pruned, merged = merge_close(pruned, family, fuse)
            settled = not merged
        diagnostics.merged += merged

        residual = Yb - family(pruned.grid).apply(pruned.x)
        residual_energy = float(np.vdot(residual, residual).real)
        pruned.lam = update_lambda(residual_energy, y_energy, rows, options.residual_floor)

        record = IterationRecord(iteration, v_before, v_after, np.sqrt(residual_energy), pruned.L, pruned.lam)
        diagnostics.records.append(record)
        logger.debug(f"irls iteration {iteration}: v={v_after:.6g} blocks={pruned.L}",
                     extra=asdict(record))
        state = pruned
        diagnostics.iterations = iteration
        if settled:
            diagnostics.converged = True
            break
    else:
        logger.info(f"irls stopped after {options.max_iterations} iterations without converging")

    state = _finalize(family, Yb, state, options, diagnostics, fuse)
    order = np.argsort(state.grid)
    return IrlsResult(state.grid[order], state.x[order], diagnostics)


def _finalize(family, Yb, state, options, diagnostics, fuse):
    B, R = family.block_size, family.rows
    state, merged = merge_close(state, family, fuse)
    if merged:
        diagnostics.merged += merged
        state, regularized = _final_solve(family, Yb, state, options)
        diagnostics.regularized |= regularized

    if options.keep_blocks is not None:
        if state.L > options.keep_blocks:
            strongest = np.sort(np.argsort(state.energies())[::-1][:options.keep_blocks])
            state = SparseState(state.x[strongest], state.grid[strongest], state.lam, state.iteration)
            state, regularized = _final_solve(family, Yb, state, options)
            diagnostics.regularized |= regularized
        return state

    noise = options.noise_variance
    if noise is None:
        noise = estimate_noise_variance(Yb)
        if noise is not None:
            logger.debug(f"estimated noise variance {noise:.4g} for detection")
    if noise is not None:
        threshold = options.detection_factor * B * noise / R
        alive = state.energies() > threshold
        if not alive.any():
            raise NoPathsDetected(f"no block exceeds the noise detection threshold {threshold:.3g}")
        if not alive.all():
            logger.debug(f"detection threshold removed {int((~alive).sum())} blocks")
            state = SparseState(state.x[alive], state.grid[alive], state.lam, state.iteration)
            state, regularized = _final_solve(family, Yb, state, options)
            diagnostics.regularized |= regularized
    return state
