"""Quadratic optimal transport between cell-average densities on [0, L].

Densities are piecewise constant, so their CDFs are piecewise linear and
their quantile functions are piecewise linear in the mass coordinate q.
Merging the breakpoints of two quantile functions splits [0, 1] into
intervals on which both are affine, and every quantity below is an exact
integral over those intervals.

Sign convention: ``potential_grad = id - T``, where T pushes the source
onto the target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import GridMismatchError, ScalingError

__all__ = [
    "Grid1D",
    "Density",
    "TransportResult",
    "quantile_w2",
    "displacement_interpolate",
    "sinkhorn_w2",
]

MASS_TOL = 1e-9


@dataclass(frozen=True)
class Grid1D:
    n_cells: int
    length: float = 1.0

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise ValueError("n_cells must be a positive integer")
        if not self.length > 0:
            raise ValueError("length must be positive")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        object.__setattr__(self, "length", float(self.length))

    @property
    def h(self) -> float:
        return self.length / self.n_cells

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.h

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.h


@dataclass(frozen=True, eq=False)
class Density:
    """Cell averages on a grid.  ``values`` is stored as a read-only copy."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise ValueError(f"expected {self.grid.n_cells} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite")
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def normalized(cls, grid: Grid1D, values) -> "Density":
        v = np.clip(np.asarray(values, dtype=float), 0.0, None)
        mass = grid.h * v.sum()
        if not mass > 0:
            raise ValueError("zero-mass input")
        return cls(grid, v / mass)

    @classmethod
    def uniform(cls, grid: Grid1D) -> "Density":
        return cls(grid, np.full(grid.n_cells, 1.0 / grid.length))

    @property
    def mass(self) -> float:
        return float(self.grid.h * self.values.sum())

    def cdf(self) -> np.ndarray:
        """CDF at the cell edges, scaled so the last entry is exactly 1."""
        c = np.concatenate([[0.0], np.cumsum(self.values)])
        return c / c[-1]


@dataclass(frozen=True, eq=False)
class TransportResult:
    w2_squared: float
    map_values: np.ndarray
    potential_grad: np.ndarray
    plan: Optional[np.ndarray] = None
    iterations: int = 0
    marginal_error: float = 0.0


def _check_pair(source: Density, target: Density):
    if source.grid != target.grid:
        raise GridMismatchError("source and target live on different grids")
    for d in (source, target):
        m = d.mass
        if not m > 0:
            raise ValueError("zero-mass input")
        if abs(m - 1.0) > MASS_TOL:
            raise ValueError(f"expected unit mass, got {m!r}")


def _quantile_pieces(density: Density, q_mid):
    """Cell index and CDF offset of the affine piece containing each q."""
    F = density.cdf()
    idx = np.searchsorted(F[1:], q_mid, side="left")
    idx = np.minimum(idx, density.grid.n_cells - 1)
    return idx, F


def _affine_quantile(density, idx, F, q):
    # X(q) = left edge + (q - F_i) / (mass fraction per unit length)
    grid = density.grid
    dens = density.values[idx] / (density.values.sum() * grid.h)  # q per unit length
    with np.errstate(divide="ignore", invalid="ignore"):
        off = np.where(dens > 0, (q - F[idx]) / dens, 0.0)
    return idx * grid.h + np.clip(off, 0.0, grid.h)


@dataclass(frozen=True)
class _Segments:
    q0: np.ndarray
    q1: np.ndarray
    xs0: np.ndarray
    xs1: np.ndarray
    xt0: np.ndarray
    xt1: np.ndarray
    src_cell: np.ndarray


def _segments(source: Density, target: Density) -> _Segments:
    Fs, Ft = source.cdf(), target.cdf()
    q = np.union1d(Fs, Ft)
    q0, q1 = q[:-1], q[1:]
    keep = q1 > q0
    q0, q1 = q0[keep], q1[keep]
    qm = 0.5 * (q0 + q1)
    i_s, _ = _quantile_pieces(source, qm)
    i_t, _ = _quantile_pieces(target, qm)
    return _Segments(
        q0, q1,
        _affine_quantile(source, i_s, Fs, q0), _affine_quantile(source, i_s, Fs, q1),
        _affine_quantile(target, i_t, Ft, q0), _affine_quantile(target, i_t, Ft, q1),
        i_s,
    )


def _quantile_at(density: Density, q):
    """Left-continuous quantile function evaluated at arbitrary q."""
    idx, F = _quantile_pieces(density, q)
    return _affine_quantile(density, idx, F, q)


def quantile_w2(source: Density, target: Density) -> TransportResult:
    """Exact squared W2 distance, monotone map and potential gradient.

    ``map_values[i]`` is T at the center of source cell i.  ``potential_grad[i]``
    is the root-mean-square displacement over the mass of cell i, signed by
    its mean, so that ``h * sum(source * potential_grad**2) == w2_squared``
    holds to rounding.  Empty cells get the center value ``x_i - T(x_i)``.
    """
    _check_pair(source, target)
    grid = source.grid
    seg = _segments(source, target)
    dq = seg.q1 - seg.q0
    d0 = seg.xs0 - seg.xt0
    d1 = seg.xs1 - seg.xt1
    sq = dq * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0
    lin = dq * (d0 + d1) / 2.0
    w2 = float(np.sum(sq))

    n = grid.n_cells
    cell_sq = np.bincount(seg.src_cell, weights=sq, minlength=n)
    cell_lin = np.bincount(seg.src_cell, weights=lin, minlength=n)
    Fs = source.cdf()
    cell_mass = np.diff(Fs)

    q_center = 0.5 * (Fs[:-1] + Fs[1:])
    T = _quantile_at(target, q_center)
    # empty source cells: T(x) = left-continuous target quantile at F(x)
    empty = cell_mass <= 0
    T = np.where(empty, _quantile_at(target, Fs[:-1]), T)
    T = np.maximum.accumulate(T)

    with np.errstate(divide="ignore", invalid="ignore"):
        rms = np.sqrt(cell_sq / cell_mass)
    sign = np.where(cell_lin < 0, -1.0, 1.0)
    grad = np.where(empty, grid.centers - T, sign * rms)
    return TransportResult(w2, T, grad)


def displacement_interpolate(source: Density, target: Density, t: float) -> Density:
    """McCann interpolant ``((1 - t) id + t T)_# source``, re-binned by mass.

    The interpolant's quantile function is ``(1 - t) Q_source + t Q_target``,
    which is affine on every merged segment, so its CDF at the grid edges is
    exact and the re-binning conserves mass.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    _check_pair(source, target)
    if t == 0.0:
        return Density(source.grid, source.values)
    if t == 1.0:
        return Density(target.grid, target.values)
    grid = source.grid
    seg = _segments(source, target)
    y0 = (1.0 - t) * seg.xs0 + t * seg.xt0
    y1 = (1.0 - t) * seg.xs1 + t * seg.xt1
    edges = grid.edges
    j = np.searchsorted(y0, edges, side="right") - 1
    jj = np.clip(j, 0, None)
    span = y1[jj] - y0[jj]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(span > 0, (edges - y0[jj]) / span, 1.0)
    G = seg.q0[jj] + (seg.q1[jj] - seg.q0[jj]) * np.clip(frac, 0.0, 1.0)
    G = np.where(j < 0, 0.0, G)
    G[-1] = 1.0
    G[0] = 0.0
    G = np.maximum.accumulate(G)
    return Density(grid, np.diff(G) / grid.h)


def sinkhorn_w2(source: Density, target: Density, eps_reg: float,
                max_iter: int = 50_000, tol: float = 1e-9,
                return_plan: bool = False, eps_scaling: bool = True) -> TransportResult:
    """Entropic transport cost by log-domain Sinkhorn iterations.

    With ``eps_scaling`` the regularization starts at L**2 and is halved
    between short warm-started stages down to ``eps_reg``.  This changes only
    the path to the fixed point, not the fixed point itself.

    Returns the transport cost <C, P> of the regularized plan P, the
    barycentric map and ``id - map``.  Raises ``ScalingError`` carrying the
    final L1 marginal error if ``tol`` is not met within ``max_iter`` total
    iterations.
    """
    if not eps_reg > 0:
        raise ValueError("eps_reg must be positive")
    _check_pair(source, target)
    grid = source.grid
    x = grid.centers
    a = source.values * grid.h
    b = target.values * grid.h
    with np.errstate(divide="ignore"):
        log_a, log_b = np.log(a), np.log(b)
    C = (x[:, None] - x[None, :]) ** 2
    schedule = [eps_reg]
    if eps_scaling:
        e = grid.length ** 2
        while e > 2 * eps_reg:
            schedule.insert(-1, e)
            e *= 0.5
    # dual potentials in cost units, carried across stages
    F = np.zeros_like(a)
    G = np.zeros_like(b)
    err = np.inf
    it = 0
    converged = False
    for stage, eps in enumerate(schedule):
        last = stage == len(schedule) - 1
        stage_tol = tol if last else max(tol, 1e-3)
        M = -C / eps
        f, g = F / eps, G / eps
        while it < max_iter:
            it += 1
            f = log_a - logsumexp(M + g[None, :], axis=1)
            f = np.where(np.isfinite(f), f, -np.inf)
            g = log_b - logsumexp(M + f[:, None], axis=0)
            g = np.where(np.isfinite(g), g, -np.inf)
            if it % 10 == 0 or it == max_iter:
                row = np.exp(f + logsumexp(M + g[None, :], axis=1))
                err = float(np.sum(np.abs(row - a)))
                if err < stage_tol:
                    break
        F = np.where(np.isfinite(f), f * eps, 0.0)
        G = np.where(np.isfinite(g), g * eps, 0.0)
        converged = last and err < tol
        if it >= max_iter:
            break
    if not converged:
        raise ScalingError("sinkhorn did not converge", residual=err, iterations=it,
                           eps_reached=eps, eps_target=eps_reg)
    P = np.exp(M + f[:, None] + g[None, :])
    cost = float(np.sum(P * C))
    rows = P.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        T = np.where(rows > 0, (P * x[None, :]).sum(axis=1) / rows, x)
    return TransportResult(cost, T, x - T, P if return_plan else None, it, err)
