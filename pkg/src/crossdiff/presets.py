"""Initial data for runs and property batteries."""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .jko import DensityPair
from .transport import Grid1D

PRESETS = ("uniform", "two_bumps", "step_overlap", "supercritical")


def _gauss(x, c, sigma):
    return np.exp(-0.5 * ((x - c) / sigma) ** 2)


def _cell_fraction(grid: Grid1D, a: float, b: float) -> np.ndarray:
    """Fraction of each cell covered by [a, b]."""
    e = grid.edges
    return np.clip(np.minimum(e[1:], b) - np.maximum(e[:-1], a), 0.0, None) / grid.h


def uniform(grid: Grid1D) -> DensityPair:
    return DensityPair.uniform(grid)


def two_bumps(grid: Grid1D) -> DensityPair:
    L, x = grid.length, grid.centers
    s = L / 16
    return DensityPair.from_arrays(grid, _gauss(x, L / 4, s), _gauss(x, 3 * L / 4, s))


def step_overlap(grid: Grid1D) -> DensityPair:
    L = grid.length
    return DensityPair.from_arrays(grid, _cell_fraction(grid, 0.0, 0.6 * L),
                                   _cell_fraction(grid, 0.4 * L, L))


def supercritical(grid: Grid1D, peak_product: float = 4.0) -> DensityPair:
    """Background plus overlapping bumps at 0.4L and 0.6L.

    The bump weight is tuned so that max(rho * mu) equals ``peak_product``
    at unit mass, which puts a band of cells in region A.
    """
    L, x = grid.length, grid.centers
    sigma = L / 10
    gr, gm = _gauss(x, 0.4 * L, sigma), _gauss(x, 0.6 * L, sigma)
    gr_mass, gm_mass = grid.h * gr.sum(), grid.h * gm.sum()

    def make(t):
        # t in [0, 1]: share of mass carried by the bump
        rho = (1 - t) / L + t * gr / gr_mass
        mu = (1 - t) / L + t * gm / gm_mass
        return rho, mu

    def excess(t):
        rho, mu = make(t)
        return float(np.max(rho * mu)) - peak_product

    if excess(1.0) < 0:
        raise ValueError("peak product not reachable on this domain")
    t = brentq(excess, 0.0, 1.0, xtol=1e-14) if excess(0.0) < 0 else 0.0
    rho, mu = make(t)
    return DensityPair.from_arrays(grid, rho, mu)


def smooth_dense(grid: Grid1D) -> DensityPair:
    """Smooth pair with S >= 2 everywhere when L <= 1/2 (mean of S is 2/L)."""
    L, x = grid.length, grid.centers
    k = 2 * np.pi / L
    rho = 1.0 + 0.3 * np.cos(k * x)
    mu = 1.0 + 0.25 * np.cos(k * (x - 0.2 * L))
    return DensityPair.from_arrays(grid, rho, mu)


_BUILDERS = {
    "uniform": uniform,
    "two_bumps": two_bumps,
    "step_overlap": step_overlap,
    "supercritical": supercritical,
    "smooth_dense": smooth_dense,
}


def build(name: str, grid: Grid1D) -> DensityPair:
    try:
        return _BUILDERS[name](grid)
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_BUILDERS)}") from None
