"""Heavy-tailed mollifier on the unit torus and the H1-conv measurement.

The profile is eta~(x) = c_m (1 + |x|)^(-m) with c_m = (m - 1)/2, which has
unit mass for every m > 1.  Rescaling gives eta_eps(x) = eta~(x/eps)/eps, and
periodizing over the integer lattice has a closed form in the Hurwitz zeta
function: for x in [0, 1),

    eta_eps(x) = c_m eps^(m-1) [zeta(m, eps + x) + zeta(m, eps + 1 - x)].

No lattice truncation is needed.  Kernel arrays hold cell averages over the
cells centred at the offsets k h, computed from exact antiderivatives, so
h * sum(values) is 1 up to rounding on any grid and convolution with a
cell spike reproduces the arrays exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .errors import GridMismatchError
from .transport import Grid1D

__all__ = [
    "Mollifier",
    "make_mollifier",
    "convolve",
    "h1conv_ratio",
    "periodic_forward_diff",
    "corpus",
    "SweepResult",
    "certification_sweep",
]


def _pre(m: float, eps: float) -> float:
    return 0.5 * (m - 1.0) * eps ** (m - 1.0)


def _wrap(x):
    return np.mod(np.asarray(x, dtype=float), 1.0)


def _eta(m, eps, x):
    y = _wrap(x)
    return _pre(m, eps) * (zeta(m, eps + y) + zeta(m, eps + 1.0 - y))


def _eta_prime(m, eps, y):
    # y in [0, 1]; right derivative at 0, left derivative at 1
    return -m * _pre(m, eps) * (zeta(m + 1, eps + y) - zeta(m + 1, eps + 1.0 - y))


def _eta_second_pos(m, eps, x):
    y = _wrap(x)
    return m * (m + 1) * _pre(m, eps) * (zeta(m + 2, eps + y) + zeta(m + 2, eps + 1.0 - y))


def _antiderivative(m, eps, y):
    # primitive of eta_eps on [0, 1] with value 0 at y = 0
    p = _pre(m, eps) / (m - 1.0)
    F = lambda t: -zeta(m - 1, eps + t) + zeta(m - 1, eps + 1.0 - t)  # noqa: E731
    return p * (F(y) - F(0.0))


@dataclass(frozen=True, eq=False)
class Mollifier:
    """Cell-averaged eta_eps, eta_eps' and (eta_eps'')_+ at lattice offsets.

    Entry k averages over [k h - h/2, k h + h/2] (mod 1).  The Dirac mass of
    eta'' at the origin is left out of ``second_deriv_pos``.
    """

    m: float
    eps: float
    grid: Grid1D
    values: np.ndarray
    deriv_values: np.ndarray
    second_deriv_pos: np.ndarray

    def evaluate(self, x):
        """Pointwise periodized eta_eps."""
        return _eta(self.m, self.eps, x)

    def evaluate_deriv(self, x):
        """Pointwise eta_eps', taken as 0 on the lattice."""
        y = _wrap(x)
        return np.where(y == 0.0, 0.0, _eta_prime(self.m, self.eps, y))

    def evaluate_second_pos(self, x):
        return _eta_second_pos(self.m, self.eps, x)

    @property
    def offsets(self) -> np.ndarray:
        """Signed offsets k h folded into [-1/2, 1/2)."""
        k = np.arange(self.grid.n_cells)
        off = k * self.grid.h
        return np.where(off >= 0.5, off - 1.0, off)


def make_mollifier(m: float, eps: float, grid: Grid1D) -> Mollifier:
    if not m > 2:
        raise ValueError("decay exponent m must exceed 2")
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if grid.length != 1.0:
        raise GridMismatchError("the mollifier lives on the unit torus (length 1)")
    m, eps = float(m), float(eps)
    n, h = grid.n_cells, grid.h
    k = np.arange(n)
    a = np.clip((k - 0.5) * h, 0.0, 1.0)
    b = np.clip((k + 0.5) * h, 0.0, 1.0)

    A = _antiderivative(m, eps, np.concatenate([a, b]))
    vals = (A[n:] - A[:n]) / h
    vals[0] = 2.0 * (A[n] - A[0]) / h  # symmetric cell around 0

    E_a, E_b = _eta(m, eps, a), _eta(m, eps, b)
    E_a[0] = E_b[0]  # eta is even
    der = (E_b - E_a) / h
    der[0] = 0.0

    D_a, D_b = _eta_prime(m, eps, a), _eta_prime(m, eps, b)
    sec = (D_b - D_a) / h
    # around 0: continuous parts on both sides, jump at 0 dropped
    sec[0] = 2.0 * (_eta_prime(m, eps, 0.5 * h) - _eta_prime(m, eps, 0.0)) / h
    if n == 1:
        vals[0], der[0], sec[0] = 1.0, 0.0, 0.0

    for arr in (vals, der, sec):
        arr.setflags(write=False)
    return Mollifier(m, eps, grid, vals, der, sec)


def _circulant(weights: np.ndarray) -> np.ndarray:
    n = weights.size
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return weights[idx]


def convolve(u, kernel: Mollifier, which: str = "values") -> np.ndarray:
    """h * sum_j K[i - j] u[j] with K one of the kernel arrays.

    Computed as an explicit sum, so nonnegative input gives exactly
    nonnegative output and results do not depend on BLAS threading.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (kernel.grid.n_cells,):
        raise GridMismatchError(
            f"array of shape {u.shape} does not match a {kernel.grid.n_cells}-cell kernel")
    K = getattr(kernel, {"values": "values", "deriv": "deriv_values",
                         "second_pos": "second_deriv_pos"}[which])
    return kernel.grid.h * (_circulant(K) * u[None, :]).sum(axis=1)


def periodic_forward_diff(u, h: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return (np.roll(u, -1) - u) / h


def _l2(v, h):
    return float(np.sqrt(h * np.sum(v * v)))


def h1conv_ratio(u, c: float, kernel: Mollifier) -> float:
    """||((u_eps - c)_+)'|| c / (||u_+||_inf ||(u_+)'||), with 0/0 read as 0."""
    if not c > 0:
        raise ValueError("c must be positive")
    u = np.asarray(u, dtype=float)
    h = kernel.grid.h
    up = np.maximum(u, 0.0)
    ue = convolve(u, kernel)
    num = _l2(periodic_forward_diff(np.maximum(ue - c, 0.0), h), h)
    sup = float(np.max(up))
    den = sup * _l2(periodic_forward_diff(up, h), h)
    # den == 0 means u_+ is constant, so u <= 0 or u is a positive constant;
    # either way u_eps is constant and the exact numerator is 0 as well
    if num == 0.0 or den == 0.0:
        return 0.0
    return num * c / den


# ---------------------------------------------------------------- sweep corpus

def _sawtooth_wells(x):
    saw = np.mod(4.0 * x, 1.0) - 0.5
    wells = sum(np.exp(-0.5 * ((x - c) / 0.01) ** 2) for c in (0.2, 0.55, 0.8))
    return saw - 6.0 * wells


def _bump_minus_spike(x):
    return np.exp(-0.5 * ((x - 0.5) / 0.1) ** 2) - 3.0 * np.exp(-0.5 * ((x - 0.5) / 0.01) ** 2)


def _random_h1(seed):
    rng = np.random.default_rng(seed)
    K = 64
    k = np.arange(1, K + 1)
    amp = rng.standard_normal((2, K)) / k ** 1.5

    def f(x):
        arg = 2 * np.pi * np.outer(x, k)
        return (np.cos(arg) * amp[0] + np.sin(arg) * amp[1]).sum(axis=1)

    return f


def corpus(seed: int = 0) -> dict:
    """Named continuous functions on the unit torus."""
    out = {"sawtooth_wells": _sawtooth_wells, "bump_minus_spike": _bump_minus_spike}
    for j in range(3):
        out[f"random_h1_{j}"] = _random_h1(seed * 1000 + j)
    return out


@dataclass(frozen=True)
class SweepResult:
    m: float
    eps_list: tuple
    corpus: tuple
    c_fractions: tuple
    n_cells: int
    max_ratio: float
    argmax: dict
    max_ratio_refined: float
    refinement_ratio: float

    @property
    def k_est(self) -> float:
        return max(self.max_ratio, self.max_ratio_refined)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "eps_list": list(self.eps_list),
            "corpus": list(self.corpus),
            "c_fractions": list(self.c_fractions),
            "n_cells": self.n_cells,
            "max_ratio": self.max_ratio,
            "argmax": dict(self.argmax),
            "max_ratio_refined": self.max_ratio_refined,
            "refinement_ratio": self.refinement_ratio,
            "K_est": self.k_est,
        }


def _sweep_max(funcs, eps_list, fracs, m, n):
    grid = Grid1D(n)
    x = grid.centers
    best, where = -1.0, {}
    for eps in eps_list:
        ker = make_mollifier(m, eps, grid)
        for name, f in funcs.items():
            u = f(x)
            sup = float(np.max(np.maximum(u, 0.0)))
            for fr in fracs:
                r = h1conv_ratio(u, fr * sup, ker)
                if r > best:
                    best, where = r, {"u_name": name, "c": fr * sup, "eps": eps}
    return best, where


def certification_sweep(m: float = 4.0, eps_list=(0.2, 0.05, 0.0125), n_cells: int = 256,
                        c_fractions=(1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0),
                        seed: int = 0) -> SweepResult:
    """Maximize the H1-conv ratio over the corpus at n and 2n cells."""
    funcs = corpus(seed)
    best, where = _sweep_max(funcs, eps_list, c_fractions, m, n_cells)
    best2, _ = _sweep_max(funcs, eps_list, c_fractions, m, 2 * n_cells)
    ratio = best2 / best if best > 0 else float("nan")
    return SweepResult(float(m), tuple(eps_list), tuple(funcs), tuple(c_fractions), n_cells,
                       best, where, best2, ratio)
