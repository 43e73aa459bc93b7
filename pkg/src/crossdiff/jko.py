"""Minimizing-movement steps for F(rho, mu) = int f(rho, mu) dx.

Each step solves

    min  F(rho, mu) + (W2^2(rho, rho_k) + W2^2(mu, mu_k)) / (2 tau)

with the transport terms replaced by their entropic versions and the whole
problem written over two couplings pi_rho, pi_mu = diag(a) K diag(b).  The
scaling iteration alternates an exact projection on the fixed old marginals
with a pointwise proximal step in the new marginals.  The prox couples rho
and mu only cell by cell, and is solved exactly by splitting on the region of
the envelope the answer lands in.

The Gibbs kernel uses the reflected images of the cell centers across both
ends of [0, L].  Those images continue the center lattice, so all row sums
of K agree and the uniform pair is an exact fixed point of a step.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .envelope import EnvelopeOracle, halfgap_state
from .errors import ConvergenceError, GridMismatchError, ProxError, ScalingError
from .transport import Density, Grid1D, displacement_interpolate, quantile_w2

__all__ = [
    "DensityPair",
    "JkoConfig",
    "StepResult",
    "Trajectory",
    "TrajectoryError",
    "InterpolationWarning",
    "DEFAULT_DG_NODES",
    "jko_step",
    "de_giorgi_step",
    "run_trajectory",
    "interpolate",
    "prox_envelope",
]

DEFAULT_DG_NODES = (0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0)


@dataclass(frozen=True, eq=False)
class DensityPair:
    rho: Density
    mu: Density

    def __post_init__(self):
        if self.rho.grid != self.mu.grid:
            raise GridMismatchError("rho and mu live on different grids")

    @classmethod
    def from_arrays(cls, grid: Grid1D, rho, mu, normalize: bool = True) -> "DensityPair":
        make = Density.normalized if normalize else Density
        return cls(make(grid, rho), make(grid, mu))

    @classmethod
    def uniform(cls, grid: Grid1D) -> "DensityPair":
        return cls(Density.uniform(grid), Density.uniform(grid))

    @property
    def grid(self) -> Grid1D:
        return self.rho.grid

    @property
    def s_sum(self) -> np.ndarray:
        return self.rho.values + self.mu.values


@dataclass(frozen=True)
class JkoConfig:
    tau: float
    eps_reg: float
    prox_newton_tol: float = 1e-12
    scaling_tol: float = 1e-8
    max_scaling_iter: int = 5000
    mass_floor: Optional[float] = None  # None means 1e-9 / h

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.eps_reg > 0:
            raise ValueError("eps_reg must be positive")
        if not self.scaling_tol > 0 or not self.prox_newton_tol > 0:
            raise ValueError("tolerances must be positive")
        if self.max_scaling_iter < 1:
            raise ValueError("max_scaling_iter must be >= 1")

    def floor(self, grid: Grid1D) -> float:
        return 1e-9 / grid.h if self.mass_floor is None else float(self.mass_floor)


@dataclass(frozen=True, eq=False)
class StepResult:
    next: DensityPair
    w2sq_rho: float
    w2sq_mu: float
    potential_grad_rho: np.ndarray
    potential_grad_mu: np.ndarray
    optimality_residual_rho: float
    optimality_residual_mu: float
    tau_eff: float = float("nan")
    iterations: int = 0
    marginal_error: float = 0.0
    log_scalings: tuple = field(default=(), repr=False)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Iterates, De Giorgi samples and velocities of a run.

    ``pairs[0]`` is the initial pair and ``pairs[k]`` the k-th iterate.
    ``de_giorgi_samples[k][j]`` is the step from ``pairs[k]`` with penalty
    ``dg_nodes[j] * tau``.  ``velocities[k]`` is ``(v, w)`` for the step
    ending at ``pairs[k + 1]``.
    """

    initial: DensityPair
    steps: tuple
    tau: float
    dg_nodes: tuple
    de_giorgi_samples: tuple
    velocities: tuple
    config: Optional[JkoConfig] = None

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def pairs(self) -> list:
        return [self.initial] + [s.next for s in self.steps]


class TrajectoryError(ConvergenceError):
    """A step failed; ``partial`` holds the trajectory up to that point."""

    def __init__(self, message, partial: Trajectory, cause: Exception):
        super().__init__(message, residual=getattr(cause, "residual", float("nan")))
        self.partial = partial
        self.cause = cause


class InterpolationWarning(UserWarning):
    pass


# -- pointwise prox ---------------------------------------------------------

def _solve_increasing(fun, lo, hi, x0, tol, max_iter=200):
    """Vectorized safeguarded Newton for increasing ``fun`` on [lo, hi].

    ``fun(x)`` returns ``(value, derivative)``; requires value(lo) <= 0 <=
    value(hi).  Returns ``(x, converged_mask, last_value)``.
    """
    lo, hi = lo.copy(), hi.copy()
    x = np.clip(x0, lo, hi)
    val = np.full_like(x, np.nan)
    done = np.zeros(x.shape, dtype=bool)
    active = np.arange(x.size)
    for _ in range(max_iter):
        xa = x[active]
        fv, dv = fun(xa, active)
        val[active] = fv
        lo[active] = np.where(fv <= 0, xa, lo[active])
        hi[active] = np.where(fv >= 0, xa, hi[active])
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = xa - fv / dv
        la, ha = lo[active], hi[active]
        ok = (dv > 0) & (xn >= la) & (xn <= ha)
        xn = np.where(ok, xn, 0.5 * (la + ha))
        step = np.abs(xn - xa)
        fin = (np.abs(fv) <= tol) | (ok & (step <= 1e-15 * (1.0 + np.abs(xa)))) \
            | (ha - la <= 4e-16 * (1.0 + np.abs(xa)))
        # a finished entry keeps the point it was evaluated at
        x[active] = np.where(fin, xa, xn)
        done[active[fin]] = True
        active = active[~fin]
        if active.size == 0:
            break
    return x, done, val


def _a_branch(lxi_rho, lxi_mu, lXi, lam, tol, x0=None):
    """Stationary point on A for every cell given; returns (lp, lq, x, ok)."""

    def phi(x, sub):
        st = halfgap_state(x)
        val = st.tilde_f_prime + lam * (np.log(st.s) - lXi[sub])
        der = st.ds_dx * (st.tilde_f_second + lam / st.s)
        return val, der

    allidx = np.arange(lXi.size)
    x_hi = 0.5 * np.exp((lam * lXi - 1.0) / (1.0 + lam)) + 1.0
    # widen until the sign is right (the bound is asymptotic)
    for _ in range(60):
        v, _ = phi(x_hi, allidx)
        if np.all(v > 0):
            break
        x_hi = np.where(v > 0, x_hi, 2.0 * x_hi + 1.0)
    if x0 is None:
        x0 = np.maximum(x_hi - 1.0, 0.0)
    x, ok, _ = _solve_increasing(phi, np.zeros(lXi.size), x_hi, x0, tol)
    st = halfgap_state(x)
    ls = np.log(st.s)
    lp = lxi_rho - lXi + ls
    lq = lxi_mu - lXi + ls
    # in A iff min(p, q) >= alpha(s)
    in_a = np.minimum(lp, lq) >= st.log_alpha - 1e-13
    return lp, lq, x, ok & in_a


class _BBranch:
    """Stationarity on B reduced to psi(v) = 0 with v = log q."""

    def __init__(self, lxi_rho, lxi_mu, lam):
        self.lam = lam
        self.L1 = 1.0 + lam
        self.c1 = (lam * lxi_rho - 1.0) / self.L1
        self.lm = lxi_mu
        self.v_lo = (lam * lxi_mu - 1.0 - np.exp(self.c1)) / self.L1 - 1.0
        self.v_hi = (lam * lxi_mu - 1.0) / self.L1 + 1.0

    def psi(self, v, sub):
        u = self.c1[sub] - np.exp(v) / self.L1
        val = self.L1 * v + np.exp(u) + 1.0 - self.lam * self.lm[sub]
        der = self.L1 - np.exp(u + v) / self.L1
        return val, der

    def u_of(self, v, sub):
        return self.c1[sub] - np.exp(v) / self.L1

    def accept(self, v, sub, ok):
        u = self.u_of(v, sub)
        # a B root that landed in A is not the minimizer
        return ok & np.isfinite(v) & ~(_in_a_log(u, v) & ~_on_boundary(u, v))

    def newton_from(self, sub, v0, tol):
        def f(z, s):
            return self.psi(z, sub[s])
        v, ok, _ = _solve_increasing(f, self.v_lo[sub], self.v_hi[sub], v0, tol)
        return v, self.accept(v, sub, ok)

    def robust(self, sub, tol):
        """Locate the root on an increasing branch of psi, trying both."""
        L1 = self.L1
        W = 2.0 * math.log(L1)
        v_m = math.log(L1)
        c1 = self.c1[sub]
        mono = c1 - 1.0 + v_m <= W
        v = np.full(sub.size, np.nan)
        good = np.zeros(sub.size, dtype=bool)
        if np.any(mono):
            m = np.flatnonzero(mono)
            lo, hi = self.v_lo[sub[m]], self.v_hi[sub[m]]
            v[m], good[m] = self.newton_from(sub[m], 0.5 * (lo + hi), tol)
        nm = np.flatnonzero(~mono)
        if nm.size:
            s_nm = sub[nm]
            c1n = self.c1[s_nm]

            def w_minus(z, s):
                return c1n[s] - np.exp(z) / L1 + z - W, 1.0 - np.exp(z) / L1

            def w_plus(z, s):
                val, der = w_minus(z, s)
                return -val, -der

            k = nm.size
            v1, _, _ = _solve_increasing(w_minus, W - c1n - 1.0, np.full(k, v_m),
                                         np.full(k, v_m), 1e-15)
            b2 = np.full(k, v_m + 1.0)
            for _ in range(200):
                val, _ = w_minus(b2, np.arange(k))
                if np.all(val < 0):
                    break
                b2 = np.where(val < 0, b2, v_m + 2.0 * (b2 - v_m))
            v2, _, _ = _solve_increasing(w_plus, np.full(k, v_m), b2, np.full(k, v_m), 1e-15)
            p1, _ = self.psi(v1, s_nm)
            p2, _ = self.psi(v2, s_nm)
            lo1, hi2 = self.v_lo[s_nm], self.v_hi[s_nm]
            has1 = (p1 >= 0) & (v1 > lo1)
            has2 = (p2 <= 0) & (v2 < hi2)

            def f(z, s):
                return self.psi(z, s_nm[s])
            r1, ok1, _ = _solve_increasing(f, np.minimum(lo1, v1), v1, 0.5 * (lo1 + v1), tol)
            r2, ok2, _ = _solve_increasing(f, v2, np.maximum(hi2, v2), 0.5 * (v2 + hi2), tol)
            g1 = self.accept(r1, s_nm, has1 & ok1)
            g2 = self.accept(r2, s_nm, has2 & ok2)
            v[nm] = np.where(g1, r1, np.where(g2, r2, np.nan))
            good[nm] = g1 | g2
        return v, good


def prox_envelope(lxi_rho, lxi_mu, lam, oracle: EnvelopeOracle = None, tol: float = 1e-12,
                  guess=None, return_guess: bool = False):
    """Cellwise minimizer of f(p, q) + lam * [KL(p | xi_rho) + KL(q | xi_mu)].

    Inputs and outputs are logarithms.  The unique minimizer is the
    stationary point of whichever branch of f lands in its own region: on A
    the ratio p/q equals xi_rho/xi_mu and only s = p + q is unknown; on B
    eliminating p leaves a scalar equation in v = log q.

    ``guess`` is the pair returned with ``return_guess=True`` by an earlier
    call; cells whose warm-started Newton lands in the right region skip the
    bracketing work.
    """
    lxi_rho = np.asarray(lxi_rho, dtype=float)
    lxi_mu = np.asarray(lxi_mu, dtype=float)
    n = lxi_rho.size
    lp = np.full(n, np.nan)
    lq = np.full(n, np.nan)
    gx = np.full(n, np.nan)
    gv = np.full(n, np.nan)
    solved = np.zeros(n, dtype=bool)
    lXi = np.logaddexp(lxi_rho, lxi_mu)
    # no A stationary point with s >= 2 unless phi(2) < 0
    cand_a = 2.0 + lam * (math.log(2.0) - lXi) < 0
    bb = _BBranch(lxi_rho, lxi_mu, lam)

    if guess is not None:
        x0, v0 = guess
        ia = np.flatnonzero(cand_a & np.isfinite(x0))
        if ia.size:
            a_lp, a_lq, a_x, a_ok = _a_branch(lxi_rho[ia], lxi_mu[ia], lXi[ia], lam, tol, x0[ia])
            take = ia[a_ok]
            lp[take], lq[take], gx[take] = a_lp[a_ok], a_lq[a_ok], a_x[a_ok]
            solved[take] = True
        ib = np.flatnonzero(~solved & np.isfinite(v0))
        if ib.size:
            v, ok = bb.newton_from(ib, v0[ib], tol)
            take = ib[ok]
            lq[take] = v[ok]
            lp[take] = bb.u_of(v[ok], take)
            gv[take] = v[ok]
            solved[take] = True

    ia = np.flatnonzero(cand_a & ~solved)
    if ia.size:
        a_lp, a_lq, a_x, a_ok = _a_branch(lxi_rho[ia], lxi_mu[ia], lXi[ia], lam, tol)
        take = ia[a_ok]
        lp[take], lq[take], gx[take] = a_lp[a_ok], a_lq[a_ok], a_x[a_ok]
        solved[take] = True

    rest = np.flatnonzero(~solved)
    if rest.size:
        v, good = bb.robust(rest, tol)
        if not np.all(good):
            bad = int(rest[np.flatnonzero(~good)[0]])
            raise ProxError("pointwise prox failed", cell=bad,
                            lxi_rho=float(lxi_rho[bad]), lxi_mu=float(lxi_mu[bad]), lam=lam)
        lq[rest] = v
        lp[rest] = bb.u_of(v, rest)
        gv[rest] = v
    if return_guess:
        return lp, lq, (gx, gv)
    return lp, lq


def _in_a_log(lp, lq):
    p, q = np.exp(lp), np.exp(lq)
    hi = np.maximum(p, q)
    lo = np.minimum(p, q)
    return (p + q >= 2.0) & (hi - lo >= np.abs(lp - lq))


def _on_boundary(lp, lq, rtol=1e-9):
    p, q = np.exp(lp), np.exp(lq)
    gap = np.abs(p - q) - np.abs(lp - lq)
    return (p + q >= 2.0) & (np.abs(gap) <= rtol * (1.0 + np.abs(p - q)))


# -- scaling iteration ------------------------------------------------------

def _lse(M, axis):
    m = np.max(M, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.sum(np.exp(M - m), axis=axis)) + np.squeeze(m, axis=axis)


def _log_kernel(grid: Grid1D, eps: float) -> np.ndarray:
    x = grid.centers
    L = grid.length
    d0 = (x[:, None] - x[None, :]) ** 2
    d1 = (x[:, None] + x[None, :]) ** 2
    d2 = (x[:, None] - (2.0 * L - x[None, :])) ** 2
    return logsumexp(np.stack([-d0, -d1, -d2]) / eps, axis=0)


_KERNEL_CACHE: dict = {}


def _cached_log_kernel(grid: Grid1D, eps: float) -> np.ndarray:
    key = (grid.n_cells, grid.length, eps)
    K = _KERNEL_CACHE.get(key)
    if K is None:
        if len(_KERNEL_CACHE) > 16:
            _KERNEL_CACHE.clear()
        K = _log_kernel(grid, eps)
        K.setflags(write=False)
        _KERNEL_CACHE[key] = K
    return K


class _ScalingMap:
    """One scaling sweep as a map on the stacked log second scalings.

    ``__call__`` returns the updated scalings, the prox output and the L1
    gap between the current plan's second marginals and the prox output.
    The first marginals are projected exactly inside the sweep.
    """

    def __init__(self, current: DensityPair, tau: float, cfg: JkoConfig, oracle):
        grid = current.grid
        self.n = grid.n_cells
        self.log_h = math.log(grid.h)
        self.logK = _cached_log_kernel(grid, cfg.eps_reg)
        self.lam = cfg.eps_reg / (2.0 * tau)
        self.oracle = oracle
        self.tol = cfg.prox_newton_tol
        self.guess = None
        with np.errstate(divide="ignore"):
            self.log_m = [np.log(current.rho.values * grid.h), np.log(current.mu.values * grid.h)]

    def __call__(self, lb):
        n = self.n
        log_z = []
        for sp in range(2):
            r = _lse(self.logK + lb[sp * n:(sp + 1) * n][None, :], axis=1)
            log_a = self.log_m[sp] - r
            log_z.append(_lse(self.logK + log_a[:, None], axis=0))
        lp, lq, self.guess = prox_envelope(log_z[0] - self.log_h, log_z[1] - self.log_h,
                                           self.lam, self.oracle, tol=self.tol,
                                           guess=self.guess, return_guess=True)
        new = np.concatenate([lp + self.log_h - log_z[0], lq + self.log_h - log_z[1]])
        lz = np.concatenate(log_z)
        err = float(np.sum(np.abs(np.exp(lz + lb) - np.exp(lz + new))))
        return new, (lp, lq), err


def _anderson_step(dX, dF, x, f):
    """Type-II Anderson update from difference histories (columns)."""
    X = np.array(dX).T
    F = np.array(dF).T
    # explicit reductions keep the result independent of BLAS threading
    gram = (F[:, :, None] * F[:, None, :]).sum(axis=0)
    rhs = (F * f[:, None]).sum(axis=0)
    reg = 1e-12 * max(float(np.trace(gram)), 1e-300)
    gamma = np.linalg.solve(gram + reg * np.eye(gram.shape[0]), rhs)
    return x + f - ((X + F) * gamma[None, :]).sum(axis=1)


def _solve_entropic(current: DensityPair, tau: float, cfg: JkoConfig,
                    oracle: EnvelopeOracle, warm=None, memory: int = 8):
    n = current.grid.n_cells
    G = _ScalingMap(current, tau, cfg, oracle)
    x = np.concatenate(warm) if warm else np.zeros(2 * n)
    dX, dF = [], []
    x_prev = f_prev = None
    best_err = np.inf
    err = np.inf
    out = None
    for it in range(1, cfg.max_scaling_iter + 1):
        gx, out, err = G(x)
        if err < cfg.scaling_tol:
            x = gx
            break
        f = gx - x
        if x_prev is not None:
            dX.append(x - x_prev)
            dF.append(f - f_prev)
            if len(dX) > memory:
                dX.pop(0)
                dF.pop(0)
        x_prev, f_prev = x, f
        # restart the history when acceleration stops paying off
        if err > 10.0 * best_err:
            dX.clear()
            dF.clear()
            x = gx
        elif dX:
            try:
                x = _anderson_step(dX, dF, x, f)
            except np.linalg.LinAlgError:
                dX.clear()
                dF.clear()
                x = gx
            if not np.all(np.isfinite(x)):
                dX.clear()
                dF.clear()
                x = gx
        else:
            x = gx
        best_err = min(best_err, err)
    else:
        raise ScalingError("entropic scaling did not converge", residual=err, iterations=it)
    lp, lq = out
    return np.exp(lp), np.exp(lq), it, err, (x[:n].copy(), x[n:].copy())


def _residual(f_a, pot_grad, tau, weights, floor, h):
    """Weighted spread of f_a + phi / tau, relative to the range of f_a."""
    phi = np.concatenate([[0.0], np.cumsum(0.5 * h * (pot_grad[1:] + pot_grad[:-1]))])
    supp = weights > floor
    if not np.any(supp):
        return 0.0
    X = f_a[supp] + phi[supp] / tau
    w = weights[supp] / weights[supp].sum()
    mean = np.sum(w * X)
    std = math.sqrt(max(float(np.sum(w * (X - mean) ** 2)), 0.0))
    rng = float(np.max(f_a[supp]) - np.min(f_a[supp]))
    return std / rng if rng > 0 else std


def _step(current: DensityPair, tau: float, cfg: JkoConfig, oracle: EnvelopeOracle,
          warm=None) -> StepResult:
    grid = current.grid
    p, q, it, err, scal = _solve_entropic(current, tau, cfg, oracle, warm)
    nxt = DensityPair(Density.normalized(grid, p), Density.normalized(grid, q))
    tr_rho = quantile_w2(nxt.rho, current.rho)
    tr_mu = quantile_w2(nxt.mu, current.mu)
    fa, fb = oracle.f_grad(nxt.rho.values, nxt.mu.values)
    floor = cfg.floor(grid)
    res_rho = _residual(fa, tr_rho.potential_grad, tau, nxt.rho.values, floor, grid.h)
    res_mu = _residual(fb, tr_mu.potential_grad, tau, nxt.mu.values, floor, grid.h)
    return StepResult(nxt, tr_rho.w2_squared, tr_mu.w2_squared,
                      tr_rho.potential_grad, tr_mu.potential_grad,
                      res_rho, res_mu, tau, it, err, scal)


def jko_step(current: DensityPair, cfg: JkoConfig, oracle: EnvelopeOracle,
             warm=None) -> StepResult:
    """One minimizing-movement step of size ``cfg.tau`` from ``current``.

    ``warm`` may be the ``log_scalings`` of an earlier step to start from.
    """
    return _step(current, cfg.tau, cfg, oracle, warm)


def de_giorgi_step(anchor: DensityPair, s: float, cfg: JkoConfig,
                   oracle: EnvelopeOracle, warm=None) -> StepResult:
    """Variational interpolant: the step from ``anchor`` with penalty ``s * tau``."""
    if not 0.0 < s <= 1.0:
        raise ValueError("s must lie in (0, 1]")
    return _step(anchor, s * cfg.tau, cfg, oracle, warm)


def run_trajectory(init: DensityPair, cfg: JkoConfig, oracle: EnvelopeOracle,
                   n_steps: int, dg_nodes: Sequence[float] = DEFAULT_DG_NODES,
                   progress=None) -> Trajectory:
    """Run ``n_steps`` steps, sampling the De Giorgi interpolant at ``dg_nodes``.

    The node ``s = 1`` reuses the step itself.  On failure a
    ``TrajectoryError`` carries the partial trajectory.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    nodes = tuple(sorted(float(s) for s in dg_nodes))
    if any(not 0.0 < s <= 1.0 for s in nodes):
        raise ValueError("dg_nodes must lie in (0, 1]")
    steps, samples, vel = [], [], []
    current = init
    warm = None

    def partial():
        return Trajectory(init, tuple(steps), cfg.tau, nodes, tuple(samples), tuple(vel), cfg)

    for k in range(n_steps):
        try:
            res = jko_step(current, cfg, oracle, warm)
            row = []
            for j, s in enumerate(nodes):
                if s == 1.0:
                    row.append(res)
                    continue
                w = samples[-1][j].log_scalings if samples else res.log_scalings
                row.append(de_giorgi_step(current, s, cfg, oracle, w))
        except (ConvergenceError, FloatingPointError) as exc:
            raise TrajectoryError(f"step {k} failed: {exc}", partial(), exc) from exc
        steps.append(res)
        samples.append(tuple(row))
        vel.append((res.potential_grad_rho / cfg.tau, res.potential_grad_mu / cfg.tau))
        warm = res.log_scalings
        current = res.next
        if progress is not None:
            progress(k, res)
    return partial()


def interpolate(traj: Trajectory, t: float, kind: str = "constant") -> DensityPair:
    """Evaluate an interpolation family at time ``t``.

    ``constant`` is right-continuous in the sense that it returns iterate
    k + 1 on (k tau, (k + 1) tau].  ``geodesic`` runs the displacement
    interpolation between consecutive iterates.  ``de_giorgi`` returns the
    stored sample at the nearest node and warns if the node is not exact.
    """
    tau = traj.tau
    T = traj.n_steps * tau
    if not (-1e-12 * max(T, tau) <= t <= T * (1 + 1e-12)):
        raise ValueError(f"t={t!r} outside [0, {T!r}]")
    pairs = traj.pairs
    if t <= 0 or traj.n_steps == 0:
        return pairs[0]
    r = t / tau
    k = int(math.ceil(r - 1e-9))
    k = min(max(k, 1), traj.n_steps)
    frac = r - (k - 1)
    if kind == "constant":
        return pairs[k]
    if kind == "geodesic":
        theta = min(max(frac, 0.0), 1.0)
        a, b = pairs[k - 1], pairs[k]
        return DensityPair(displacement_interpolate(a.rho, b.rho, theta),
                           displacement_interpolate(a.mu, b.mu, theta))
    if kind == "de_giorgi":
        nodes = np.asarray(traj.dg_nodes)
        j = int(np.argmin(np.abs(nodes - frac)))
        if abs(nodes[j] - frac) > 1e-9:
            warnings.warn(f"s={frac:.6g} not a node; using s={nodes[j]:.6g}", InterpolationWarning)
        return traj.de_giorgi_samples[k - 1][j].next
    raise ValueError(f"unknown interpolation kind {kind!r}")
