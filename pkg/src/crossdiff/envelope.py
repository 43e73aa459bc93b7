"""Convex envelope of f0(a, b) = a log a + b log b + a b.

Along each diagonal a + b = s the function g(a) = f0(a, s - a) is a double
well once s > 2.  The envelope replaces g by its two-point convexification
between the minimizers alpha(s) < s/2 < beta(s), which gives

    f(a, b) = tilde_f(a + b)   on A = {a + b >= 2, min(a, b) >= alpha(a + b)}
    f(a, b) = f0(a, b)         on B (the complement).

Everything here is parametrized by the half gap x = (beta - alpha) / 2.  The
stationarity system for the two minimizers reduces to beta = alpha * exp(2x),
so

    alpha = 2x / (exp(2x) - 1),   beta = alpha + 2x,   s = 2x coth(x),
    pi = alpha * beta = (x / sinh x)**2.

Inverting s -> x is a single well conditioned scalar Newton solve, and all
derived quantities have cancellation-free forms near s = 2 and no overflow
for large s.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import factorial, xlogy

from .errors import ConvergenceError, DomainError

__all__ = [
    "EnvelopeOracle",
    "Region",
    "HalfGapState",
    "halfgap_state",
    "f0",
    "g_value",
    "g_prime",
    "g_second",
]

# below this half gap the series forms are used
_SERIES_X = 0.5
_N_TERMS = 10
_K = np.arange(1, _N_TERMS + 1)
_ODD_FACT = factorial(2 * _K + 1)


class Region(str, enum.Enum):
    A = "A"
    B = "B"


def _scalar_or_array(value, like_scalar):
    if like_scalar:
        return float(np.asarray(value).reshape(()))
    return value


def _prepare(*args):
    arrs = [np.asarray(a, dtype=float) for a in args]
    scalar = all(a.ndim == 0 for a in arrs)
    arrs = np.broadcast_arrays(*arrs)
    return [np.array(a, dtype=float) for a in arrs], scalar


# series in x**2, evaluated with Horner on small arguments only
def _series(x, coef):
    y = x * x
    out = np.zeros_like(x)
    for c in coef[::-1]:
        out = out * y + c
    return out


_C_SINHM = 1.0 / _ODD_FACT                      # (sinh x - x) / x**3
_C_SINH2M = 2.0 ** (2 * _K + 1) / _ODD_FACT     # (sinh 2x - 2x) / x**3
_C_XCOSH = 2.0 * _K / _ODD_FACT                 # (x cosh x - sinh x) / x**3


def _x_over_sinh(x):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        r = 2.0 * x * np.exp(-x) / -np.expm1(-2.0 * x)
    return np.where(x == 0.0, 1.0, r)


def _q(x):
    """s(x) - 2 = 2x coth x - 2."""
    small = x < _SERIES_X
    xs = np.where(small, x, 0.0)
    xl = np.where(small, 1.0, x)
    q_small = 2.0 * _x_over_sinh(xs) * xs * xs * _series(xs, _C_XCOSH)
    q_large = 2.0 * xl / np.tanh(xl) - 2.0
    return np.where(small, q_small, q_large)


def _dq(x):
    """ds/dx = (sinh 2x - 2x) / sinh(x)**2."""
    small = x < _SERIES_X
    xs = np.where(small, x, 0.0)
    xl = np.where(small, 1.0, x)
    r = _x_over_sinh(xs)
    d_small = r * r * xs * _series(xs, _C_SINH2M)
    rl = _x_over_sinh(xl)
    d_large = 2.0 / np.tanh(xl) - 2.0 * rl * rl / xl
    return np.where(small, d_small, d_large)


class HalfGapState(NamedTuple):
    x: np.ndarray
    s: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    log_alpha: np.ndarray
    pi: np.ndarray
    ds_dx: np.ndarray
    tilde_f_prime: np.ndarray
    tilde_f_second: np.ndarray
    pi_prime: np.ndarray


def halfgap_state(x, s=None) -> HalfGapState:
    """All diagonal quantities as functions of the half gap ``x >= 0``.

    If ``s`` is given it is used in place of ``2x coth x`` so that
    ``alpha + beta == s`` holds to rounding.
    """
    x = np.asarray(x, dtype=float)
    small = x < _SERIES_X
    xs = np.where(small, x, 0.0)
    xl = np.where(small, 1.0, x)

    if s is None:
        s = 2.0 + _q(x)
    s = np.asarray(s, dtype=float)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        # alpha and its log
        alpha_small = np.where(xs == 0.0, 1.0, 2.0 * xs / np.expm1(2.0 * xs))
        alpha_large = 2.0 * xl * np.exp(-2.0 * xl) / -np.expm1(-2.0 * xl)
        alpha = np.where(small, alpha_small, alpha_large)
        la_small = -np.log(np.where(xs == 0.0, 1.0, np.expm1(2.0 * xs) / (2.0 * xs)))
        la_large = np.log(2.0 * xl) - 2.0 * xl - np.log(-np.expm1(-2.0 * xl))
        log_alpha = np.where(small, la_small, la_large)
        beta = s - alpha

        r = _x_over_sinh(x)
        pi = r * r
        ds_dx = _dq(x)

        # f~'' = (1 - pi) / (s - 2 pi);  s - 2 pi = x ds/dx
        sinhm = _series(xs, _C_SINHM)
        sinh2m = _series(xs, _C_SINH2M)
        sinhc = np.where(xs == 0.0, 1.0, np.sinh(xs) / np.where(xs == 0.0, 1.0, xs))
        fpp_small = sinhm / sinh2m * (sinhc + 1.0)
        fpp_large = (1.0 - _x_over_sinh(xl) ** 2) / (xl * _dq(xl))
        tilde_f_second = np.where(small, fpp_small, fpp_large)

        # pi' = -pi (s - 2) / (s - 2 pi)
        xcosh = _series(xs, _C_XCOSH)
        pp_small = -2.0 * _x_over_sinh(xs) * xcosh / sinh2m
        pl = _x_over_sinh(xl) ** 2
        pp_large = -pl * _q(xl) / (xl * _dq(xl))
        pi_prime = np.where(small, pp_small, pp_large)

    tilde_f_prime = log_alpha + 1.0 + beta
    return HalfGapState(x, s, alpha, beta, log_alpha, pi, ds_dx,
                        tilde_f_prime, tilde_f_second, pi_prime)


def f0(a, b):
    """The base density a log a + b log b + ab (0 log 0 = 0)."""
    (a, b), scalar = _prepare(a, b)
    return _scalar_or_array(xlogy(a, a) + xlogy(b, b) + a * b, scalar)


def _check_diag(a, s):
    if np.any(~(a > 0)) or np.any(~(a < s)):
        raise DomainError("requires 0 < a < s")


def g_value(a, s):
    """g(a) = f0(a, s - a)."""
    (a, s), scalar = _prepare(a, s)
    _check_diag(a, s)
    b = s - a
    return _scalar_or_array(a * np.log(a) + b * np.log(b) + a * b, scalar)


def g_prime(a, s):
    (a, s), scalar = _prepare(a, s)
    _check_diag(a, s)
    return _scalar_or_array(np.log(a) - np.log(s - a) + s - 2.0 * a, scalar)


def g_second(a, s):
    (a, s), scalar = _prepare(a, s)
    _check_diag(a, s)
    return _scalar_or_array(1.0 / a + 1.0 / (s - a) - 2.0, scalar)


@dataclass(frozen=True)
class EnvelopeOracle:
    """Evaluator for the envelope and its diagonal functions.

    Parameters
    ----------
    newton_tol : float
        Residual tolerance on ``g'(alpha(s))``, scaled by ``max(1, s)``.
    s_switch : float
        For ``2 < s < s_switch`` the half gap comes from the two-term series
        of ``s(x)`` instead of Newton.
    r0_cache : float, optional
        Skip the r0 scan and use this value.

    All methods accept scalars or arrays and return the same kind.
    """

    newton_tol: float = 1e-12
    s_switch: float = 2.0 + 1e-10
    r0_cache: float | None = None
    max_iter: int = 100
    r0_report: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.s_switch >= 2.0:
            raise ValueError("s_switch must be >= 2")
        if self.r0_cache is None:
            report = self._scan_r0()
        else:
            report = {"r0": float(self.r0_cache), "source": "cache"}
        object.__setattr__(self, "r0_report", report)
        object.__setattr__(self, "r0_cache", report["r0"])

    # -- half gap -----------------------------------------------------------

    def halfgap(self, s):
        """Solve ``2x coth x = s`` for the half gap ``x >= 0``."""
        (s,), scalar = _prepare(s)
        if np.any(~(s >= 2.0)):
            raise DomainError("requires s >= 2")
        t = s - 2.0
        x = np.zeros_like(t)
        tiny = (t > 0) & (s < self.s_switch)
        x[tiny] = np.sqrt(1.5 * t[tiny] + 0.15 * t[tiny] ** 2)
        todo = s >= self.s_switch
        todo &= t > 0
        if np.any(todo):
            x[todo] = self._newton_halfgap(t[todo])
        return _scalar_or_array(x, scalar)

    def _newton_halfgap(self, t):
        # 2x coth x <= 2 + 2x^2/3 and >= 2x bound the root
        lo = np.sqrt(1.5 * t)
        hi = t / 2.0 + 1.0
        x = np.minimum(lo + t / 2.0, hi)
        active = np.arange(t.size)
        for _ in range(self.max_iter):
            xa, ta = x[active], t[active]
            res = _q(xa) - ta
            lo[active] = np.where(res < 0, xa, lo[active])
            hi[active] = np.where(res > 0, xa, hi[active])
            with np.errstate(divide="ignore", invalid="ignore"):
                x_new = xa - res / _dq(xa)
            la, ha = lo[active], hi[active]
            x_new = np.where((x_new >= la) & (x_new <= ha), x_new, 0.5 * (la + ha))
            x_new = np.where(res == 0, xa, x_new)
            x[active] = x_new
            moving = np.abs(x_new - xa) > 1e-15 * xa
            active = active[moving]
            if active.size == 0:
                break
        st = halfgap_state(x, 2.0 + t)
        s = 2.0 + t
        resid = np.abs(st.log_alpha - np.log(st.beta) + s - 2.0 * st.alpha)
        bad = resid > self.newton_tol * np.maximum(1.0, s)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ConvergenceError(
                f"alpha root find failed at s={s[i]!r}", residual=float(resid[i]), s=float(s[i]))
        return x

    def state(self, s) -> HalfGapState:
        (s,), _ = _prepare(s)
        return halfgap_state(self.halfgap(s), s)

    # -- diagonal functions -------------------------------------------------

    def alpha_beta(self, s):
        (s_arr,), scalar = _prepare(s)
        st = self.state(s_arr)
        alpha = np.where(s_arr == 2.0, 1.0, st.alpha)
        beta = np.where(s_arr == 2.0, 1.0, st.beta)
        return _scalar_or_array(alpha, scalar), _scalar_or_array(beta, scalar)

    def log_alpha(self, s):
        (s_arr,), scalar = _prepare(s)
        return _scalar_or_array(self.state(s_arr).log_alpha, scalar)

    def pi_value(self, s):
        (s_arr,), scalar = _prepare(s)
        return _scalar_or_array(self.state(s_arr).pi, scalar)

    def pi_prime(self, s):
        """Closed-form derivative; at ``s = 2`` the one-sided limit -1/2."""
        (s_arr,), scalar = _prepare(s)
        return _scalar_or_array(self.state(s_arr).pi_prime, scalar)

    def tilde_f(self, s):
        (s_arr,), scalar = _prepare(s)
        st = self.state(s_arr)
        val = xlogy(st.alpha, st.alpha) + xlogy(st.beta, st.beta) + st.alpha * st.beta
        return _scalar_or_array(val, scalar)

    def tilde_f_prime(self, s):
        (s_arr,), scalar = _prepare(s)
        return _scalar_or_array(self.state(s_arr).tilde_f_prime, scalar)

    def tilde_f_second(self, s):
        (s_arr,), scalar = _prepare(s)
        return _scalar_or_array(self.state(s_arr).tilde_f_second, scalar)

    # -- the plane ----------------------------------------------------------

    @staticmethod
    def in_a(a, b):
        """Boolean mask of region A.

        For s > 2 the point with smaller coordinate lo and larger hi sits in
        A iff g'(lo) >= 0, i.e. ``hi - lo >= log(hi / lo)``.  No root find is
        needed.
        """
        (a, b), scalar = _prepare(a, b)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            mask = (a + b >= 2.0) & (lo > 0) & (hi - lo >= np.log(hi) - np.log(lo))
        return bool(mask) if scalar else mask

    def classify(self, a, b):
        """Region of ``(a, b)``; arrays give an array of ``Region`` tags."""
        (a_arr, b_arr), scalar = _prepare(a, b)
        if np.any(a_arr < 0) or np.any(b_arr < 0):
            raise DomainError("requires a, b >= 0")
        mask = self.in_a(a_arr, b_arr)
        if scalar:
            return Region.A if bool(mask) else Region.B
        out = np.empty(mask.shape, dtype=object)
        out[mask] = Region.A
        out[~mask] = Region.B
        return out

    def f_value(self, a, b):
        (a, b), scalar = _prepare(a, b)
        if np.any(a < 0) or np.any(b < 0):
            raise DomainError("requires a, b >= 0")
        out = np.array(xlogy(a, a) + xlogy(b, b) + a * b, dtype=float)
        mask = self.in_a(a, b)
        if np.any(mask):
            out[mask] = self.tilde_f(a[mask] + b[mask])
        return _scalar_or_array(out, scalar)

    def f_grad(self, a, b):
        """Gradient ``(f_a, f_b)``.

        On the axes inside B the log term makes the gradient ``-inf``; it is
        returned as such rather than raised.
        """
        (a, b), scalar = _prepare(a, b)
        if np.any(a < 0) or np.any(b < 0):
            raise DomainError("requires a, b >= 0")
        with np.errstate(divide="ignore"):
            fa = np.array(np.log(a) + b + 1.0, dtype=float)
            fb = np.array(np.log(b) + a + 1.0, dtype=float)
        mask = self.in_a(a, b)
        if np.any(mask):
            d = self.tilde_f_prime(a[mask] + b[mask])
            fa[mask] = d
            fb[mask] = d
        return _scalar_or_array(fa, scalar), _scalar_or_array(fb, scalar)

    def product(self, a, b):
        """P(a, b): pi(a + b) on A and a*b on B."""
        (a, b), scalar = _prepare(a, b)
        out = np.array(a * b, dtype=float)
        mask = self.in_a(a, b)
        if np.any(mask):
            out[mask] = self.pi_value(a[mask] + b[mask])
        return _scalar_or_array(out, scalar)

    # -- r0 -----------------------------------------------------------------

    def r0(self) -> float:
        return float(self.r0_cache)

    def _scan_r0(self) -> dict:
        s = np.concatenate([
            2.0 + np.geomspace(1e-12, 1e4 - 2.0, 10_000),
            np.linspace(2.0, 2.1, 1001)[1:],
        ])
        s.sort()
        val = s * self.tilde_f_second(s)
        i = int(np.argmin(val))
        lim_lo = 2.0 * float(halfgap_state(np.array(0.0)).tilde_f_second)
        lim_hi = 1.0
        scan_min = float(val[i])
        r0 = min(scan_min, lim_lo, lim_hi)
        return {
            "r0": r0,
            "source": "scan",
            "scan_min": scan_min,
            "scan_argmin": float(s[i]),
            "scan_points": int(s.size),
            "limit_at_2": lim_lo,
            "value_at_max_s": float(val[-1]),
            "attained_in_interior": bool(scan_min <= min(lim_lo, lim_hi)),
        }

