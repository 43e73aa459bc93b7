"""Reference computations that share no code path with the package."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize


def g_diag(a, s):
    b = s - a
    return a * np.log(a) + b * np.log(b) + a * b


def g_diag_prime(a, s):
    return math.log(a) - math.log(s - a) + s - 2 * a


def alpha_bisection(s: float) -> float:
    """Left minimizer of g on the diagonal a + b = s > 2, by bisection in log a.

    g' increases from -inf on (0, a_inf), where a_inf is the inflection
    point, and is positive at a_inf, so the root there is unique.
    """
    a_inf = 0.5 * (s - math.sqrt(s * s - 2 * s))
    lo, hi = math.log(1e-300), math.log(a_inf)
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        a = math.exp(mid)
        val = mid - math.log(s - a) + s - 2 * a
        if val < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return math.exp(0.5 * (lo + hi))


def diagonal_hull(s: float, n: int = 20001):
    """Lower convex hull of g on a fine grid of (0, s); returns (a, hull(a)).

    The grid is refined geometrically towards both ends, where the
    minimizers sit for large s.
    """
    near = np.geomspace(1e-14 * s, 0.25 * s, n // 4)
    a = np.unique(np.concatenate([near, np.linspace(0, s, n)[1:-1], s - near]))
    y = g_diag(a, s)
    hull = []
    for i in range(a.size):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            cross = (a[i1] - a[i0]) * (y[i] - y[i0]) - (y[i1] - y[i0]) * (a[i] - a[i0])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return a, np.interp(a, a[hull], y[hull])


def central_diff(fun, x, rel_step=1e-5):
    x = np.asarray(x, dtype=float)
    h = rel_step * np.maximum(1.0, np.abs(x))
    return (fun(x + h) - fun(x - h)) / (2 * h)


def quantile_w2_sampled(edges, p, q, n_q: int = 200_001):
    """W2^2 of two piecewise-constant densities by midpoint rule on quantiles."""
    Fp = np.concatenate([[0], np.cumsum(p * np.diff(edges))])
    Fq = np.concatenate([[0], np.cumsum(q * np.diff(edges))])
    Fp, Fq = Fp / Fp[-1], Fq / Fq[-1]
    t = (np.arange(n_q) + 0.5) / n_q
    # np.interp on a nondecreasing CDF inverts it wherever the density is positive
    Qp = np.interp(t, Fp, edges)
    Qq = np.interp(t, Fq, edges)
    return float(np.mean((Qp - Qq) ** 2))


def brute_prox(f, xi_p, xi_q, lam):
    """Minimize f(p, q) + lam [KL(p|xi_p) + KL(q|xi_q)] over log p, log q."""

    def obj(z):
        p, q = math.exp(z[0]), math.exp(z[1])
        kl = p * (z[0] - math.log(xi_p)) - p + xi_p + q * (z[1] - math.log(xi_q)) - q + xi_q
        return float(f(p, q)) + lam * kl

    z0 = np.array([math.log(xi_p), math.log(xi_q)])
    best = None
    for start in (z0, z0 + 0.5, z0 - 0.5, np.array([0.0, 0.0])):
        r = minimize(obj, start, method="Nelder-Mead",
                     options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000})
        if best is None or r.fun < best.fun:
            best = r
    return best.x, best.fun, obj


def lattice_sum(m, eps, x, K=20_000):
    """Periodized (m-1)/2 (1+|y|/eps)^(-m)/eps by direct summation plus tail estimate."""
    k = np.arange(-K, K + 1)
    c = 0.5 * (m - 1)
    body = np.array([np.sum(c / eps * (1 + np.abs(xi - k) / eps) ** -m) for xi in np.atleast_1d(x)])
    tail = (1 + (K + 0.5) / eps) ** (1 - m)
    return body + tail
