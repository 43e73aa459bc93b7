"""Property batteries behind ``crossdiff certify``.

Each property yields a record with its measured value, the bound it is held
to and a signed margin (positive means passing).  Reports carry no clocks or
host details, so a fixed seed gives byte-identical JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import __version__, presets
from .envelope import EnvelopeOracle, f0
from .jko import DensityPair, JkoConfig, de_giorgi_step, jko_step
from .kernels import certification_sweep, convolve, h1conv_ratio, make_mollifier
from .slope import (b_quadratic_form, chain_rule_sides, energy_f, energy_g, forward_diff,
                    slope_a_alternative, slope_f)
from .transport import Density, Grid1D, displacement_interpolate, quantile_w2, sinkhorn_w2

SUITES = ("envelope", "transport", "jko", "slope", "kernel")

__all__ = ["SUITES", "Check", "run_suite", "report_json"]


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    bound: float
    kind: str  # "le" or "ge"

    @property
    def margin(self) -> float:
        return self.bound - self.value if self.kind == "le" else self.value - self.bound

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value)) and self.margin >= 0

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": _num(self.value),
                "bound": _num(self.bound), "relation": self.kind, "margin": _num(self.margin)}


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else repr(v)


def le(name, value, bound):
    return Check(name, float(value), float(bound), "le")


def ge(name, value, bound):
    return Check(name, float(value), float(bound), "ge")


def _rel(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)) / np.maximum(np.abs(b), 1e-300)))


# ------------------------------------------------------------------ envelope

def envelope_checks(rng, oracle: EnvelopeOracle, n_samples: int = 100_000):
    out = []
    s = np.concatenate([np.linspace(2.0, 50.0, 2001), np.geomspace(50.0, 1e4, 200)])
    alpha, beta = oracle.alpha_beta(s)
    out.append(le("alpha_plus_beta_minus_s", np.max(np.abs(alpha + beta - s)), 1e-10))
    inner = s > 2.0
    si = s[inner]
    # g'(alpha) in log form, since alpha underflows for large s
    gp = np.abs(oracle.log_alpha(si) - np.log(beta[inner]) + si - 2 * alpha[inner]) / np.maximum(1.0, si)
    out.append(le("alpha_stationarity", np.max(gp), 1e-9))
    out.append(le("pi_at_2", abs(oracle.pi_value(2.0) - 1.0), 1e-8))
    d = 1e-6
    one_sided = (oracle.pi_value(2.0 + d) - oracle.pi_value(2.0)) / d
    out.append(le("pi_prime_at_2_one_sided", abs(one_sided + 0.5), 1e-3))
    out.append(le("pi_prime_closed_form_at_2", abs(oracle.pi_prime(2.0) + 0.5), 1e-12))

    sf = np.linspace(2.01, 50.0, 500)
    hs = 1e-5 * sf
    fd_pi = (oracle.pi_value(sf + hs) - oracle.pi_value(sf - hs)) / (2 * hs)
    out.append(le("pi_prime_vs_fd", np.max(np.abs(fd_pi - oracle.pi_prime(sf))), 1e-6))
    fd_f2 = (oracle.tilde_f_prime(sf + hs) - oracle.tilde_f_prime(sf - hs)) / (2 * hs)
    out.append(le("tilde_f_second_vs_fd", np.max(np.abs(fd_f2 - oracle.tilde_f_second(sf))), 1e-5))
    out.append(ge("s_minus_2pi_positive", np.min(sf - 2 * oracle.pi_value(sf)), 0.0))
    out.append(ge("tilde_f_second_positive", np.min(oracle.tilde_f_second(sf)), 0.0))

    p = rng.uniform(0.0, 6.0, size=(n_samples, 2))
    q = rng.uniform(0.0, 6.0, size=(n_samples, 2))
    fp = oracle.f_value(p[:, 0], p[:, 1])
    fq = oracle.f_value(q[:, 0], q[:, 1])
    mid = 0.5 * (p + q)
    fm = oracle.f_value(mid[:, 0], mid[:, 1])
    excess = fm - 0.5 * (fp + fq) - 1e-12 * (1.0 + np.abs(fm))
    out.append(le("midpoint_convexity_violations", np.count_nonzero(excess > 0), 0))

    fb = f0(p[:, 0], p[:, 1])
    in_a = oracle.in_a(p[:, 0], p[:, 1])
    out.append(le("f_above_f0_violations", np.count_nonzero(fp > fb), 0))
    out.append(le("f_differs_from_f0_on_b", np.count_nonzero(fp[~in_a] != fb[~in_a]), 0))
    out.append(le("b_outside_ab_lt_1", np.count_nonzero(p[~in_a, 0] * p[~in_a, 1] >= 1.0), 0))

    lo = 2.0 + 1e-6
    out.append(le("s_f2_limit_at_2", abs(lo * oracle.tilde_f_second(lo) - 0.5), 1e-2))
    out.append(le("s_f2_limit_at_1e4", abs(1e4 * oracle.tilde_f_second(1e4) - 1.0), 1e-2))
    r0 = oracle.r0()
    out.append(ge("r0_positive", r0, np.nextafter(0.0, 1.0)))
    out.append(le("r0_at_most_1", r0, 1.0))
    return out


# ------------------------------------------------------------------ transport

def transport_checks(rng):
    out = []
    g = Grid1D(128)
    src = np.zeros(128)
    src[20:40] = 1.0
    tgt = np.roll(src, 10)
    r = quantile_w2(Density.normalized(g, src), Density.normalized(g, tgt))
    out.append(le("translation_w2", abs(r.w2_squared - (10 * g.h) ** 2), 1e-12))

    x = g.centers
    a = Density.normalized(g, np.exp(-0.5 * ((x - 0.3) / 0.06) ** 2) + 0.05)
    b = Density.normalized(g, np.exp(-0.5 * ((x - 0.65) / 0.1) ** 2) + 0.05)
    ex = quantile_w2(a, b)
    sk = sinkhorn_w2(a, b, 1e-4, tol=1e-6)
    out.append(le("sinkhorn_vs_quantile_rel", abs(sk.w2_squared - ex.w2_squared) / ex.w2_squared, 1e-2))
    ident = g.h * np.sum(a.values * ex.potential_grad ** 2)
    out.append(le("potential_identity_rel", abs(ident - ex.w2_squared) / ex.w2_squared, 1e-8))

    worst = mass = 0.0
    for t in (0.25, 0.5, 0.75):
        mid = displacement_interpolate(a, b, t)
        mass = max(mass, abs(mid.mass - 1.0))
        w = quantile_w2(a, mid).w2_squared
        worst = max(worst, abs(np.sqrt(w) - t * np.sqrt(ex.w2_squared)) / (t * np.sqrt(ex.w2_squared)))
    out.append(le("geodesic_constant_speed_rel", worst, 2e-2))
    out.append(le("geodesic_mass", mass, 1e-12))

    # random pairs: the exact cost is symmetric and the identity holds
    sym = idn = 0.0
    for _ in range(20):
        u = Density.normalized(g, rng.random(128) ** 3)
        v = Density.normalized(g, rng.random(128) ** 3)
        uv, vu = quantile_w2(u, v), quantile_w2(v, u)
        sym = max(sym, abs(uv.w2_squared - vu.w2_squared) / uv.w2_squared)
        idn = max(idn, abs(g.h * np.sum(u.values * uv.potential_grad ** 2) - uv.w2_squared)
                  / uv.w2_squared)
    out.append(le("random_w2_symmetry_rel", sym, 1e-10))
    out.append(le("random_potential_identity_rel", idn, 1e-8))
    return out


# ------------------------------------------------------------------ jko

def jko_checks(rng, oracle: EnvelopeOracle):
    out = []
    g = Grid1D(64)
    cfg = JkoConfig(tau=1e-3, eps_reg=1e-4)
    uni = DensityPair.uniform(g)
    st = jko_step(uni, cfg, oracle)
    dev = max(np.max(np.abs(st.next.rho.values - 1.0)), np.max(np.abs(st.next.mu.values - 1.0)))
    out.append(le("uniform_fixed_point_sup", dev, 1e-8))
    out.append(le("uniform_fixed_point_w2", st.w2sq_rho + st.w2sq_mu, 1e-12))

    slack = 10 * cfg.eps_reg * g.n_cells * g.h
    worst_gap, worst_mass, worst_kin, worst_dg, worst_mono = np.inf, 0.0, 0.0, 0.0, np.inf
    for name in ("two_bumps", "supercritical"):
        cur = presets.build(name, g)
        st = jko_step(cur, cfg, oracle)
        gap = energy_f(cur, oracle) - energy_f(st.next, oracle) - (st.w2sq_rho + st.w2sq_mu) / (2 * cfg.tau)
        worst_gap = min(worst_gap, gap)
        worst_mass = max(worst_mass, abs(st.next.rho.mass - 1), abs(st.next.mu.mass - 1))
        for dens, grad, w2 in ((st.next.rho, st.potential_grad_rho, st.w2sq_rho),
                               (st.next.mu, st.potential_grad_mu, st.w2sq_mu)):
            v = grad / cfg.tau
            kin = g.h * np.sum(dens.values * v ** 2)
            worst_kin = max(worst_kin, abs(kin - w2 / cfg.tau ** 2) / (w2 / cfg.tau ** 2))
        one = de_giorgi_step(cur, 1.0, cfg, oracle)
        worst_dg = max(worst_dg, np.max(np.abs(one.next.rho.values - st.next.rho.values)),
                       np.max(np.abs(one.next.mu.values - st.next.mu.values)))
        w = [de_giorgi_step(cur, s, cfg, oracle, st.log_scalings) for s in (0.25, 0.5, 0.75)] + [st]
        w2 = np.array([r.w2sq_rho + r.w2sq_mu for r in w])
        worst_mono = min(worst_mono, float(np.min(np.diff(w2))))
    out.append(ge("energy_decrease_gap", worst_gap, -slack))
    out.append(le("mass_conservation", worst_mass, 1e-10))
    out.append(le("velocity_kinetic_identity_rel", worst_kin, 1e-8))
    out.append(le("de_giorgi_s1_matches_step", worst_dg, 1e-8))
    out.append(ge("de_giorgi_w2_monotone_in_s", worst_mono, 0.0))

    one = de_giorgi_step(uni, 0.3, cfg, oracle)
    out.append(le("de_giorgi_uniform_anchor", np.max(np.abs(one.next.rho.values - 1.0)), 1e-8))
    return out


# ------------------------------------------------------------------ slope

def _b_samples(rng, oracle, n):
    a = np.exp(rng.uniform(np.log(1e-3), np.log(20.0), n))
    b = np.exp(rng.uniform(np.log(1e-3), np.log(20.0), n))
    keep = ~oracle.in_a(a, b)
    return a[keep], b[keep]


def slope_checks(rng, oracle: EnvelopeOracle, n_samples: int = 100_000):
    out = []
    r0 = oracle.r0()
    a, b = _b_samples(rng, oracle, n_samples)
    ga, gb = rng.standard_normal((2, a.size))
    q = b_quadratic_form(a, b, ga, gb, r0)
    out.append(le("b_quadratic_form_violations", np.count_nonzero(q < -1e-12), 0))

    # pointwise chain-rule inequality on random states and gradients
    rho = np.exp(rng.uniform(np.log(1e-2), np.log(10.0), 1000))
    mu = np.exp(rng.uniform(np.log(1e-2), np.log(10.0), 1000))
    gr, gm = rng.standard_normal((2, 1000))
    lhs, rhs, in_a = chain_rule_sides(rho, mu, gr, gm, oracle)
    out.append(le("chain_rule_inequality_violations",
                  np.count_nonzero(lhs > rhs + 1e-12 * (1.0 + np.abs(rhs))), 0))
    if np.any(in_a):
        out.append(le("chain_rule_equality_on_a_rel", _rel(lhs[in_a], rhs[in_a]), 1e-6))

    g = Grid1D(128)
    out.append(le("uniform_slope", slope_f(DensityPair.uniform(g), oracle).total, 0.0))

    # equal species on a long domain: every cell has S < 2, hence lies in B
    gb = Grid1D(128, 2.0)
    x = gb.centers
    r = 0.3 + 0.3 * np.exp(-0.5 * ((x - 1.0) / 0.2) ** 2)
    pair = DensityPair.from_arrays(gb, r, r)
    rv = pair.rho.values
    out.append(le("equal_species_cells_in_a", np.count_nonzero(oracle.in_a(rv, rv)), 0))
    sl = slope_f(pair, oracle).total
    grv = forward_diff(rv, gb.h)
    closed = 2 * gb.h * np.sum(grv ** 2 * (1 + rv) ** 2 / rv)
    out.append(le("b_equal_species_reduction_rel", abs(sl - closed) / closed, 1e-12))

    ga_grid = Grid1D(128, 0.5)
    dense = presets.smooth_dense(ga_grid)
    br = slope_f(dense, oracle)
    out.append(le("all_a_pair_b_part", br.b_region_part, 0.0))
    alt = slope_a_alternative(dense, oracle)
    out.append(le("a_slope_two_forms_rel", abs(br.a_region_part - alt) / alt, 1e-6))

    worst = np.inf
    for _ in range(20):
        p = DensityPair.from_arrays(g, rng.random(128) * 3, rng.random(128) * 3)
        worst = min(worst, slope_f(p, oracle).total)
    out.append(ge("slope_nonnegative", worst, 0.0))

    A = np.exp(rng.uniform(np.log(1e-4), np.log(50.0), n_samples))
    B = np.exp(rng.uniform(np.log(1e-4), np.log(50.0), n_samples))
    gap = oracle.f_value(A, B) - (A * np.log(A) + B * np.log(B))
    out.append(ge("f_above_entropy", np.min(gap), -1e-12))
    out.append(le("entropy_uniform", abs(energy_g(DensityPair.uniform(g))), 1e-15))
    return out


# ------------------------------------------------------------------ kernel

def kernel_checks(rng, seed: int):
    out = []
    extra = {}
    worst_mass = worst_d = worst_cs = worst_scale = 0.0
    worst_cs_chain = -np.inf
    worst_lit = 0.0
    for m in (3.0, 4.0, 6.0):
        for eps in (0.1, 0.02):
            for n in (128, 256):
                g = Grid1D(n)
                k = make_mollifier(m, eps, g)
                worst_mass = max(worst_mass, abs(g.h * k.values.sum() - 1.0))
                worst_d = max(worst_d, np.max(eps * np.abs(k.deriv_values) / (m * k.values)))
                nz = k.deriv_values != 0
                cs = ((1 + 1 / m) * k.deriv_values[nz] ** 2
                      / (k.second_deriv_pos[nz] * k.values[nz]))
                worst_cs = max(worst_cs, np.max(cs))
                w = rng.random(n) ** 2
                cw, dw, sw = convolve(w, k), convolve(w, k, "deriv"), convolve(w, k, "second_pos")
                worst_cs_chain = max(worst_cs_chain,
                                     np.max(((1 + 1 / m) * dw ** 2 - cw * sw) / (cw * sw)))
            pts = rng.random(10)
            worst_scale = max(worst_scale, _rel(k.evaluate(pts), _direct_sum(m, eps, pts)))
        # literal profile bounds at unit scale
        k1 = make_mollifier(m, 1.0, Grid1D(256))
        xs = rng.uniform(-0.5, 0.5, 1000)
        xs = xs[xs != 0]
        worst_lit = max(worst_lit, np.max(np.abs(k1.evaluate_deriv(xs)) / (m * k1.evaluate(xs))))
    out.append(le("kernel_mass", worst_mass, 1e-10))
    out.append(le("derivative_bound_ratio", worst_d, 1.0))
    out.append(le("derivative_bound_ratio_unit_scale", worst_lit, 1.0))
    out.append(le("second_derivative_bound_ratio", worst_cs, 1.0))
    out.append(le("cauchy_schwarz_chain_rel", worst_cs_chain, 1e-10))
    out.append(le("scale_identity_rel", worst_scale, 1e-10))

    g = Grid1D(256)
    k = make_mollifier(4.0, 0.05, g)
    u = np.sin(2 * np.pi * g.centers) + 0.3 * rng.standard_normal(256)
    r1 = h1conv_ratio(u, 0.2, k)
    r2 = h1conv_ratio(7.5 * u, 1.5, k)
    out.append(le("h1conv_homogeneity_rel", abs(r1 - r2) / r1, 1e-10))

    sweep = certification_sweep(seed=seed)
    extra["kernel_sweep"] = sweep.to_dict()
    extra["K_est"] = sweep.k_est
    out.append(ge("k_est_positive", sweep.k_est, np.nextafter(0.0, 1.0)))
    out.append(le("k_est_finite", 0.0 if np.isfinite(sweep.k_est) else 1.0, 0.0))
    out.append(le("k_est_refinement_deviation", abs(sweep.refinement_ratio - 1.0), 0.2))
    return out, extra


def _direct_sum(m, eps, x, K=20_000):
    """Lattice sum over |k| <= K plus an integral estimate of the remaining tail."""
    k = np.arange(-K, K + 1)
    c = 0.5 * (m - 1)
    body = np.array([np.sum(c / eps * (1 + np.abs(xi - k) / eps) ** -m) for xi in x])
    # int_{K+1/2}^inf of both tails, midpoint rule
    tail = 2 * c / eps * eps / (m - 1) * (1 + (K + 0.5) / eps) ** (1 - m)
    return body + tail


# ------------------------------------------------------------------ driver

def run_suite(suite: str, seed: int = 0, oracle: EnvelopeOracle | None = None) -> dict:
    """Run one battery (or ``"all"``) and return the report dictionary."""
    names = SUITES if suite == "all" else (suite,)
    for n in names:
        if n not in SUITES:
            raise ValueError(f"unknown suite {suite!r}; choose from {SUITES + ('all',)}")
    oracle = oracle or EnvelopeOracle()
    report = {"suite": suite, "seed": int(seed), "version": __version__, "batteries": {}}
    checks_all = []
    for i, n in enumerate(names):
        rng = np.random.default_rng([int(seed), i])
        extra = {}
        if n == "envelope":
            checks = envelope_checks(rng, oracle)
            extra["r0"] = oracle.r0_report
        elif n == "transport":
            checks = transport_checks(rng)
        elif n == "jko":
            checks = jko_checks(rng, oracle)
        elif n == "slope":
            checks = slope_checks(rng, oracle)
        else:
            checks, extra = kernel_checks(rng, seed)
            report["K_est"] = extra["K_est"]
        report["batteries"][n] = {
            "passed": all(c.passed for c in checks),
            "properties": [c.to_dict() for c in checks],
            **extra,
        }
        checks_all.extend((n, c) for c in checks)
    failing = [f"{n}.{c.name}" for n, c in checks_all if not c.passed]
    report["passed"] = not failing
    report["first_failure"] = failing[0] if failing else None
    report["n_properties"] = len(checks_all)
    report["n_failed"] = len(failing)
    return report


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
