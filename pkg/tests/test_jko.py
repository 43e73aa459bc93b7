import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crossdiff import presets
from crossdiff.envelope import EnvelopeOracle
from crossdiff.errors import GridMismatchError
from crossdiff.jko import (DensityPair, InterpolationWarning, JkoConfig, TrajectoryError,
                           de_giorgi_step, interpolate, jko_step, prox_envelope, run_trajectory)
from crossdiff.slope import energy_f
from crossdiff.transport import Density, Grid1D, quantile_w2

from oracles import brute_prox

ORACLE = EnvelopeOracle()
G = Grid1D(48)
CFG = JkoConfig(tau=1e-3, eps_reg=1e-4)


@pytest.fixture(scope="module")
def short_traj():
    init = presets.build("two_bumps", G)
    return run_trajectory(init, CFG, ORACLE, 4, dg_nodes=(0.25, 0.5, 1.0))


@pytest.mark.parametrize("xi_p, xi_q, lam", [
    (0.3, 0.5, 0.05),     # B, small product
    (2.0, 0.05, 0.05),    # B, lopsided
    (3.0, 2.5, 0.05),     # A
    (1.1, 1.0, 0.5),      # near s = 2
    (6.0, 0.4, 0.2),      # near the A/B boundary
    (1e-6, 2.0, 0.05),    # almost empty species
])
def test_prox_matches_brute_force(xi_p, xi_q, lam):
    lp, lq = prox_envelope(np.log([xi_p]), np.log([xi_q]), lam, ORACLE)
    z, fmin, obj = brute_prox(lambda p, q: ORACLE.f_value(p, q), xi_p, xi_q, lam)
    assert obj(np.array([lp[0], lq[0]])) <= fmin + 1e-11 * (1 + abs(fmin))
    assert math.exp(lp[0]) == pytest.approx(math.exp(z[0]), rel=1e-4, abs=1e-9)
    assert math.exp(lq[0]) == pytest.approx(math.exp(z[1]), rel=1e-4, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(-6, 2.5), st.floats(-6, 2.5), st.floats(1e-3, 10.0))
def test_prox_stationarity(lxp, lxq, lam):
    lp, lq = prox_envelope(np.array([lxp]), np.array([lxq]), lam, ORACLE)
    p, q = math.exp(lp[0]), math.exp(lq[0])
    fa, fb = ORACLE.f_grad(p, q)
    # grad f + lam * log(p / xi) = 0 in both coordinates
    assert abs(fa + lam * (lp[0] - lxp)) <= 1e-8 * (1 + abs(fa))
    assert abs(fb + lam * (lq[0] - lxq)) <= 1e-8 * (1 + abs(fb))


def test_prox_warm_start_gives_same_answer():
    rng = np.random.default_rng(0)
    lxp, lxq = rng.uniform(-3, 2, (2, 200))
    lp, lq, guess = prox_envelope(lxp, lxq, 0.05, ORACLE, return_guess=True)
    lp2, lq2 = prox_envelope(lxp + 1e-3, lxq - 1e-3, 0.05, ORACLE, guess=guess)
    lp3, lq3 = prox_envelope(lxp + 1e-3, lxq - 1e-3, 0.05, ORACLE)
    assert np.allclose(lp2, lp3, atol=1e-10)
    assert np.allclose(lq2, lq3, atol=1e-10)


def test_prox_large_weight_returns_prior():
    lxp, lxq = np.log([0.4, 3.0]), np.log([0.7, 2.0])
    lp, lq = prox_envelope(lxp, lxq, 1e8, ORACLE)
    assert np.allclose(lp, lxp, atol=1e-6) and np.allclose(lq, lxq, atol=1e-6)


def test_config_validation():
    for bad in (dict(tau=0, eps_reg=1), dict(tau=1, eps_reg=-1),
                dict(tau=1, eps_reg=1, scaling_tol=0), dict(tau=1, eps_reg=1, max_scaling_iter=0)):
        with pytest.raises(ValueError):
            JkoConfig(**bad)
    assert CFG.floor(G) == pytest.approx(1e-9 / G.h)
    assert JkoConfig(1, 1, mass_floor=0.5).floor(G) == 0.5


def test_pair_checks_grid():
    with pytest.raises(GridMismatchError):
        DensityPair(Density.uniform(G), Density.uniform(Grid1D(12)))
    assert np.allclose(DensityPair.uniform(G).s_sum, 2.0)


def test_uniform_is_fixed_point():
    st_ = jko_step(DensityPair.uniform(G), CFG, ORACLE)
    assert np.max(np.abs(st_.next.rho.values - 1)) <= 1e-8
    assert np.max(np.abs(st_.next.mu.values - 1)) <= 1e-8
    assert st_.w2sq_rho + st_.w2sq_mu <= 1e-12
    for s in (0.2, 0.7):
        d = de_giorgi_step(DensityPair.uniform(G), s, CFG, ORACLE)
        assert np.max(np.abs(d.next.rho.values - 1)) <= 1e-8


@pytest.mark.parametrize("name", ["two_bumps", "step_overlap", "supercritical"])
def test_single_step_invariants(name):
    cur = presets.build(name, G)
    st_ = jko_step(cur, CFG, ORACLE)
    nxt = st_.next
    assert nxt.rho.mass == pytest.approx(1.0, abs=1e-10)
    assert nxt.mu.mass == pytest.approx(1.0, abs=1e-10)
    assert np.all(nxt.rho.values >= 0) and np.all(nxt.mu.values >= 0)
    assert st_.w2sq_rho >= 0 and st_.w2sq_mu >= 0
    slack = 10 * CFG.eps_reg * G.n_cells * G.h
    lhs = energy_f(nxt, ORACLE) + (st_.w2sq_rho + st_.w2sq_mu) / (2 * CFG.tau)
    assert lhs <= energy_f(cur, ORACLE) + slack
    assert st_.marginal_error < CFG.scaling_tol
    # the reported cost is the exact distance between the iterates
    assert st_.w2sq_rho == pytest.approx(quantile_w2(nxt.rho, cur.rho).w2_squared, rel=1e-12)
    # velocity / kinetic identity
    for dens, grad, w2 in ((nxt.rho, st_.potential_grad_rho, st_.w2sq_rho),
                           (nxt.mu, st_.potential_grad_mu, st_.w2sq_mu)):
        v = grad / CFG.tau
        assert G.h * np.sum(dens.values * v ** 2) == pytest.approx(w2 / CFG.tau ** 2, rel=1e-8)


def test_de_giorgi_s1_matches_step_and_is_monotone():
    cur = presets.build("two_bumps", G)
    st_ = jko_step(cur, CFG, ORACLE)
    one = de_giorgi_step(cur, 1.0, CFG, ORACLE)
    assert np.max(np.abs(one.next.rho.values - st_.next.rho.values)) <= 1e-8
    w2 = [de_giorgi_step(cur, s, CFG, ORACLE).w2sq_rho for s in (0.25, 0.5, 0.75)] + [st_.w2sq_rho]
    assert all(b >= a for a, b in zip(w2, w2[1:]))
    with pytest.raises(ValueError):
        de_giorgi_step(cur, 0.0, CFG, ORACLE)


def test_trajectory_shape_and_energy(short_traj):
    tr = short_traj
    assert tr.n_steps == 4
    assert len(tr.pairs) == 5 and tr.pairs[0] is tr.initial
    assert all(len(row) == 3 for row in tr.de_giorgi_samples)
    assert tr.de_giorgi_samples[0][-1] is tr.steps[0]
    F = [energy_f(p, ORACLE) for p in tr.pairs]
    slack = 10 * CFG.eps_reg * G.n_cells * G.h
    assert all(b <= a + slack for a, b in zip(F, F[1:]))
    total = sum(s.w2sq_rho + s.w2sq_mu for s in tr.steps) / (2 * CFG.tau)
    assert total <= F[0] - min(F) + slack * tr.n_steps
    for (v, w), s in zip(tr.velocities, tr.steps):
        assert np.array_equal(v, s.potential_grad_rho / CFG.tau)


def test_zero_steps_and_node_validation():
    tr = run_trajectory(DensityPair.uniform(G), CFG, ORACLE, 0)
    assert tr.n_steps == 0 and tr.pairs == [tr.initial]
    with pytest.raises(ValueError):
        run_trajectory(DensityPair.uniform(G), CFG, ORACLE, 1, dg_nodes=(0.0, 1.0))
    with pytest.raises(ValueError):
        run_trajectory(DensityPair.uniform(G), CFG, ORACLE, -1)


def test_failure_returns_partial_trajectory():
    cfg = JkoConfig(tau=1e-3, eps_reg=1e-4, max_scaling_iter=2)
    init = presets.build("two_bumps", G)
    with pytest.raises(TrajectoryError) as info:
        run_trajectory(init, cfg, ORACLE, 3)
    assert info.value.partial.n_steps == 0
    assert info.value.partial.initial is init


def test_interpolations(short_traj):
    tr = short_traj
    tau = tr.tau
    for k in range(1, tr.n_steps + 1):
        for kind in ("constant", "geodesic"):
            p = interpolate(tr, k * tau, kind)
            assert np.allclose(p.rho.values, tr.pairs[k].rho.values, atol=1e-12)
    assert interpolate(tr, 0.0, "geodesic") is tr.initial
    # right-continuous piecewise constant on (k tau, (k+1) tau]
    assert interpolate(tr, 1.5 * tau, "constant") is tr.pairs[2]
    assert interpolate(tr, 1.25 * tau, "de_giorgi") is tr.de_giorgi_samples[1][0].next
    with pytest.warns(InterpolationWarning):
        interpolate(tr, 1.4 * tau, "de_giorgi")
    with pytest.raises(ValueError):
        interpolate(tr, 10 * tau)
    with pytest.raises(ValueError):
        interpolate(tr, tau, "spline")


def test_constant_and_geodesic_stay_close(short_traj):
    tr = short_traj
    step_max = max(math.sqrt(s.w2sq_rho) for s in tr.steps)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for t in np.linspace(0.1, tr.n_steps - 0.1, 13) * tr.tau:
            c = interpolate(tr, t, "constant").rho
            g = interpolate(tr, t, "geodesic").rho
            assert math.sqrt(quantile_w2(c, g).w2_squared) <= step_max + 1e-12


positive16 = arrays(np.float64, 16, elements=st.floats(0.05, 3.0))


@settings(max_examples=15, deadline=None)
@given(positive16, positive16)
def test_random_pairs_step_conserves_and_decreases(r, m):
    g = Grid1D(16)
    cur = DensityPair.from_arrays(g, r, m)
    st_ = jko_step(cur, CFG, ORACLE)
    assert st_.next.rho.mass == pytest.approx(1, abs=1e-10)
    assert st_.next.mu.mass == pytest.approx(1, abs=1e-10)
    slack = 10 * CFG.eps_reg * g.n_cells * g.h
    lhs = energy_f(st_.next, ORACLE) + (st_.w2sq_rho + st_.w2sq_mu) / (2 * CFG.tau)
    assert lhs <= energy_f(cur, ORACLE) + slack
