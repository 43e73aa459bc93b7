"""Acceptance criteria C1 to C11.

Each test prints one ``C<k> PASS`` or ``C<k> FAIL`` line with the measured
numbers, then asserts.  Trajectories shared between criteria are cached per
session.
"""
import math
import os
import subprocess
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from crossdiff import presets
from crossdiff.certify import run_suite
from crossdiff.envelope import EnvelopeOracle
from crossdiff.jko import DensityPair, JkoConfig, jko_step, run_trajectory
from crossdiff.slope import (b_quadratic_form, chain_rule_check, chain_rule_sides, edi_report,
                             energy_f, forward_diff)
from crossdiff.transport import Grid1D

pytestmark = pytest.mark.slow

ORACLE = EnvelopeOracle()
N, TAU, STEPS, EPS = 128, 1e-3, 100, 1e-4
GRID = Grid1D(N)


def report(capsys, tag, ok, detail):
    with capsys.disabled():
        print(f"\n{tag} {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


def props(rep, suite):
    return {p["name"]: p for p in rep["batteries"][suite]["properties"]}


def failed(rep, suite):
    return [n for n, p in props(rep, suite).items() if not p["passed"]]


@lru_cache(maxsize=None)
def trajectory(preset, eps, nodes=None):
    cfg = JkoConfig(tau=TAU, eps_reg=eps)
    kw = {} if nodes is None else {"dg_nodes": nodes}
    t0 = time.perf_counter()
    tr = run_trajectory(presets.build(preset, GRID), cfg, ORACLE, STEPS, **kw)
    return tr, edi_report(tr, ORACLE), time.perf_counter() - t0


def test_c1_envelope_battery(capsys):
    t0 = time.perf_counter()
    rep = run_suite("envelope", seed=0)
    dt = time.perf_counter() - t0
    bad = failed(rep, "envelope")
    ok = not bad and dt < 30
    report(capsys, "C1", ok, f"{len(props(rep, 'envelope'))} properties, failed={bad}, {dt:.1f}s")
    assert ok


def test_c2_r0_endpoint_limits(capsys):
    lo = 2.0 + 1e-6
    at2 = lo * ORACLE.tilde_f_second(lo)
    at_inf = 1e4 * ORACLE.tilde_f_second(1e4)
    r0 = ORACLE.r0()
    ok = abs(at2 - 0.5) <= 1e-2 and abs(at_inf - 1.0) <= 1e-2 and 0 < r0 <= 1
    report(capsys, "C2", ok, f"s f''(2+1e-6)={at2:.6f}, s f''(1e4)={at_inf:.6f}, r0={r0:.6f}")
    assert ok


def test_c3_transport_battery(capsys):
    rep = run_suite("transport", seed=0)
    p = props(rep, "transport")
    bad = failed(rep, "transport")
    report(capsys, "C3", not bad,
           f"translation={p['translation_w2']['value']:.2e}, "
           f"sinkhorn_rel={p['sinkhorn_vs_quantile_rel']['value']:.2e}, "
           f"identity_rel={p['potential_identity_rel']['value']:.2e}, "
           f"geodesic_rel={p['geodesic_constant_speed_rel']['value']:.2e}, failed={bad}")
    assert not bad


def test_c4_jko_battery(capsys):
    tr, led, dt = trajectory("two_bumps", EPS)
    slack = 10 * EPS * N * GRID.h
    F = [energy_f(p, ORACLE) for p in tr.pairs]
    worst_rise = max(b - a for a, b in zip(F, F[1:]))
    fixed = jko_step(DensityPair.uniform(GRID), JkoConfig(TAU, EPS), ORACLE).next
    fixed_err = float(max(np.max(np.abs(fixed.rho.values - 1)), np.max(np.abs(fixed.mu.values - 1))))
    opt = max(r.optimality_residual for r in led.per_step)
    kinetic = sum(s.w2sq_rho + s.w2sq_mu for s in tr.steps) / (2 * TAU)
    cumulative = F[0] - F[-1] + STEPS * slack - kinetic
    parts = {"monotone": worst_rise <= slack, "fixed_point": fixed_err <= 1e-8,
             "optimality": opt <= 1e-3, "cumulative": cumulative >= 0, "runtime": dt < 180}
    ok = all(parts.values())
    report(capsys, "C4", ok,
           f"max F rise={worst_rise:.3e} (slack {slack:.1e}), fixed point err={fixed_err:.1e}, "
           f"optimality residual={opt:.3e} (bound 1e-3), cumulative margin={cumulative:.4f}, "
           f"{dt:.0f}s, parts={parts}")
    assert ok


@pytest.mark.parametrize("preset", ["two_bumps", "supercritical"])
def test_c5_discrete_edi(capsys, preset):
    _, led1, _ = trajectory(preset, EPS)
    _, led2, _ = trajectory(preset, EPS / 2)
    r1, r2 = led1.residual, led2.residual
    floor1 = -100 * (10 * EPS + 10 * GRID.h)
    floor2 = -100 * (10 * EPS / 2 + 10 * GRID.h)
    improves = abs(r2) <= 0.75 * abs(r1) if r1 < 0 else abs(r2) < abs(r1)
    ok = r1 >= floor1 and r2 >= floor2 and improves
    report(capsys, f"C5[{preset}]", ok,
           f"residual eps=1e-4: {r1:+.5f}, eps=5e-5: {r2:+.5f} (floor {floor1:.2f}), "
           f"improves={improves}")
    assert ok


@pytest.mark.parametrize("preset", presets.PRESETS + ("smooth_dense",))
def test_c6_flow_interchange(capsys, preset):
    if preset in ("two_bumps", "supercritical"):
        _, led, _ = trajectory(preset, EPS)
    else:
        _, led, _ = trajectory(preset, EPS, (1.0,))
    slack = 10 * EPS + 10 * GRID.h
    worst = min(r.flow_interchange_gap() for r in led.per_step)
    ok = worst >= -slack
    report(capsys, f"C6[{preset}]", ok, f"min G-decrease minus bound={worst:+.3e} (slack {slack:.1e})")
    assert ok


def test_c7_quadratic_form(capsys):
    rng = np.random.default_rng(7)
    a, b = np.exp(rng.uniform(np.log(1e-4), np.log(50.0), (2, 400_000)))
    keep = ~ORACLE.in_a(a, b)
    a, b = a[keep][:100_000], b[keep][:100_000]
    ga, gb = rng.standard_normal((2, a.size)) * np.exp(rng.uniform(-3, 3, (2, a.size)))
    q = b_quadratic_form(a, b, ga, gb, ORACLE.r0())
    viol = int(np.count_nonzero(q < -1e-12))
    ok = a.size == 100_000 and viol == 0
    report(capsys, "C7", ok, f"{a.size} B-region draws, violations={viol}, min={q.min():.3e}")
    assert ok


def _smooth_field(rng, x, L, base):
    k = np.arange(1, 5)[:, None]
    c = rng.standard_normal((2, 4, 1)) / k
    u = np.sum(c[0] * np.cos(2 * np.pi * k * x / L) + c[1] * np.sin(2 * np.pi * k * x / L), axis=0)
    return base * np.exp(0.5 * u)


def test_c8_chain_rule_inequality(capsys):
    rng = np.random.default_rng(8)
    g = Grid1D(64)
    x = g.centers
    viol = cells = 0
    for _ in range(1000):
        base = math.exp(rng.uniform(np.log(0.05), np.log(5.0)))
        r = _smooth_field(rng, x, g.length, base)
        m = _smooth_field(rng, x, g.length, base * math.exp(rng.uniform(-1, 1)))
        lhs, rhs, _ = chain_rule_sides(r, m, forward_diff(r, g.h), forward_diff(m, g.h), ORACLE)
        viol += int(np.count_nonzero(lhs > rhs + 1e-12 * (1 + np.abs(rhs))))
        cells += r.size
    worst_eq = 0.0
    a_pairs = 0
    for _ in range(200):
        r = _smooth_field(rng, x, g.length, 3.0)
        m = _smooth_field(rng, x, g.length, 3.0)
        if not np.all(ORACLE.in_a(r, m)):
            continue
        a_pairs += 1
        lhs, rhs, in_a = chain_rule_sides(r, m, forward_diff(r, g.h), forward_diff(m, g.h), ORACLE)
        worst_eq = max(worst_eq, float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300))))
    ok = viol == 0 and a_pairs >= 50 and worst_eq <= 1e-6
    report(capsys, "C8", ok, f"violations={viol} over {cells} cells of 1000 pairs, "
                             f"A-only pairs={a_pairs}, worst equality rel={worst_eq:.2e}")
    assert ok


def test_c9_kernel_battery(capsys):
    rep = run_suite("kernel", seed=0)
    bad = failed(rep, "kernel")
    sweep = rep["batteries"]["kernel"]["kernel_sweep"]
    ok = not bad and 0 < rep["K_est"] < math.inf
    report(capsys, "C9", ok, f"K_est={rep['K_est']:.4f}, n->2n ratio={sweep['refinement_ratio']:.4f}, "
                             f"failed={bad}")
    assert ok


def test_c10_chain_rule_refinement(capsys):
    # tau and eps_reg shrink with h so the time and entropic errors refine too
    out = {}
    for n, tau, eps, steps in ((128, 1e-3, 1e-4, 20), (256, 5e-4, 5e-5, 40)):
        g = Grid1D(n, 0.5)
        tr = run_trajectory(presets.smooth_dense(g), JkoConfig(tau, eps), ORACLE, steps,
                            dg_nodes=(1.0,))
        out[n] = {c: chain_rule_check(tr, c, ORACLE) for c in ("tilde_f_of_sum", "f_full")}
    ratios = {c: out[128][c] / out[256][c] for c in out[128]}
    ok = all(v >= 1.5 for v in ratios.values())
    report(capsys, "C10", ok, ", ".join(
        f"{c}: {out[128][c]:.3e} -> {out[256][c]:.3e} (ratio {ratios[c]:.2f})" for c in ratios))
    assert ok


def _certify(tmp_path, name, threads):
    env = dict(os.environ)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        env[var] = str(threads)
    out = tmp_path / name
    proc = subprocess.run([sys.executable, "-m", "crossdiff", "certify", "--suite", "all",
                           "--seed", "0", "--out", str(out)], env=env, capture_output=True)
    assert proc.returncode == 0, proc.stderr.decode()
    return out.read_bytes()


def test_c11_determinism(tmp_path, capsys):
    a = _certify(tmp_path, "a.json", 4)
    b = _certify(tmp_path, "b.json", 4)
    c = _certify(tmp_path, "c.json", 1)
    ok = a == b == c
    report(capsys, "C11", ok, f"three certify(all) reports of {len(a)} bytes, identical={ok}")
    assert ok
