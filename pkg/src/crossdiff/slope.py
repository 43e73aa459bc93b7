"""Energies, the slope functional and the energy-dissipation ledger.

Discrete gradients are forward differences at interfaces, assigned to the
cell on their left; the last interface is the no-flux wall and carries zero.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import xlogy

from .envelope import EnvelopeOracle, Region
from .errors import DomainError
from .jko import DensityPair, Trajectory

__all__ = [
    "forward_diff",
    "energy_f",
    "energy_g",
    "SlopeBreakdown",
    "slope_f",
    "slope_a_alternative",
    "b_quadratic_form",
    "chain_rule_sides",
    "quadrature_weights",
    "StepRecord",
    "EdiLedger",
    "edi_report",
    "chain_rule_check",
]


def forward_diff(values: np.ndarray, h: float) -> np.ndarray:
    g = np.zeros_like(values, dtype=float)
    g[:-1] = np.diff(values) / h
    return g


def energy_f(pair: DensityPair, oracle: EnvelopeOracle) -> float:
    h = pair.grid.h
    return float(h * np.sum(oracle.f_value(pair.rho.values, pair.mu.values)))


def energy_g(pair: DensityPair) -> float:
    r, m = pair.rho.values, pair.mu.values
    return float(pair.grid.h * np.sum(xlogy(r, r) + xlogy(m, m)))


@dataclass(frozen=True, eq=False)
class SlopeBreakdown:
    b_region_part: float
    a_region_part: float
    cell_classification: np.ndarray

    @property
    def total(self) -> float:
        return self.b_region_part + self.a_region_part


def slope_f(pair: DensityPair, oracle: EnvelopeOracle, mass_floor: Optional[float] = None,
            literal_reading: bool = False) -> SlopeBreakdown:
    """Discrete slope of F split by region.

    B cells contribute rho |grad rho / rho + grad mu|^2 + mu |grad mu / mu +
    grad rho|^2, each term only where its weight exceeds ``mass_floor``.
    A cells contribute tilde_f''(S)^2 |grad S|^2 S.

    ``literal_reading`` swaps ``grad mu`` for ``mu`` (and ``grad rho`` for
    ``rho``) in the B integrand, for comparison only.
    """
    grid = pair.grid
    h = grid.h
    floor = 1e-9 / h if mass_floor is None else mass_floor
    r, m = pair.rho.values, pair.mu.values
    S = r + m
    gr, gm = forward_diff(r, h), forward_diff(m, h)
    in_a = oracle.in_a(r, m)

    b = ~in_a
    rb = b & (r > floor)
    mb = b & (m > floor)
    cross_r = r if literal_reading else gm
    cross_m = m if literal_reading else gr
    with np.errstate(divide="ignore", invalid="ignore"):
        term_r = np.where(rb, r * (gr / np.where(rb, r, 1.0) + cross_r) ** 2, 0.0)
        term_m = np.where(mb, m * (gm / np.where(mb, m, 1.0) + cross_m) ** 2, 0.0)
    b_part = float(h * np.sum(term_r + term_m))

    a_part = 0.0
    if np.any(in_a):
        gS = forward_diff(S, h)[in_a]
        fpp = oracle.tilde_f_second(S[in_a])
        a_part = float(h * np.sum(fpp ** 2 * gS ** 2 * S[in_a]))
    tags = np.where(in_a, Region.A.value, Region.B.value)
    return SlopeBreakdown(b_part, a_part, tags)


def slope_a_alternative(pair: DensityPair, oracle: EnvelopeOracle) -> float:
    """A-cell slope as |(1 + pi'(S)) grad S|^2 / S, summed over A cells."""
    h = pair.grid.h
    S = pair.s_sum
    in_a = oracle.in_a(pair.rho.values, pair.mu.values)
    if not np.any(in_a):
        return 0.0
    gS = forward_diff(S, h)[in_a]
    d = (1.0 + oracle.pi_prime(S[in_a])) * gS
    return float(h * np.sum(d ** 2 / S[in_a]))


def b_quadratic_form(rho, mu, grho, gmu, r0: float):
    """|g_r|^2 (1/rho - r0/S) + |g_m|^2 (1/mu - r0/S) + 2 g_r g_m (1 - r0/S)."""
    rho, mu, grho, gmu = (np.asarray(v, dtype=float) for v in (rho, mu, grho, gmu))
    S = rho + mu
    return (grho ** 2 * (1.0 / rho - r0 / S) + gmu ** 2 * (1.0 / mu - r0 / S)
            + 2.0 * grho * gmu * (1.0 - r0 / S))


def chain_rule_sides(rho, mu, grho, gmu, oracle: EnvelopeOracle):
    """Pointwise sides of |grad(S + P)|^2 / S <= rho |grad f_a|^2 + mu |grad f_b|^2.

    Gradients are pushed through the chain rule exactly, so on A the two
    sides agree up to rounding.
    """
    args = [np.asarray(v, dtype=float) for v in (rho, mu, grho, gmu)]
    scalar = all(a.ndim == 0 for a in args)
    rho, mu, grho, gmu = (np.atleast_1d(a) for a in np.broadcast_arrays(*args))
    S = rho + mu
    gS = grho + gmu
    in_a = oracle.in_a(rho, mu)
    gP = mu * grho + rho * gmu
    gfa = grho / rho + gmu
    gfb = gmu / mu + grho
    if np.any(in_a):
        Sa = S[in_a]
        gP = gP.copy()
        gfa = gfa.copy()
        gfb = gfb.copy()
        gP[in_a] = oracle.pi_prime(Sa) * gS[in_a]
        d = oracle.tilde_f_second(Sa) * gS[in_a]
        gfa[in_a] = d
        gfb[in_a] = d
    lhs = (gS + gP) ** 2 / S
    rhs = rho * gfa ** 2 + mu * gfb ** 2
    if scalar:
        return float(lhs[0]), float(rhs[0]), bool(in_a[0])
    return lhs, rhs, in_a


def quadrature_weights(nodes) -> np.ndarray:
    """Right-endpoint weights for int_0^1 over sorted nodes: s_j - s_{j-1}."""
    s = np.asarray(sorted(nodes), dtype=float)
    return np.diff(np.concatenate([[0.0], s]))


@dataclass(frozen=True)
class StepRecord:
    k: int
    f_before: float
    f_after: float
    w2sq_rho: float
    w2sq_mu: float
    slope_quad: float
    flow_interchange_lhs: float
    flow_interchange_rhs: float
    # not serialized
    dg_penalty: float = field(default=0.0, compare=False)
    optimality_residual: float = field(default=0.0, compare=False)

    def energy_decrease_gap(self, tau: float) -> float:
        """F_before - F_after - (w2 penalties); nonnegative up to solver slack."""
        return self.f_before - self.f_after - (self.w2sq_rho + self.w2sq_mu) / (2.0 * tau)

    def improved_gap(self, tau: float) -> float:
        """The gap above minus the De Giorgi quadrature term."""
        return self.energy_decrease_gap(tau) - self.dg_penalty

    def flow_interchange_gap(self) -> float:
        return self.flow_interchange_lhs - self.flow_interchange_rhs


_STEP_KEYS = ("k", "f_before", "f_after", "w2sq_rho", "w2sq_mu", "slope_quad",
              "flow_interchange_lhs", "flow_interchange_rhs")


@dataclass(frozen=True)
class EdiLedger:
    f_initial: float
    f_final: float
    kinetic_rho: float
    kinetic_mu: float
    slope_integral: float
    residual: float
    per_step: tuple = ()
    tau: float = field(default=float("nan"), compare=False)

    def to_dict(self) -> dict:
        return {
            "f_initial": self.f_initial,
            "f_final": self.f_final,
            "kinetic_rho": self.kinetic_rho,
            "kinetic_mu": self.kinetic_mu,
            "slope_integral": self.slope_integral,
            "residual": self.residual,
            "per_step": [{k: asdict(r)[k] for k in _STEP_KEYS} for r in self.per_step],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def edi_report(traj: Trajectory, oracle: EnvelopeOracle) -> EdiLedger:
    """Accumulate every term of the discrete energy-dissipation inequality."""
    if traj.n_steps and len(traj.de_giorgi_samples) != traj.n_steps:
        raise ValueError("trajectory lacks De Giorgi samples")
    tau = traj.tau
    nodes = np.asarray(traj.dg_nodes, dtype=float)
    weights = quadrature_weights(nodes)
    r0 = oracle.r0()
    pairs = traj.pairs
    h = traj.initial.grid.h
    energies = [energy_f(p, oracle) for p in pairs]
    entropies = [energy_g(p) for p in pairs]
    records = []
    kin_r = kin_m = slope_int = 0.0
    for k, step in enumerate(traj.steps):
        row = traj.de_giorgi_samples[k]
        if len(row) != nodes.size:
            raise ValueError(f"step {k} lacks De Giorgi samples")
        slopes = np.array([slope_f(d.next, oracle).total for d in row])
        slope_quad = float(np.sum(weights * slopes))
        dg_w2 = np.array([d.w2sq_rho + d.w2sq_mu for d in row])
        dg_pen = float(tau * np.sum(weights * dg_w2 / (2.0 * tau ** 2 * nodes ** 2)))
        S1 = step.next.s_sum
        gS = forward_diff(S1, h)
        fi_rhs = float(r0 * tau * h * np.sum(gS ** 2 / S1))
        records.append(StepRecord(
            k, energies[k], energies[k + 1], step.w2sq_rho, step.w2sq_mu, slope_quad,
            entropies[k] - entropies[k + 1], fi_rhs, dg_pen,
            max(step.optimality_residual_rho, step.optimality_residual_mu)))
        kin_r += step.w2sq_rho / tau
        kin_m += step.w2sq_mu / tau
        slope_int += tau * slope_quad
    f0, fT = energies[0], energies[-1]
    residual = f0 - (fT + 0.5 * kin_r + 0.5 * kin_m + 0.5 * slope_int)
    return EdiLedger(f0, fT, kin_r, kin_m, slope_int, residual, tuple(records), tau)


def chain_rule_check(traj: Trajectory, g_choice: str, oracle: EnvelopeOracle) -> float:
    """Mismatch between the change of int g and its time-integrated derivative.

    ``g_choice`` is ``"tilde_f_of_sum"`` (g = tilde_f(a + b), which needs
    S >= 2 in every cell) or ``"f_full"`` (g = f).
    """
    if g_choice not in ("tilde_f_of_sum", "f_full"):
        raise ValueError(f"unknown g_choice {g_choice!r}")
    grid = traj.initial.grid
    h, tau = grid.h, traj.tau

    def total(pair):
        S = pair.s_sum
        if g_choice == "tilde_f_of_sum":
            if np.any(S < 2.0):
                raise DomainError("tilde_f_of_sum needs S >= 2 everywhere")
            return float(h * np.sum(oracle.tilde_f(S)))
        return energy_f(pair, oracle)

    pairs = traj.pairs
    acc = 0.0
    for k, (v, w) in enumerate(traj.velocities):
        pair = pairs[k + 1]
        r, m = pair.rho.values, pair.mu.values
        S = r + m
        gr, gm = forward_diff(r, h), forward_diff(m, h)
        if g_choice == "tilde_f_of_sum":
            if np.any(S < 2.0):
                raise DomainError("tilde_f_of_sum needs S >= 2 everywhere")
            c = oracle.tilde_f_second(S)
            gaa = gab = gbb = c
        else:
            in_a = oracle.in_a(r, m)
            with np.errstate(divide="ignore"):
                gaa = np.where(in_a, 0.0, 1.0 / np.where(r > 0, r, np.inf))
                gbb = np.where(in_a, 0.0, 1.0 / np.where(m > 0, m, np.inf))
            gab = np.where(in_a, 0.0, 1.0)
            if np.any(in_a):
                c = oracle.tilde_f_second(S[in_a])
                gaa[in_a] = gab[in_a] = gbb[in_a] = c
        integrand = r * v * (gaa * gr + gab * gm) + m * w * (gab * gr + gbb * gm)
        acc += tau * h * float(np.sum(integrand))
    return abs(total(pairs[-1]) - total(pairs[0]) - acc)
