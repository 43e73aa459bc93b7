"""Command line entry point: ``run``, ``certify`` and ``envelope-table``.

Exit codes: 0 ok, 1 property failure, 2 usage or config error, 3 solver failure.
Errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, presets
from .certify import SUITES, report_json, run_suite
from .envelope import EnvelopeOracle
from .errors import ConvergenceError
from .jko import DEFAULT_DG_NODES, JkoConfig, TrajectoryError, run_trajectory
from .slope import edi_report, energy_f, energy_g, slope_f
from .transport import Grid1D

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger("crossdiff")

EXIT_OK, EXIT_PROPERTY, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3
ENV_PREFIX = "CROSSDIFF_"


class ConfigError(Exception):
    def __init__(self, code: str, message: str, **info):
        super().__init__(message)
        self.code = code
        self.info = info


@dataclasses.dataclass(frozen=True)
class RunConfig:
    domain_length: float = 1.0
    n_cells: int = 128
    tau: float = 1e-3
    n_steps: int = 100
    eps_reg: float = 1e-4
    preset: str = "two_bumps"
    dg_nodes: tuple = DEFAULT_DG_NODES
    output_dir: str = "crossdiff_out"
    seed: int = 0

    def __post_init__(self):
        for name in ("domain_length", "tau", "eps_reg"):
            if not getattr(self, name) > 0:
                raise ConfigError("invalid_config", f"{name} must be positive", key=name)
        if self.n_cells < 1:
            raise ConfigError("invalid_config", "n_cells must be positive", key="n_cells")
        if self.n_steps < 1:
            raise ConfigError("invalid_config", "n_steps must be positive", key="n_steps")
        if self.preset not in presets.PRESETS:
            raise ConfigError("invalid_config", f"preset must be one of {list(presets.PRESETS)}",
                              key="preset")
        if not self.dg_nodes or any(not 0 < s <= 1 for s in self.dg_nodes):
            raise ConfigError("invalid_config", "dg_nodes must be nonempty and lie in (0, 1]",
                              key="dg_nodes")


def _coerce(key: str, value, default):
    try:
        if isinstance(default, tuple):
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            return tuple(float(v) for v in value)
        if isinstance(default, bool):
            raise TypeError
        if isinstance(default, int):
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError("invalid_config", f"bad value for {key!r}: {value!r}", key=key) from None


def load_config(path, environ=None) -> RunConfig:
    """Read a TOML file (flat keys or a ``[run]`` table), then apply env overrides."""
    environ = os.environ if environ is None else environ
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config_not_found", f"no config file at {str(p)!r}", path=str(p))
    try:
        raw = tomllib.loads(p.read_text(encoding="utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError("config_parse_error", str(exc), path=str(p)) from None
    if isinstance(raw.get("run"), dict):
        raw = raw["run"]
    fields = {f.name: f.default for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError("invalid_config", f"unknown keys {unknown}", keys=unknown)
    values = {k: _coerce(k, v, fields[k]) for k, v in raw.items()}
    for k in fields:
        env = environ.get(ENV_PREFIX + k.upper())
        if env is not None:
            values[k] = _coerce(k, env, fields[k])
    return RunConfig(**values)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: Path, header, rows):
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8")


def snapshot_steps(n_steps: int) -> list:
    every = max(1, n_steps // 50)
    return sorted(set(range(0, n_steps + 1, every)) | {0, n_steps})


def _emit_error(code: str, message: str, **info):
    sys.stderr.write(json.dumps({"error": {"code": code, "message": message, **info}},
                                sort_keys=True) + "\n")


def run(cfg: RunConfig, oracle: EnvelopeOracle | None = None) -> int:
    oracle = oracle or EnvelopeOracle()
    grid = Grid1D(cfg.n_cells, cfg.domain_length)
    init = presets.build(cfg.preset, grid)
    jcfg = JkoConfig(tau=cfg.tau, eps_reg=cfg.eps_reg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    def progress(k, res):
        log.info("step %d/%d: %d scaling iterations", k + 1, cfg.n_steps, res.iterations)

    try:
        traj = run_trajectory(init, jcfg, oracle, cfg.n_steps, cfg.dg_nodes, progress)
    except TrajectoryError as exc:
        info = {"completed_steps": exc.partial.n_steps, "residual": _fmt(exc.residual)}
        _write_json(out / "error.json", {"code": "solver_failure", "message": str(exc), **info})
        _emit_error("solver_failure", str(exc), **info)
        return EXIT_SOLVER

    pairs = traj.pairs
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    x = grid.centers
    for k in snapshot_steps(cfg.n_steps):
        p = pairs[k]
        _write_csv(snaps / f"frame_{k:05d}.csv", ["x", "rho", "mu", "S"],
                   zip(x, p.rho.values, p.mu.values, p.s_sum))

    rows = []
    for k, p in enumerate(pairs):
        w_r = traj.steps[k - 1].w2sq_rho if k else 0.0
        w_m = traj.steps[k - 1].w2sq_mu if k else 0.0
        rows.append((k, k * cfg.tau, energy_f(p, oracle), energy_g(p),
                     slope_f(p, oracle).total, w_r, w_m))
    _write_csv(out / "timeseries.csv", ["k", "t", "F", "G", "slope", "w2sq_rho", "w2sq_mu"], rows)

    ledger = edi_report(traj, oracle)
    (out / "edi_ledger.json").write_text(ledger.to_json(), encoding="utf-8")

    meta = {
        "version": __version__,
        "config": {**dataclasses.asdict(cfg), "dg_nodes": list(cfg.dg_nodes)},
        "solver": {
            "prox_newton_tol": jcfg.prox_newton_tol,
            "scaling_tol": jcfg.scaling_tol,
            "max_scaling_iter": jcfg.max_scaling_iter,
            "mass_floor": jcfg.floor(grid),
            "envelope_newton_tol": oracle.newton_tol,
        },
        "quadrature": "right-endpoint weights s_j - s_(j-1) over dg_nodes",
        "iterations": [s.iterations for s in traj.steps],
        "marginal_errors": [s.marginal_error for s in traj.steps],
        "optimality_residuals": [[s.optimality_residual_rho, s.optimality_residual_mu]
                                 for s in traj.steps],
        "r0": oracle.r0_report,
        "snapshot_steps": snapshot_steps(cfg.n_steps),
    }
    _write_json(out / "metadata.json", meta)
    return EXIT_OK


def certify(suite: str, seed: int, out: str | None) -> int:
    report = run_suite(suite, seed)
    text = report_json(report)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if not report["passed"]:
        _emit_error("property_failure", f"first failing property: {report['first_failure']}",
                    property=report["first_failure"])
        return EXIT_PROPERTY
    return EXIT_OK


def envelope_table(s_min: float, s_max: float, points: int) -> int:
    if not 2.0 <= s_min <= s_max or points < 1:
        _emit_error("usage", "need 2 <= s_min <= s_max and points >= 1")
        return EXIT_USAGE
    o = EnvelopeOracle()
    s = np.linspace(s_min, s_max, points)
    st = o.state(s)
    a, b = o.alpha_beta(s)
    cols = [s, st.x, a, b, st.pi, st.pi_prime, o.tilde_f(s), st.tilde_f_prime, st.tilde_f_second]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["s", "x", "alpha", "beta", "pi", "pi_prime", "tilde_f", "tilde_f_prime",
                "tilde_f_second"])
    for row in zip(*cols):
        w.writerow([_fmt(v) for v in row])
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message)
        self.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="crossdiff", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"crossdiff {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a trajectory from a TOML config")
    r.add_argument("--config", required=True)

    c = sub.add_parser("certify", help="run property batteries")
    c.add_argument("--suite", required=True, choices=SUITES + ("all",))
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default=None, help="report path (default: stdout)")

    e = sub.add_parser("envelope-table", help="tabulate the envelope on s in [s_min, s_max]")
    e.add_argument("--s-min", type=float, default=2.0)
    e.add_argument("--s-max", type=float, default=10.0)
    e.add_argument("--points", type=int, default=81)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "run":
            return run(load_config(args.config))
        if args.command == "certify":
            return certify(args.suite, args.seed, args.out)
        return envelope_table(args.s_min, args.s_max, args.points)
    except ConfigError as exc:
        _emit_error(exc.code, str(exc), **exc.info)
        return EXIT_USAGE
    except ConvergenceError as exc:
        _emit_error("solver_failure", str(exc))
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
