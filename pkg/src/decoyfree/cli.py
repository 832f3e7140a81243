"""Command-line front end: INI-style scenario configs, sweep execution, CSV
emission with a reproducibility sidecar, and figure/plot-script output.

Config format (flat key = value sections; all keys optional unless noted):

    [run]      protocol (required, comma list ok), mode (asymptotic|finite),
               axis (none|loss_db|visibility|misalignment|cutoff_K|N),
               axis_values (comma list, required when axis != none)
    [channel]  loss_db, visibility, misalignment
    [source]   mu (float or "optimize"), K, p_z, theta_alice (float or "auto")
    [finite]   N (required in finite mode), p_gen, eps_ev, eps_pa, eps_at, f_ec
    [solver]   max_iterations, fw_gap_tolerance, log_eps, subproblem_tol,
               feasibility_tol, search_max_iterations

Exit codes: 0 ok, 2 config error, 3 solver failures above threshold.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
import time
from pathlib import Path

from . import __version__
from .finitesize import SecurityParams
from .solver import SolverConfig
from .sweep import SweepPlan, run_sweep

__all__ = ["parse_config", "run", "main"]

_ENV_THREADS = "DECOYFREE_THREADS"

CSV_COLUMNS = (
    "protocol",
    "axis",
    "axis_value",
    "mu",
    "theta",
    "rate_per_signal",
    "key_length",
    "lower_bound",
    "status",
    "solver_iterations",
)

_KNOWN = {
    "run": {"protocol", "mode", "axis", "axis_values"},
    "channel": {"loss_db", "visibility", "misalignment"},
    "source": {"mu", "k", "p_z", "theta_alice"},
    "finite": {"n", "p_gen", "eps_ev", "eps_pa", "eps_at", "f_ec"},
    "solver": {
        "max_iterations",
        "fw_gap_tolerance",
        "log_eps",
        "subproblem_tol",
        "feasibility_tol",
        "search_max_iterations",
    },
}


class ConfigError(ValueError):
    pass


def _get_float(cfg, section, key, default, lo=None, hi=None):
    raw = cfg.get(section, key, fallback=None)
    if raw is None:
        return default
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a number") from None
    if (lo is not None and val < lo) or (hi is not None and val > hi):
        raise ConfigError(f"[{section}] {key} = {val} outside valid range [{lo}, {hi}]")
    return val


def parse_config(text: str) -> SweepPlan:
    """Validated sweep plan from config text; unknown keys are errors and
    every default is recorded later in the output metadata."""
    cfg = configparser.ConfigParser()
    try:
        cfg.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    for section in cfg.sections():
        if section not in _KNOWN:
            raise ConfigError(f"unknown config section [{section}]")
        for key in cfg[section]:
            if key not in _KNOWN[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    raw_proto = cfg.get("run", "protocol", fallback=None)
    if raw_proto is None:
        raise ConfigError("missing required key: [run] protocol")
    protocols = tuple(p.strip().upper() for p in raw_proto.split(",") if p.strip())
    for p in protocols:
        if p not in ("BB84", "NPAB", "SARG04"):
            raise ConfigError(f"unknown protocol {p!r} (choose from BB84, NPAB, SARG04)")

    mode = cfg.get("run", "mode", fallback="asymptotic").strip().lower()
    if mode not in ("asymptotic", "finite"):
        raise ConfigError(f"mode must be asymptotic or finite, got {mode!r}")

    axis = cfg.get("run", "axis", fallback="none").strip()
    raw_values = cfg.get("run", "axis_values", fallback=None)
    if axis != "none":
        if raw_values is None:
            raise ConfigError(f"axis = {axis} requires [run] axis_values")
        try:
            values = tuple(sorted(float(v) for v in raw_values.split(",") if v.strip()))
        except ValueError:
            raise ConfigError(f"axis_values {raw_values!r} is not a comma list of numbers") from None
    else:
        values = (0.0,)

    raw_mu = cfg.get("source", "mu", fallback="optimize").strip().lower()
    if raw_mu == "optimize":
        mu = None
    else:
        try:
            mu = float(raw_mu)
        except ValueError:
            raise ConfigError(f"[source] mu must be a number or 'optimize', got {raw_mu!r}") from None
        if mu < 0:
            raise ConfigError(f"[source] mu = {mu} outside valid range [0, inf)")

    raw_k = cfg.get("source", "k", fallback=None)
    cutoff = None
    if raw_k is not None:
        try:
            cutoff = int(raw_k)
        except ValueError:
            raise ConfigError(f"[source] K = {raw_k!r} is not an integer") from None
        if cutoff < 0:
            raise ConfigError(f"[source] K = {cutoff} outside valid range [0, inf)")

    raw_theta = cfg.get("source", "theta_alice", fallback="auto").strip().lower()
    theta_alice = None if raw_theta == "auto" else float(raw_theta)

    if mode == "finite":
        if not cfg.has_option("finite", "n"):
            raise ConfigError("mode = finite requires keys: [finite] N (plus optional p_gen, eps_*)")
        n_total = _get_float(cfg, "finite", "n", None, lo=1.0)
    else:
        n_total = 1e12

    security = SecurityParams(
        eps_ev=_get_float(cfg, "finite", "eps_ev", 1e-12 / 3, lo=0.0, hi=1.0),
        eps_pa=_get_float(cfg, "finite", "eps_pa", 1e-12 / 3, lo=0.0, hi=1.0),
        eps_at=_get_float(cfg, "finite", "eps_at", 1e-12 / 3, lo=0.0, hi=1.0),
    )
    f_ec = cfg.get("finite", "f_ec", fallback=None)
    f_ec = float(f_ec) if f_ec is not None else (1.2 if mode == "finite" else 1.0)

    solver = SolverConfig(
        max_iterations=int(_get_float(cfg, "solver", "max_iterations", 120, lo=1)),
        fw_gap_tolerance=_get_float(cfg, "solver", "fw_gap_tolerance", 1e-6, lo=0.0),
        eps=_get_float(cfg, "solver", "log_eps", 1e-12, lo=0.0, hi=1e-3),
        subproblem_tol=_get_float(cfg, "solver", "subproblem_tol", 1e-8, lo=0.0),
        feasibility_tol=_get_float(cfg, "solver", "feasibility_tol", 1e-7, lo=0.0),
    )
    search_solver = SolverConfig(
        max_iterations=int(_get_float(cfg, "solver", "search_max_iterations", 16, lo=1)),
        fw_gap_tolerance=1e-5,
        eps=solver.eps,
        subproblem_tol=solver.subproblem_tol,
        feasibility_tol=solver.feasibility_tol,
    )

    return SweepPlan(
        protocols=protocols,
        axis=axis,
        values=values,
        loss_db=_get_float(cfg, "channel", "loss_db", 0.0, lo=0.0),
        visibility=_get_float(cfg, "channel", "visibility", 1.0, lo=0.0, hi=1.0),
        misalignment=_get_float(cfg, "channel", "misalignment", 0.0),
        p_z=_get_float(cfg, "source", "p_z", 0.5, lo=0.0, hi=1.0),
        mu=mu,
        cutoff=cutoff,
        theta_alice=theta_alice,
        mode=mode,
        n_total=n_total,
        p_gen=_get_float(cfg, "finite", "p_gen", 0.85, lo=0.0, hi=1.0),
        security=security,
        f_ec=f_ec,
        solver=solver,
        search_solver=search_solver,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.17g}"
    return str(value)


def cells_to_csv(cells) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for c in cells:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    c.protocol,
                    c.axis,
                    c.value,
                    c.mu,
                    c.theta,
                    c.rate,
                    c.key_length,
                    c.lower_bound,
                    c.status,
                    c.iterations,
                )
            )
        )
    return "\n".join(lines) + "\n"


def _metadata_text(plan: SweepPlan, threads: int, elapsed_s: float) -> str:
    lines = [f"decoyfree_version = {__version__}"]
    items = {
        "protocols": ",".join(plan.protocols),
        "mode": plan.mode,
        "axis": plan.axis,
        "axis_values": ",".join(_fmt(v) for v in plan.values),
        "loss_db": plan.loss_db,
        "visibility": plan.visibility,
        "misalignment": plan.misalignment,
        "p_z": plan.p_z,
        "mu": "optimize" if plan.mu is None else plan.mu,
        "K": "protocol default" if plan.cutoff is None else plan.cutoff,
        "theta_alice": "auto" if plan.theta_alice is None else plan.theta_alice,
        "N": plan.n_total,
        "p_gen": plan.p_gen,
        "eps_ev": plan.security.eps_ev,
        "eps_pa": plan.security.eps_pa,
        "eps_at": plan.security.eps_at,
        "f_ec": plan.f_ec,
        "solver.max_iterations": plan.solver.max_iterations,
        "solver.fw_gap_tolerance": plan.solver.fw_gap_tolerance,
        "solver.log_eps": plan.solver.eps,
        "solver.subproblem_tol": plan.solver.subproblem_tol,
        "solver.feasibility_tol": plan.solver.feasibility_tol,
        "solver.search_max_iterations": plan.search_solver.max_iterations,
        "threads": threads,
    }
    lines += [f"{k} = {_fmt(v) if not isinstance(v, str) else v}" for k, v in sorted(items.items())]
    lines.append(f"runtime_ms = {int(elapsed_s * 1000)}  # informational, not part of the CSV")
    return "\n".join(lines) + "\n"


def run(plan: SweepPlan, out_path: str | Path, threads: int = 1,
        emit_plot_script: bool = False, plot: bool = False, verbose: bool = False) -> int:
    """Execute the plan, write CSV + metadata sidecar (+ figures/script)."""
    t0 = time.time()
    cells = run_sweep(plan, threads=threads)
    out_path = Path(out_path)
    out_path.write_text(cells_to_csv(cells))
    meta_path = out_path.with_suffix(out_path.suffix + ".meta.txt")
    meta_path.write_text(_metadata_text(plan, threads, time.time() - t0))
    if verbose:
        for c in cells:
            print(f"{c.protocol} {c.axis}={c.value}: rate={c.rate:.6g} ({c.status})", file=sys.stderr)
    if emit_plot_script:
        from .plots import plot_script_text

        script_path = out_path.with_name(out_path.stem + "_plot.py")
        script_path.write_text(plot_script_text(str(out_path), plan.axis))
    if plot:
        from .plots import render_figures

        render_figures(cells, out_path.with_suffix(""), optimized_mu=plan.mu is None)
    failures = sum(1 for c in cells if c.status.startswith("error") or c.status == "infeasible")
    return 3 if failures > 0 else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="decoyfree",
        description="Key rates for decoy-free WCP QKD protocols (BB84, NPAB BB84, SARG04).",
    )
    parser.add_argument("--config", required=True, help="path to the INI run configuration")
    parser.add_argument("--out", required=True, help="output CSV path")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"parallel sweep cells (default ${_ENV_THREADS} or 1)")
    parser.add_argument("--emit-plot-script", action="store_true",
                        help="write a standalone matplotlib script next to the CSV")
    parser.add_argument("--plot", action="store_true", help="render figures next to the CSV")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    threads = args.threads
    if threads is None:
        threads = int(os.environ.get(_ENV_THREADS, "1"))
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        plan = parse_config(text)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(plan, args.out, threads=threads, emit_plot_script=args.emit_plot_script,
                   plot=args.plot, verbose=args.verbose)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
