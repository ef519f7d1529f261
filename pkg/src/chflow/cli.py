"""Command-line entry point: ``chflow <subcommand> ...``.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure
(blow-up, non-finite values, or a failed check).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np
import yaml

from . import __version__
from .config import ConfigError, load_config
from .diagnostics import continuous_dependence
from .experiments import checked_solve, cutoff_ladder, resolution_ladder
from .fileio import SnapshotError, load_snapshot, save_snapshot, write_csv
from .flow import BlowUpError, linf_semigroup_probe, nonlinear_cfl, rk4_stable, solve
from .potentials import NonFiniteError, by_name, from_polynomial, validate_growth
from .spectral import inverse, make_grid

log = logging.getLogger("chflow")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

# flag -> config key; flags win over --set, which wins over the file
FLAG_KEYS = {
    "N": "grid.N",
    "dt": "solver.dt",
    "T": "solver.T",
    "scheme": "solver.scheme",
    "n_cutoff": "solver.n_cutoff",
    "dealias": "solver.dealias",
    "out": "output.dir",
}


class CLIError(Exception):
    def __init__(self, message, code=EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(args, summary, lines):
    if args.json:
        for line in lines:
            print(line, file=sys.stderr)
        print(json.dumps(_jsonable(summary), indent=2))
    else:
        for line in lines:
            print(line)


def _overrides(args):
    out = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise CLIError(f"--set expects section.key=value, got {item!r}")
        out[key.strip()] = yaml.safe_load(value)
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = value
    return out


def _load(args):
    try:
        return load_config(args.config, _overrides(args))
    except FileNotFoundError:
        raise CLIError(f"config file not found: {args.config}") from None


def _prepare(cfg):
    """Grid, potential, and a stability screen shared by the solving commands."""
    grid = cfg.make_grid()
    spec = cfg.make_potential()
    solver = cfg.solver
    if solver.scheme == "galerkin_rk4" and not rk4_stable(grid, solver):
        raise CLIError(
            f"dt={solver.dt} violates the RK4 stability limit for N={grid.N}, "
            f"n_cutoff={solver.n_cutoff}; reduce dt or use an ETD scheme"
        )
    return grid, spec


def _check_cfl(grid, cfg, u0, spec):
    if cfg.solver.scheme != "galerkin_rk4":
        cfl = nonlinear_cfl(grid, cfg.solver, u0, spec)
        if cfl > 1:
            log.warning("nonlinear CFL number %.3g exceeds 1; the ETD step may be inaccurate", cfl)


def _output_dir(cfg):
    path = cfg.output_dir()
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise CLIError(f"cannot create output directory {path}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise CLIError(f"output directory {path} is not writable")
    return path


def _write_outputs(cfg, out, records, snapshots):
    paths = []
    if records:
        write_csv(records, cfg.csv_file())
        paths.append(cfg.csv_file())
    for s in snapshots:
        path = os.path.join(out, f"snap_{s.step_count:06d}.chf")
        save_snapshot(s, path)
        paths.append(path)
    return paths


# -- subcommands -------------------------------------------------------------------


def cmd_run(args):
    cfg = _load(args)
    grid, spec = _prepare(cfg)
    if args.init_snapshot:
        state = load_snapshot(args.init_snapshot, grid)
        u0 = inverse(state.u_hat)
    else:
        u0 = cfg.initial_field(grid)
    _check_cfl(grid, cfg, u0, spec)
    out = _output_dir(cfg)
    kwargs = {"snapshot_every": cfg.output.snapshot_every, "hs": cfg.output.hs}
    checks = None
    try:
        if args.check:
            (state, records, snaps), checks, _ = checked_solve(u0, spec, cfg.solver, **kwargs)
        else:
            state, records, snaps = solve(u0, spec, cfg.solver, **kwargs)
    except BlowUpError as exc:
        written = _write_outputs(cfg, out, exc.records, exc.snapshots)
        summary = {"status": "blow-up", "message": str(exc), "written": written}
        _emit(args, summary, [f"blow-up: {exc}", f"partial output: {len(written)} file(s) in {out}"])
        return EXIT_NUMERICAL
    written = _write_outputs(cfg, out, records, snaps)
    with open(os.path.join(out, "config.yaml"), "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
    last = records[-1]
    summary = {
        "status": "ok",
        "steps": state.step_count,
        "t": state.t,
        "final": dict(zip(("t", "mass", "F", "D", "l2", "gradl2", "lapl2", "h2", "linf", "l6"),
                          last.values())),
        "written": written,
    }
    lines = [
        f"{cfg.solver.scheme}: {state.step_count} steps to t={state.t:.6g} on {grid.N}^3",
        f"final mass={last.mass:.12g} F={last.F:.12g} h2={last.h2:.6g}",
        f"wrote {len(written)} file(s) to {out}",
    ]
    code = EXIT_OK
    if checks is not None:
        summary["checks"] = checks.as_dict()
        lines.append(
            f"checks: mass drift {checks.mass_drift:.3g} ({'ok' if checks.mass_ok else 'FAIL'}), "
            f"energy {'monotone' if checks.energy_monotone else 'NOT monotone'}, "
            f"H2 max {checks.h2_max:.4g} <= {checks.h2_bound:.4g} "
            f"({'ok' if checks.h2_ok else 'FAIL'})"
        )
        code = EXIT_OK if checks.ok else EXIT_NUMERICAL
    with open(os.path.join(out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(_jsonable(summary), fh, indent=2)
    _emit(args, summary, lines)
    return code


def _number_list(text, conv=float):
    try:
        return [conv(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CLIError(f"expected a comma-separated list of numbers, got {text!r}") from None


def cmd_converge(args):
    if (args.n_list is None) == (args.N_list is None):
        raise CLIError("give exactly one of --n-list or --N-list")
    cfg = _load(args)
    grid, spec = _prepare(cfg)
    if args.n_list is not None:
        u0 = cfg.initial_field(grid)
        _check_cfl(grid, cfg, u0, spec)
        report = cutoff_ladder(u0, spec, cfg.solver, _number_list(args.n_list), args.ref,
                               workers=args.workers)
    else:
        sizes = sorted(_number_list(args.N_list, int))
        if any(n < 4 or n % 2 for n in sizes):
            raise CLIError(f"--N-list entries must be even and >= 4, got {sizes}")
        fine = make_grid(sizes[-1], cfg.grid.L)
        report = resolution_ladder(cfg.initial_field(fine), spec, cfg.solver, sizes,
                                   workers=args.workers)
    summary = report.as_dict()
    lines = [f"{report.parameter} ladder against reference {report.reference:g}:"]
    lines += [f"  {report.parameter}={v:g}  L2 error {e:.6e}" for v, e in zip(report.values, report.errors)]
    lines.append("errors strictly decrease" if report.strictly_decreasing else
                 "errors do NOT strictly decrease")
    _emit(args, summary, lines)
    return EXIT_OK if report.strictly_decreasing else EXIT_NUMERICAL


def cmd_depend(args):
    cfg = _load(args)
    grid, spec = _prepare(cfg)
    u0 = cfg.initial_field(grid)
    _check_cfl(grid, cfg, u0, spec)
    if args.delta < 0:
        raise CLIError(f"--delta must be non-negative, got {args.delta}")
    report = continuous_dependence(u0, args.delta, spec, cfg.solver, seed=args.seed,
                                   tolerance=args.tolerance, workers=args.workers)
    lines = [
        f"delta={args.delta:g}: diff(0)={report.diff_l2[0]:.6e}, diff(T)={report.diff_l2[-1]:.6e}",
        f"fitted growth rate C={report.fitted_C:.6g}; bound "
        + ("holds" if report.bound_ok else "FAILS"),
    ]
    _emit(args, report.as_dict(), lines)
    return EXIT_OK if report.bound_ok else EXIT_NUMERICAL


def cmd_semigroup(args):
    cfg = _load(args)
    u0 = cfg.initial_field(cfg.make_grid())
    if not args.t_max > 0 or args.samples < 2:
        raise CLIError("--t-max must be positive and --samples at least 2")
    result = linf_semigroup_probe(u0, args.t_max, args.samples)
    if result.first_violation is None:
        lines = [f"no max-norm growth on [0, {args.t_max:g}] ({args.samples} samples); "
                 f"empirical T1 >= {result.t_max:g}"]
    else:
        lines = [f"max norm first exceeds its initial value at t={result.first_violation:.6g}"]
    _emit(args, result.as_dict(), lines)
    return EXIT_OK


def _parse_range(text):
    lo, sep, hi = text.partition(":")
    try:
        return float(lo), float(hi)
    except ValueError:
        raise CLIError(f"--range expects lo:hi, got {text!r}") from None


def cmd_validate_potential(args):
    if "," in args.potential:
        spec = from_polynomial(_number_list(args.potential))
    else:
        try:
            spec = by_name(args.potential)
        except ValueError as exc:
            raise CLIError(str(exc)) from None
    report = validate_growth(spec, _parse_range(args.range), args.samples)
    d = summary = {"name": spec.name, **report.as_dict()}
    lines = [f"{spec.name}: p={spec.p:g} ({'admissible' if d['p_admissible'] else 'NOT admissible'})"]
    lines += [f"  |{k}| <= {v:.10g} (|s|^e + 1)" for k, v in report.fitted_C.items()]
    lines.append("  Phi >= 0 on the range" if report.positivity_ok else "  Phi is negative somewhere")
    _emit(args, summary, lines)
    return EXIT_OK if report.positivity_ok and d["p_admissible"] else EXIT_NUMERICAL


# -- parser ------------------------------------------------------------------------------


def _solver_flags(p):
    p.add_argument("config", help="YAML run configuration")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config entry (repeatable)")
    p.add_argument("--N", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--scheme")
    p.add_argument("--n-cutoff", dest="n_cutoff", type=float)
    p.add_argument("--dealias")
    p.add_argument("--out", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="chflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--json", action="store_true",
                        help="print the machine-readable summary on stdout")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate one configuration")
    _solver_flags(p)
    p.add_argument("--init-snapshot", metavar="PATH", help="start from a CHFIELD1 snapshot")
    p.add_argument("--check", action="store_true",
                   help="verify mass conservation, energy decay, and the H2 envelope")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("converge", help="cutoff or resolution convergence ladder")
    _solver_flags(p)
    p.add_argument("--n-list", help="comma-separated cutoff radii, e.g. 4,8,16")
    p.add_argument("--N-list", dest="N_list", help="comma-separated grid sizes, e.g. 16,32,64")
    p.add_argument("--ref", type=float, help="reference cutoff (default: largest in --n-list)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("depend", help="continuous dependence on initial data")
    _solver_flags(p)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--seed", type=int, help="perturbation seed (default: solver.seed)")
    p.add_argument("--tolerance", type=float, default=0.1)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_depend)

    p = sub.add_parser("semigroup", help="max-norm probe of the linear bi-harmonic flow")
    _solver_flags(p)
    p.add_argument("--t-max", dest="t_max", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=101)
    p.set_defaults(func=cmd_semigroup)

    p = sub.add_parser("validate-potential", help="fit growth constants of a potential")
    p.add_argument("potential", help="a known name or comma-separated coefficients a0,...,a4")
    p.add_argument("--range", default="-4:4", help="sample interval lo:hi")
    p.add_argument("--samples", type=int, default=1001)
    p.set_defaults(func=cmd_validate_potential)
    return parser


def _join_negative(argv):
    # "--range -4:4" would otherwise be read as an unknown option
    out, it = [], iter(argv)
    for a in it:
        if a == "--range":
            out.append(f"--range={next(it, '')}")
        else:
            out.append(a)
    return out


def main(argv=None):
    args = build_parser().parse_args(_join_negative(sys.argv[1:] if argv is None else argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CLIError, SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return getattr(exc, "code", EXIT_INVALID)
    except (BlowUpError, NonFiniteError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

