"""Command-line interface.

Subcommands: ``evaluate``, ``construct``, ``minimize``, ``pyramid``, ``sweep``
and ``diagnose``.  Every subcommand accepts ``--config FILE`` with
``key = value`` lines (keys are flag names, dashes or underscores); flags given
on the command line override the file.  The effective configuration is echoed
into every JSON output.

Exit status: 0 on success, 2 when an argument violates a precondition, 1 on a
numerical failure (outputs written so far are kept).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__
from ._validation import DivergedEnergy, check_indentation, check_positive_int, check_thickness
from .constructions import construct_flatten, construct_invert, predicted_bound
from .minimize import DEFAULT_SEED, minimize
from .radial import Params, RadialField, check_admissible, energy
from .ridge import pyramid_energy
from .scaling import (
    SWEEP_MAX_ITER,
    SweepRecord,
    _diagnostics,
    classify_regime,
    excess_function,
    excess_ratio,
    oscillation_check,
    sweep,
    sweep_grid,
    well_exit_radius,
    write_summary,
)

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    """A flag value violates a precondition."""


def _float_list(text):
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _round17(obj):
    """Floats re-rounded to 17 significant digits (round-trip exact)."""
    if isinstance(obj, float):
        return float(format(obj, ".17g")) if math.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {k: _round17(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round17(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round17(obj.item())
    return obj


def _emit(payload, path=None):
    text = json.dumps(_round17(payload), indent=2, allow_nan=True)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    cfg = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            cfg[key.replace("-", "_")] = value
    return cfg


# ---------------------------------------------------------------------------
# parser


def _add_common(p):
    p.add_argument("--config", help="key = value file; command-line flags take precedence")


def _add_params(p, delta=True):
    p.add_argument("--h", type=float, required=False, help="thickness, 0 < h <= 1/2")
    if delta:
        p.add_argument("--delta", type=float, default=0.0,
                       help="indentation, 0 <= delta <= 1 (default: %(default)s)")


def build_parser():
    parser = argparse.ArgumentParser(prog="vkcone", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="energy of a field CSV")
    _add_common(p)
    p.add_argument("--field", help="CSV with columns r, u, w, wp")
    p.add_argument("--h", type=float, help="thickness, 0 < h <= 1/2")
    p.add_argument("--delta", type=float, default=None,
                   help="indentation for the admissibility report (default: 1 - w(1))")

    p = sub.add_parser("construct", help="sample an explicit construction")
    _add_common(p)
    _add_params(p)
    p.add_argument("--kind", choices=("invert", "flatten"), default="flatten",
                   help="construction (default: %(default)s)")
    p.add_argument("--cells", type=int, default=8192, help="grid cells (default: %(default)s)")
    p.add_argument("--policy", choices=("focus", "graded"), default="focus",
                   help="grid policy (default: %(default)s)")
    p.add_argument("--out-field", help="field CSV path")
    p.add_argument("--out", help="JSON path (default: standard output)")

    p = sub.add_parser("minimize", help="minimize the radial energy")
    _add_common(p)
    _add_params(p)
    p.add_argument("--cells", type=int, default=8192, help="grid cells (default: %(default)s)")
    p.add_argument("--policy", choices=("focus", "graded"), default="focus",
                   help="grid policy (default: %(default)s)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed (default: %(default)s)")
    p.add_argument("--max-iter", type=int, default=2000,
                   help="iterations per start and grid level (default: %(default)s)")
    p.add_argument("--tol", type=float, default=None,
                   help="projected-gradient tolerance (default: 1e-9 max(1, E))")
    p.add_argument("--out-field", default="field.csv", help="field CSV (default: %(default)s)")
    p.add_argument("--out", help="JSON path (default: standard output)")

    p = sub.add_parser("pyramid", help="energy of the smoothed inverted pyramid")
    _add_common(p)
    p.add_argument("--h", type=float, help="thickness, 0 < h < 1/16")
    p.add_argument("--quad-points", type=int, default=8,
                   help="Gauss points per panel (default: %(default)s)")
    p.add_argument("--refine", type=int, default=1,
                   help="panel multiplier of the coarser quadrature level (default: %(default)s)")
    p.add_argument("--grid-size", type=int, default=512,
                   help="samples per axis of the W field CSV (default: %(default)s)")
    p.add_argument("--out-field", default="pyramid_W.csv",
                   help="W field CSV on [-1, 1]^2 (default: %(default)s)")
    p.add_argument("--out", help="JSON path (default: standard output)")

    p = sub.add_parser("sweep", help="(h, delta) sweep with resumable JSON-lines output")
    _add_common(p)
    p.add_argument("--h-list", type=_float_list, help="comma-separated thicknesses")
    p.add_argument("--delta-list", type=_float_list, help="comma-separated indentations")
    p.add_argument("--cells", type=int, default=8192, help="grid cells (default: %(default)s)")
    p.add_argument("--policy", choices=("focus", "graded"), default="focus",
                   help="grid policy (default: %(default)s)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed (default: %(default)s)")
    p.add_argument("--max-iter", type=int, default=SWEEP_MAX_ITER,
                   help="iterations per start and grid level (default: %(default)s)")
    p.add_argument("--out", default="sweep.jsonl", help="JSON-lines file (default: %(default)s)")
    p.add_argument("--summary", default="sweep_summary.csv",
                   help="summary CSV (default: %(default)s)")
    p.add_argument("--resume", action="store_true", help="skip keys already in --out")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker processes (default: available CPUs, %(default)s)")

    p = sub.add_parser("diagnose", help="exit radius, regime and excess diagnostics of a field")
    _add_common(p)
    p.add_argument("--field", help="CSV with columns r, u, w, wp")
    _add_params(p)
    p.add_argument("--a", type=float, default=None,
                   help="left end of I_a = [a, 2a] (default: delta/4, or 1/4 if delta < 4h)")
    p.add_argument("--out", help="JSON path (default: standard output)")
    return parser


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _apply_config(parser, sub, args, argv):
    """Re-parse with config values as defaults so that flags override them."""
    if not getattr(args, "config", None):
        return args
    cfg = read_config(args.config)
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in cfg.items():
        if key in ("config", "command"):
            continue
        if key not in actions:
            raise UsageError(f"unknown configuration key {key!r} for {args.command}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            if raw.lower() not in _BOOL:
                raise UsageError(f"{key}: expected a boolean, got {raw!r}")
            defaults[key] = _BOOL[raw.lower()]
        elif act.type is not None:
            try:
                defaults[key] = act.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{key}: {exc}") from exc
        else:
            defaults[key] = raw
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required")


def _params(args):
    try:
        return Params(check_thickness(args.h), check_indentation(args.delta))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _config_echo(args):
    return {k: v for k, v in vars(args).items() if not callable(v)}


# ---------------------------------------------------------------------------
# commands


def _read_field(path):
    try:
        return RadialField.read_csv(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read field {path!r}: {exc}") from exc


def cmd_evaluate(args):
    _require(args, "field", "h")
    field = _read_field(args.field)
    delta = args.delta if args.delta is not None else min(max(1.0 - field.w[-1], 0.0), 1.0)
    args.delta = delta
    params = _params(args)
    br = energy(field, params)
    out = br.to_dict()
    out["diverged"] = br.diverged
    out["admissibility"] = list(check_admissible(field, delta).flags)
    out["config"] = _config_echo(args)
    _emit(out)
    if br.diverged:
        raise DivergedEnergy("energy diverged")


def cmd_construct(args):
    _require(args, "h")
    params = _params(args)
    cells = _positive(args.cells, "cells", 16)
    grid = _grid(params, cells, args.policy)
    if args.kind == "invert" and params.delta < params.h:
        raise UsageError(f"the inversion construction needs h <= delta "
                         f"(h={params.h}, delta={params.delta})")
    field = (construct_invert if args.kind == "invert" else construct_flatten)(params, grid)
    if args.out_field:
        field.to_csv(args.out_field)
    out = {"kind": args.kind, "breakdown": energy(field, params).to_dict(),
           "bound": predicted_bound(params),
           "admissibility": list(check_admissible(field, params.delta).flags),
           "config": _config_echo(args)}
    _emit(out, args.out)


def _positive(value, name, minimum=1):
    try:
        return check_positive_int(value, name, minimum)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _grid(params, cells, policy):
    try:
        return sweep_grid(params, cells, policy)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_minimize(args):
    _require(args, "h")
    params = _params(args)
    cells = _positive(args.cells, "cells", 16)
    max_iter = _positive(args.max_iter, "max-iter", 0)
    if args.tol is not None and not args.tol > 0:
        raise UsageError(f"tol must be positive, got {args.tol}")
    grid = _grid(params, cells, args.policy)
    res = minimize(params, grid, tol=args.tol, max_iter=max_iter, seed=args.seed)
    if args.out_field:
        res.field.to_csv(args.out_field)
    out = res.to_dict()
    out["config"] = _config_echo(args)
    _emit(out, args.out)
    if not res.converged:
        raise ArithmeticError("minimizer did not converge; best iterate written")


def cmd_pyramid(args):
    _require(args, "h")
    try:
        h = check_thickness(args.h)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not h < 1.0 / 16.0:
        raise UsageError(f"the pyramid construction needs h < 1/16, got {h}")
    qp = _positive(args.quad_points, "quad-points", 2)
    refine = _positive(args.refine, "refine", 1)
    n = _positive(args.grid_size, "grid-size", 2)
    res = pyramid_energy(h, quad_points=qp, refine=refine)
    out = res.to_dict()
    out["config"] = _config_echo(args)
    _emit(out, args.out)
    if args.out_field:
        axis = np.linspace(-1.0, 1.0, n)
        X = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
        W = res.field.W(X)
        with open(args.out_field, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x1", "x2", "W"])
            for (a, b), w in zip(X, W):
                writer.writerow([format(a, ".17g"), format(b, ".17g"), format(w, ".17g")])
    if not all(p["converged"] for p in res.patches):
        raise ArithmeticError("patch quadrature did not converge")


def cmd_sweep(args):
    _require(args, "h_list", "delta_list")
    try:
        for h in args.h_list:
            check_thickness(h)
        for d in args.delta_list:
            check_indentation(d)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not args.h_list or not args.delta_list:
        raise UsageError("--h-list and --delta-list must be nonempty")
    cells = _positive(args.cells, "cells", 16)
    jobs = _positive(args.jobs, "jobs", 1)
    max_iter = _positive(args.max_iter, "max-iter", 0)
    recs = sweep(args.h_list, args.delta_list, n_cells=cells, policy=args.policy,
                 seed=args.seed, max_iter=max_iter, path=args.out, resume=args.resume,
                 jobs=jobs)
    if args.summary:
        write_summary(recs, args.summary)
    failed = [r for r in recs if r.error is not None]
    _emit({"records": len(recs), "failed": len(failed), "out": args.out,
           "summary": args.summary, "config": _config_echo(args)})
    if failed:
        raise ArithmeticError(f"{len(failed)} sweep points failed")


def cmd_diagnose(args):
    _require(args, "field", "h")
    field = _read_field(args.field)
    params = _params(args)
    e = energy(field, params).total
    a = args.a
    if a is None:
        a = 0.25 * params.delta if params.delta >= 4.0 * params.h else 0.25
    if not 0.0 < a <= 0.5:
        raise UsageError(f"a must lie in (0, 1/2], got {a}")
    r, g = excess_function(field, a)
    diag = _diagnostics(field, params, e)
    rec = SweepRecord(params.h, params.delta, "file", 0, e_min=e, converged=True,
                      tau=well_exit_radius(field), diagnostics=diag)
    out = {"energy": e, "tau": rec.tau, "regime": classify_regime(rec), "a": a,
           "excess_ratio": excess_ratio(field, a, e) if e > 0 else 0.0,
           "oscillation_ratio": oscillation_check(r, g), "diagnostics": diag,
           "config": _config_echo(args)}
    _emit(out, args.out)


COMMANDS = {"evaluate": cmd_evaluate, "construct": cmd_construct, "minimize": cmd_minimize,
            "pyramid": cmd_pyramid, "sweep": cmd_sweep, "diagnose": cmd_diagnose}


def main(argv=None):
    """Parse ``argv`` and run the subcommand; returns the exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        args = _apply_config(parser, sub, args, argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"vkcone {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"vkcone {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except (ArithmeticError, DivergedEnergy, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"vkcone {args.command}: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        sys.stderr.write(f"vkcone {args.command}: error: {exc}\n")
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
