"""Command line interface: ``solve``, ``convergence`` and ``diagnose``.

Every option can also come from a ``--config`` file of ``key = value`` lines
(``#`` starts a comment; keys use the long option names, dashes or
underscores).  Command line flags override file values.

Exit status: 0 on success, 1 when the solver fails, 2 on invalid arguments.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import StudyConfig, diagnose, format_diagnostics, resolve_r, run_study
from .problems import PROBLEMS, get_problem
from .stepper import SolverConfig, SolverError, run

EXIT_OK, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2

DEFAULTS = {
    "solve": {"problem": "ex1", "alpha": None, "N": None, "Ms": None, "r": "auto", "tol": 1e-12,
              "out": None, "h1_rule": "degree4"},
    "convergence": {"problem": "ex1", "alphas": None, "Ns": None, "r": "auto", "format": "csv",
                    "out": None, "mode": "temporal", "tol": 1e-12, "h1_rule": "degree4",
                    "no_timing": False},
    "diagnose": {"alpha": None, "N": None, "r": "auto", "out": None, "m1": 2.0, "L": 1.0, "R1": 1.0},
}


def read_config(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _float_list(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _int_list(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def _r_value(text):
    return "auto" if str(text) == "auto" else float(text)


def _truthy(value):
    return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l21sigma", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    # defaults stay None so config-file values can fill the gaps
    s = sub.add_parser("solve", help="solve one problem instance")
    s.add_argument("--config")
    s.add_argument("--problem", choices=sorted(PROBLEMS))
    s.add_argument("--alpha", type=float)
    s.add_argument("--N", type=int)
    s.add_argument("--Ms", type=int, help="spatial subdivisions (default: N)")
    s.add_argument("--r", type=_r_value, help="grading exponent or 'auto' for 2/alpha")
    s.add_argument("--tol", type=float)
    s.add_argument("--h1-rule", dest="h1_rule", choices=["degree4", "centroid"])
    s.add_argument("--out", help="per-step CSV dump")

    c = sub.add_parser("convergence", help="error/order table over N = Ms")
    c.add_argument("--config")
    c.add_argument("--problem", choices=sorted(PROBLEMS))
    c.add_argument("--alphas", type=_float_list)
    c.add_argument("--Ns", type=_int_list)
    c.add_argument("--r", type=_r_value)
    c.add_argument("--format", choices=["csv", "md"])
    c.add_argument("--mode", choices=["temporal", "spatial"])
    c.add_argument("--tol", type=float)
    c.add_argument("--h1-rule", dest="h1_rule", choices=["degree4", "centroid"])
    c.add_argument("--no-timing", dest="no_timing", action="store_const", const=True,
                   help="write wall_ms as 0 for reproducible output")
    c.add_argument("--out")

    d = sub.add_parser("diagnose", help="weight and coefficient checks")
    d.add_argument("--config")
    d.add_argument("--alpha", type=float)
    d.add_argument("--N", type=int)
    d.add_argument("--r", type=_r_value)
    d.add_argument("--m1", type=float)
    d.add_argument("--L", type=float)
    d.add_argument("--R1", type=float)
    d.add_argument("--out", help="JSON report")
    return parser


_CONVERTERS = {
    "alpha": float, "N": int, "Ms": int, "tol": float, "r": _r_value, "alphas": _float_list,
    "Ns": _int_list, "m1": float, "L": float, "R1": float, "no_timing": _truthy,
}


def merge_options(command: str, args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        for key, value in read_config(args.config).items():
            if key not in opts:
                raise ValueError(f"unknown config key {key!r} for '{command}'")
            opts[key] = _CONVERTERS.get(key, str)(value)
    for key in opts:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    return opts


def _require(opts, *keys):
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        raise ValueError("missing required option(s): " + ", ".join("--" + k for k in missing))


def cmd_solve(opts) -> int:
    _require(opts, "alpha", "N")
    problem = get_problem(opts["problem"], opts["alpha"])
    N = opts["N"]
    Ms = opts["Ms"] or N
    r = resolve_r(opts["r"], problem.alpha)
    result = run(problem, N, Ms, r, SolverConfig(newton_tol=opts["tol"]))
    l2, h1 = result.error_history(h1_rule=opts["h1_rule"])
    if opts["out"]:
        result.write_csv(opts["out"])
    print(f"problem={problem.name} alpha={problem.alpha:g} r={r:g} N={N} Ms={Ms}")
    print(f"max L2 error   {l2.max():.3e}")
    print(f"max H1 error   {h1.max():.3e} ({opts['h1_rule']})")
    print(f"newton iterations: mean {result.newton_iterations.mean():.2f}, max {result.newton_iterations.max()}")
    print(f"step restriction satisfied at every step: {bool(result.step_bound_ok.all())}")
    return EXIT_OK


def cmd_convergence(opts) -> int:
    _require(opts, "alphas", "Ns")
    config = StudyConfig(
        problem=opts["problem"],
        alphas=opts["alphas"],
        Ns=opts["Ns"],
        mode=opts["mode"],
        r_policy=opts["r"],
        fmt=opts["format"],
        out=opts["out"],
        newton_tol=opts["tol"],
        h1_rule=opts["h1_rule"],
        record_timing=not opts["no_timing"],
    )
    report = run_study(config)
    if not opts["out"]:
        sys.stdout.write(report.render())
    return EXIT_OK


def _json_scalar(obj):
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def cmd_diagnose(opts) -> int:
    _require(opts, "alpha", "N")
    r = resolve_r(opts["r"], opts["alpha"])
    report = diagnose(opts["alpha"], opts["N"], r, m1=opts["m1"], L=opts["L"], R1=opts["R1"])
    print(format_diagnostics(report))
    if opts["out"]:
        with open(opts["out"], "w") as fh:
            json.dump(report, fh, indent=2, default=_json_scalar)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "convergence": cmd_convergence, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        opts = merge_options(args.command, args)
        return COMMANDS[args.command](opts)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
