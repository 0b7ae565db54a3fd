"""Command-line entry point ``nematiclab``.

Exit codes: 0 = every checked property holds, 1 = a property failed (or the
solver broke down), 2 = usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .bulk_potential import (
    MaterialParams,
    coercivity_radius,
    eigen_interval,
    uniaxial_equilibrium,
    validate,
)
from .config import ConfigError, RunConfig, default_output_dir, load_config
from .experiments import RegularizationSpec, run_config
from .inequality_verifier import DEFAULT_BOX, verify_all
from .solver import CFLViolation, SolverBlowup
from .tensor_core import DomainError, eigen_property_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("nematiclab")


def _emit(obj, output: str | None = None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=str)
    print(text)
    if output:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(text + "\n")


def _params_from_args(args) -> MaterialParams:
    return MaterialParams(a=args.a, b=args.b, c=args.c)


def cmd_params(args) -> int:
    params = _params_from_args(args)
    problems = validate(params)
    if problems:
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_USAGE
    try:
        interval = eigen_interval(params)
        s_plus = uniaxial_equilibrium(params)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"lo = {interval.lo!r}")
    print(f"hi = {interval.hi!r}")
    print(f"eta0 = {coercivity_radius(params)!r}")
    print(f"s_plus = {s_plus!r}")
    return EXIT_OK


def cmd_verify(args) -> int:
    params = _params_from_args(args)
    problems = validate(params, require_thm_regime=True)
    if problems:
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_USAGE
    reports = verify_all(params, args.samples, args.seed, args.box)
    ok = all(r.passed for r in reports)
    _emit({"params": asdict(params), "samples": args.samples, "seed": args.seed,
           "box": args.box, "pass": ok, "reports": [r.to_dict() for r in reports]},
          args.output)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_eig_check(args) -> int:
    res = eigen_property_suite(args.samples, args.seed)
    ok = all(v["pass"] for v in res.values())
    _emit({"samples": args.samples, "seed": args.seed, "pass": ok, "checks": res}, args.output)
    return EXIT_OK if ok else EXIT_FAIL


def _load(args, scenario: str | None) -> RunConfig:
    if args.config is not None:
        return load_config(args.config)
    cfg = RunConfig()
    if scenario == "regularization":
        spec = RegularizationSpec()
        cfg.params = spec.params
        cfg.run.dt, cfg.run.T, cfg.initial.kmax = spec.dt, spec.T, spec.kmax
    return cfg


def _run_scenario(args, force_scenario: str | None = None) -> int:
    try:
        cfg = _load(args, force_scenario)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if force_scenario is not None:
        cfg.run.scenario = force_scenario
    out = args.output_dir or cfg.output.dir
    try:
        summary = run_config(cfg, out)
    except (CFLViolation, SolverBlowup) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    summary = {k: v for k, v in summary.items() if k not in ("records",)}
    summary["output_dir"] = str(out)
    _emit(summary)
    return EXIT_OK if summary["pass"] else EXIT_FAIL


def cmd_simulate(args) -> int:
    return _run_scenario(args)


def cmd_regularization(args) -> int:
    return _run_scenario(args, "regularization")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nematiclab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def abc(p, a=0.0):
        p.add_argument("--a", type=float, default=a)
        p.add_argument("--b", type=float, default=1.0)
        p.add_argument("--c", type=float, default=1.0)

    p = sub.add_parser("params", help="print the eigenvalue interval, eta0 and s+")
    abc(p)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("verify-inequalities", help="brute-force the scalar inequalities")
    abc(p)
    p.add_argument("--samples", type=int, default=10 ** 6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--box", type=float, default=DEFAULT_BOX)
    p.add_argument("--output", help="also write the JSON report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eig-check", help="eigen-solver property suite")
    p.add_argument("--samples", type=int, default=10 ** 5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(func=cmd_eig_check)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "run the scenario named in the config"),
        ("regularization-study", cmd_regularization, "velocity-mollification study"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="INI run configuration")
        p.add_argument("--output-dir", help=f"default: config value or {default_output_dir()!r}")
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
