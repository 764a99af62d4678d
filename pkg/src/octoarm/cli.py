"""Command line entry point.

Verbs:
  * ``simulate``: dynamic run with configured (or zero) activations.
  * ``reach``: solve static activations for each configured target, then
    simulate the segments in sequence.
  * ``grasp``: solve the wrapping task around the configured object.
  * ``check``: fast internal consistency checks on the configured model.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 dynamic instability.
"""

from __future__ import annotations

import argparse
import sys

from .dynamics import SimulationUnstable
from .equilibrium import EquilibriumError
from .scenarios import (
    ConfigError,
    ScenarioConfig,
    SolverFailure,
    load_config,
    run_grasping,
    run_reaching,
    run_simulate,
    run_check,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="octoarm",
        description="Planar muscle-actuated soft arm: statics, dynamics, "
                    "and activation design.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, help_text in [
        ("simulate", "integrate the damped dynamics"),
        ("reach", "design activations for point-reaching targets"),
        ("grasp", "design activations that wrap an object"),
        ("check", "run quick internal consistency checks"),
    ]:
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("--config", help="scenario file (defaults apply "
                       "when omitted)")
        p.add_argument("--out", default="out",
                       help="output directory (default: ./out)")
        p.add_argument("--max-iters", type=int, default=None,
                       help="override optimizer iteration cap")
        p.add_argument("--dt", type=float, default=None,
                       help="override integration time step [s]")
        p.add_argument("--quiet", action="store_true",
                       help="suppress progress output")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = load_config(args.config)
        else:
            cfg = load_config_defaults()
        if args.max_iters is not None:
            if args.max_iters < 1:
                raise ConfigError("--max-iters must be >= 1")
            cfg.values["max_iters"] = args.max_iters
        if args.dt is not None:
            if args.dt <= 0:
                raise ConfigError("--dt must be positive")
            cfg.values["dt"] = args.dt

        if args.verb == "simulate":
            run_simulate(cfg, args.out, quiet=args.quiet)
        elif args.verb == "reach":
            run_reaching(cfg, args.out, quiet=args.quiet)
        elif args.verb == "grasp":
            run_grasping(cfg, args.out, quiet=args.quiet)
        elif args.verb == "check":
            run_check(cfg, quiet=args.quiet)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverFailure, EquilibriumError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except SimulationUnstable as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return 4
    return 0


def load_config_defaults() -> ScenarioConfig:
    from .scenarios import KEYS

    return ScenarioConfig(values={k: d for k, (_, d) in KEYS.items()})


if __name__ == "__main__":
    raise SystemExit(main())
