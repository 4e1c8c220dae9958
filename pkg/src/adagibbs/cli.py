"""Command line entry point.

Six subcommands: ``simulate`` (exact chain-law simulation of the truncated
ladder), ``counterexample``, ``bounds``, ``optimal-scan`` and
``geometric-gap`` (the corresponding experiments), and ``variance`` (either
the lazy-variance identity experiment via ``--config`` or per-coordinate
autocorrelation analysis of an existing trajectory CSV via ``--trajectory``).
Experiment subcommands take ``--config PATH`` plus optional ``--seed`` and
``--out`` overrides; with ``--check`` the exit status is 0 when every
embedded acceptance check passed and 1 otherwise.  Usage errors exit with 2.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .experiments import ConfigError, ExperimentConfig, run_experiment
from .samplers import read_trajectory_csv
from .variance import iact_estimate

# Which config kinds each subcommand accepts.
SUBCOMMAND_KINDS = {
    "simulate": ("truncated-ladder",),
    "counterexample": ("counterexample",),
    "bounds": ("bounds",),
    "variance": ("lazy-variance",),
    "optimal-scan": ("optimal-scan",),
    "geometric-gap": ("geometric-gap",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adagibbs",
        description="Adaptive random scan Gibbs samplers: experiments and checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_KINDS:
        p = sub.add_parser(name, help=f"run a {'/'.join(SUBCOMMAND_KINDS[name])} config")
        p.add_argument("--config", help="path to a JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument(
            "--check",
            action="store_true",
            help="exit 1 unless every embedded acceptance check passes",
        )
        if name == "variance":
            p.add_argument(
                "--trajectory",
                help="trajectory CSV to analyse instead of running a config",
            )
            p.add_argument(
                "--burn-in", type=int, default=0, help="samples to drop before analysis"
            )
    return parser


def _analyse_trajectory(path, burn_in):
    columns = read_trajectory_csv(path)
    coords = sorted(
        int(name[2:]) for name in columns if name.startswith("x_") and name[2:].isdigit()
    )
    if not coords:
        raise ValueError(f"{path} holds no x_i columns")
    print("coordinate,iact,asymptotic_variance")
    total = 0.0
    for k in coords:
        trace = columns[f"x_{k}"][burn_in:]
        tau = iact_estimate(trace)
        sigma2 = tau * float(np.var(trace))
        total += sigma2
        print(f"{k},{tau!r},{sigma2!r}")
    print(f"total,,{total!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "variance" and getattr(args, "trajectory", None):
        try:
            _analyse_trajectory(args.trajectory, args.burn_in)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        return 0

    if not args.config:
        parser.error(f"{args.command}: --config is required")
    try:
        config = ExperimentConfig.from_file(args.config)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if config.kind not in SUBCOMMAND_KINDS[args.command]:
        print(
            f"error: subcommand {args.command!r} expects a config of kind "
            f"{SUBCOMMAND_KINDS[args.command]}, got {config.kind!r}",
            file=sys.stderr,
        )
        return 2
    config = config.with_overrides(seed=args.seed, out=args.out)
    try:
        manifest, result = run_experiment(config, out_dir=args.out, check=args.check)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"digest": manifest.digest, "passed": result.passed, **result.summary},
                     sort_keys=True, default=str))
    for name, check in result.checks.items():
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{status} {config.kind}/{name}: {check['detail']}")
    if args.check and not result.passed:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
