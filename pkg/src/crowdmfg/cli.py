"""Command-line entry point.

One subcommand per run mode, all sharing the same flags: a JSON config
describing the run, an output directory for the artifacts, a seed, and a
quiet switch.  Exit status 0 means every check configured for the run
passed; 1 means a check failed or the solver gave up; 2 means the
configuration was rejected.
"""

from __future__ import annotations

import argparse
import sys

from .scenarios import MODES, ConfigError, load_config, run_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdmfg",
        description="congested crowd motion: equilibrium solvers, "
                    "gradient flows, and reference scenarios",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "crowd": "gradient-flow crowd evolution (minimizing-movement steps)",
        "mfg-penalized": "game equilibrium with a congestion penalty",
        "mfg-constrained": "game equilibrium with the hard density cap",
        "variational": "space-time convex formulation (primal-dual solve)",
        "verify-example": "build and verify a nothing-moves scenario",
        "m-sweep": "penalized flows approaching the constrained flow",
    }
    for mode in MODES:
        p = sub.add_parser(mode, help=descriptions[mode])
        p.add_argument("--config", required=True,
                       help="path to the JSON run description")
        p.add_argument("--out", default=None,
                       help="output directory (default: config 'out' or ./out)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--quiet", action="store_true",
                       help="suppress the summary on stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, mode=args.command, seed=args.seed,
                          out=args.out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    try:
        return run_scenario(cfg, quiet=args.quiet)
    except (RuntimeError, ValueError) as err:
        print(f"run failed: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
