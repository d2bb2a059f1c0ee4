"""Command line entry point: one subcommand per experiment."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import ConfigError
from .fronthaul import SelectionInfeasible
from .harness import EXPERIMENTS, MODES, ExperimentSpec, load_config, run
from .sca import DegenerateLinearization, InfeasibleQoS, SolverFailure

EXIT_OK, EXIT_CONFIG, EXIT_QOS, EXIT_SOLVER = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdcellfree", description="Full-duplex cell-free massive MIMO experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value scenario file")
        s.add_argument("--seed", type=int, help="master seed (overrides the file)")
        s.add_argument("--trials", type=int, help="deployments or MC realizations (overrides the file)")
        s.add_argument("--out", help="output directory (overrides the file)")
        if name in ("optimize-wsee", "sweep-nu", "sweep-power"):
            s.add_argument("--mode", choices=MODES, help="centralized or ADMM optimization")
    return p


def make_spec(args) -> ExperimentSpec:
    spec = load_config(args.config) if args.config else ExperimentSpec(experiment=args.experiment)
    changes = {"experiment": args.experiment}
    for key in ("seed", "trials", "out", "mode"):
        v = getattr(args, key, None)
        if v is not None:
            changes[key] = v
    return replace(spec, **changes)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = make_spec(args)
        paths = run(spec)
    except (ConfigError, SelectionInfeasible) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleQoS as e:
        print(f"infeasible QoS: {e}", file=sys.stderr)
        return EXIT_QOS
    except (SolverFailure, DegenerateLinearization) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
