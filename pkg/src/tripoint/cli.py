"""``tripoint <subcommand> --config <path> [--eps X] [--out DIR] [--seed N]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import NumericalError, TripointError, ValidationError
from .pipeline import Pipeline, RunConfig, StageError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

COMMANDS = {
    "validate-potential": "check the potential's hypotheses",
    "geodesics": "distance table between the wells",
    "angles": "sector openings from the distance table",
    "connections": "one-dimensional connection profiles",
    "solve": "steady state for a single eps (--eps, default: smallest in the ladder)",
    "sweep": "solve the eps ladder and compute the sharp-interface diagnostics",
    "report": "full run with summary report",
    "pipeline": "alias of report",
}


def build_parser():
    ap = argparse.ArgumentParser(prog="tripoint", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON run configuration (defaults when omitted)")
        p.add_argument("--eps", type=float, help="override the eps ladder with a single value")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed for sampled checks")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.eps is not None:
        cfg.eps = [args.eps]
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    return cfg


def run(args) -> dict:
    cfg = load_config(args)
    if args.command == "solve" and args.eps is None:
        cfg.eps = [min(cfg.eps)]
    p = Pipeline(cfg)
    step = {"validate-potential": p.potential, "geodesics": p.geodesics, "angles": p.angles,
            "connections": p.connections, "solve": p.solve, "sweep": p.diagnostics,
            "report": p.report, "pipeline": p.report}[args.command]
    step()
    m = p.write_manifest()
    return {"out": str(p.root), "stages": list(m.stages), "report": p.state.get("report")}


def exit_code(exc) -> int:
    err = exc.err if isinstance(exc, StageError) else exc
    if isinstance(err, ValidationError):
        return EXIT_VALIDATION
    if isinstance(err, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = run(args)
    except TripointError as exc:
        print(f"tripoint: {exc}", file=sys.stderr)
        return exit_code(exc)
    print(json.dumps(summary, indent=2, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
