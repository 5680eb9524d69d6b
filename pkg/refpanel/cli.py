"""Command-line front end.

    refpanel theory-sweep --config sweep.env --out results/
    refpanel figure --config figure.env --validate --jobs 4

Exit status: 0 on success, 2 for configuration errors, 3 when a numerical failure occurred at any point.
"""

import argparse
import logging
import os
import sys

from dotenv import load_dotenv
from rich.logging import RichHandler

from refpanel import __version__
from refpanel.errors import ConfigError, NumericalError
from refpanel.harness import Mode, load_experiment, run
from refpanel.telemetry import configure_tracing

logger = logging.getLogger("refpanel")


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="refpanel", description="Risk theory and simulations for reference-panel estimators"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True, metavar="{" + ",".join(m.value for m in Mode) + "}")
    for mode in Mode:
        cmd = sub.add_parser(mode.value)
        cmd.add_argument("--config", required=True, help="key = value experiment file")
        cmd.add_argument("--out", default="results", help="output directory for CSV files")
        cmd.add_argument("--seed", type=_seed, default=None)
        cmd.add_argument("--jobs", type=int, default=None)
        cmd.add_argument("--validate", action="store_true", default=None, help="add desk-scale Monte Carlo columns")
    return parser


def configure_logging():
    logging.basicConfig(level=logging.WARNING, format="%(message)s", datefmt="[%X]", handlers=[RichHandler()])
    logger.setLevel(os.getenv("REFPANEL_LOG_LEVEL", "INFO").upper())


def main(argv: list[str] | None = None) -> int:
    if os.getenv("RUNNING_IN_PRODUCTION", "false").lower() != "true":
        load_dotenv(override=True)
    configure_logging()
    args = build_parser().parse_args(argv)
    configure_tracing("refpanel-cli")

    try:
        config = load_experiment(
            args.config, mode=args.mode, seed=args.seed, jobs=args.jobs, validate_mc=args.validate
        )
        outcome = run(config, args.out)
    except (ConfigError, FileNotFoundError) as err:
        logger.error(f"configuration error: {err}")
        return 2
    except NumericalError as err:
        logger.error(f"numerical failure: {type(err).__name__}: {err}")
        return 3

    logger.info(f"{args.mode}: {len(outcome.paths)} file(s) under {args.out}")
    return 3 if outcome.failures else 0


if __name__ == "__main__":
    sys.exit(main())
