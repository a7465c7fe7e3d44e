"""
Main entry point of the `frac` command.

    frac <mode> --config <path> [--out <dir>] [--seed <n>] [--jobs <n>] [--verbose]

Exit codes: 0 success (a blow-up verdict is a result, not an error), 1 failed verification,
2 configuration error, 3 numerical failure.
"""

import argparse
import logging
import sys
from pathlib import Path

from fracfujita.config import ensure_dirs, settings
from fracfujita.core.errors import ConfigError, FracError
from fracfujita.experiment import MODES, load_config, run

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def configure_logging(verbose: bool = False) -> None:
    """File + console logging in the shared format."""
    ensure_dirs()
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(Path(settings.log_dir) / 'fracfujita.log'),
            logging.StreamHandler()
        ],
        force=True
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frac", description="Space-time fractional Fujita experiments")
    parser.add_argument("mode", choices=MODES, help="what to run")
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, default=None, help="Monte-Carlo seed")
    parser.add_argument("--jobs", type=int, default=None, help="worker pool size")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def main(argv=None) -> int:
    """Parse arguments, run the mode and map the outcome to an exit code.

    Args:
        argv (list, optional): argument list; defaults to sys.argv[1:].

    Returns:
        int: process exit code.
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        config = load_config(args.config, mode=args.mode, output_dir=args.out, seed=args.seed, jobs=args.jobs)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG

    try:
        result = run(config)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except FracError as e:
        logger.exception(f"{config.mode} failed: {type(e).__name__}: {e}")
        return EXIT_NUMERIC

    if config.mode == "verify" and not result["passed"]:
        logger.error(f"Verification failed: {result['checks']}")
        return EXIT_VERIFY_FAILED
    logger.info(f"Outputs written to {config.out_dir()}")
    return EXIT_OK


def launch():
    """Console-script entry point."""
    sys.exit(main())
