"""`l0s` command line entry point.

    l0s run <config.json> [--out DIR] [--seed N] [--list] [-v]

Exit status is 0 on success, 1 for configuration problems and 2 for failures while
running.
"""

import argparse
import json
import sys
from pathlib import Path

from loguru import logger

from l0s import __version__
from l0s.core import ConfigError, L0sError
from l0s.experiments.config import ExperimentConfig, validate
from l0s.experiments.runner import describe, run

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l0s", description="Run kernel sampling experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="run the experiment described by a JSON config")
    run_parser.add_argument("config", nargs="?", help="path to the experiment config")
    run_parser.add_argument("--out", help="output directory, overrides `output`")
    run_parser.add_argument("--seed", type=int, help="master seed, overrides `seed`")
    run_parser.add_argument("--list", action="store_true", help="list available experiments and exit")
    run_parser.add_argument("-v", "--verbose", action="store_true", help="log per-arm progress")
    return parser


def load_config(path: str, out: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Read and validate a config file, applying command line overrides."""

    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as err:
        raise ConfigError.single("config", f"cannot read {path}: {err}") from None

    config = validate(text)
    overrides = {k: v for k, v in (("output", out), ("seed", seed)) if v is not None}
    if overrides:
        config = validate(json.dumps(config.to_dict() | overrides))
    return config


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if args.verbose else "INFO")

    if args.list:
        for name, description in describe().items():
            print(f"{name:<20} {description}")
        return EXIT_OK

    if args.config is None:
        logger.error("config: a config file is required unless --list is given")
        return EXIT_CONFIG

    try:
        config = load_config(args.config, args.out, args.seed)
        run(config)
    except ConfigError as err:
        for field, message in err.issues:
            logger.error(f"{field}: {message}")
        return EXIT_CONFIG
    except (L0sError, OSError) as err:
        logger.error(f"Experiment failed: {err}")
        return EXIT_RUNTIME
    except Exception:
        logger.exception("Experiment failed unexpectedly")
        return EXIT_RUNTIME

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
