import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from lwrinfer.commands import diagnose, fit_direct, fit_ou, infer, prior_sample, solve, synthesize
from lwrinfer.cores.config import DEFAULT_CONFIG_PATH, LOG_LEVEL, WORKERS
from lwrinfer.schemas.base import CommandResult
from lwrinfer.utils.exceptions import ConfigurationError, LwrInferError
from lwrinfer.utils.io import load_config

logger = logging.getLogger(__name__)

COMMANDS = (solve, prior_sample, fit_ou, fit_direct, synthesize, infer, diagnose)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lwrinfer",
        description="LWR traffic simulation and Bayesian inference of fundamental diagrams and boundary conditions",
    )
    parser.add_argument("--config", "-c", default=DEFAULT_CONFIG_PATH or None, help="YAML run config")
    parser.add_argument("--workers", type=int, default=WORKERS, help="Processes for parallel walker updates")
    parser.add_argument("--seed", type=int, help="Overrides sampler.seed")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="Logging level")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def _emit(result: CommandResult) -> None:
    print(result.model_dump_json(indent=2))


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    if args.workers < 1:
        _emit(CommandResult(result=False, error="--workers must be at least 1", message="Invalid arguments"))
        return ConfigurationError.exit_code

    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = config.model_copy(update={"sampler": config.sampler.model_copy(update={"seed": args.seed})})
        logger.info(f"Running {args.command}")
        result = args.handler(args, config)
    except LwrInferError as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        _emit(CommandResult(result=False, error={"type": type(e).__name__, "message": e.detail}, message=f"{args.command} failed"))
        return e.exit_code
    except ValidationError as e:
        errors = [
            {"field": ".".join(str(loc) for loc in err["loc"]), "message": err["msg"], "type": err["type"]}
            for err in e.errors()
        ]
        _emit(CommandResult(result=False, error="Validation Error", message="Input validation failed", data={"errors": errors}))
        return ConfigurationError.exit_code
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return 130
    except Exception as e:
        logger.error(f"Unhandled exception: {e}", exc_info=True)
        _emit(CommandResult(result=False, error="Internal Error", message="An unexpected error occurred"))
        return 1

    _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
