import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from .config import APP_NAME, LOG_FORMAT, VERSION
from .exceptions import ConfigurationError, ConstraintError, NumericalError
from .models.run_config import ExperimentKind, RunConfig
from .services.bench_service import BenchService
from .services.experiment_service import DUMP_TARGETS, ExperimentService

# Configure logging
logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsilab", description=f"{APP_NAME} v{VERSION}")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run the experiment named in the config")
    run.add_argument("config", type=Path)

    dump = sub.add_parser("dump", help="Write a generator matrix in coordinate format")
    dump.add_argument("config", type=Path)
    dump.add_argument("--target", choices=DUMP_TARGETS, default="generator")

    validate = sub.add_parser("validate", help="Run the invariant suite on the configured grid")
    validate.add_argument("config", type=Path)

    bench = sub.add_parser("bench", help="Time assembly and the resolvent sweep at several grid sizes")
    bench.add_argument("config", type=Path)
    bench.add_argument("--grids", type=int, nargs="+", default=[8, 16])

    sub.add_parser("experiments", help="List the registered experiments")
    return parser


def format_validation_error(error: ValidationError) -> str:
    """One line per offending field, e.g. 'physics.rho: Input should be greater than or equal to 0'."""
    lines = []
    for item in error.errors():
        field = ".".join(str(part) for part in item["loc"]) or "config"
        lines.append(f"{field}: {item['msg']}")
    return "\n".join(lines)


async def dispatch(args: argparse.Namespace) -> int:
    service = ExperimentService()
    if args.command == "experiments":
        for info in service.list_experiments():
            print(f"{info['kind']:<10} {info['description']}")
        return EXIT_OK

    config = RunConfig.from_toml(args.config)
    if args.command == "run":
        manifest = await service.execute(config)
    elif args.command == "validate":
        manifest = await service.execute(config, ExperimentKind.VALIDATE)
    elif args.command == "dump":
        manifest = await service.dump(config, args.target)
    else:
        geometries = [config.geometry.model_copy(update={"n": n}).to_geometry() for n in args.grids]
        report = BenchService().bench_sweep(geometries, config.physics.rho, config.experiment.betas)
        out = service.resolve_output_dir(config)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "bench.json"
        path.write_text(report.model_dump_json(indent=2))
        print(path)
        return EXIT_OK

    for warning in manifest.warnings:
        logger.warning(warning)
    print(Path(service.resolve_output_dir(config)) / manifest.run_id)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.getLogger().setLevel(args.log_level)
    try:
        return asyncio.run(dispatch(args))
    except ValidationError as e:
        print(f"Invalid configuration:\n{format_validation_error(e)}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as e:
        print(f"Invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as e:
        if isinstance(e, ConstraintError):
            print(f"Constraint violated: {e}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"Configuration or output error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}", exc_info=True)
        print(f"Numerical failure: {e}\n{e.payload}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
