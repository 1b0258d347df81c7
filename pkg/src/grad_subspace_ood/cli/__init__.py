"""
Command-line entry point: ``gso <command> [flags]``.

Exit codes: 0 on success, 1 on usage or configuration errors, 2 on data or
format errors.
"""

import json
from collections.abc import Sequence

from pydantic import ValidationError

from grad_subspace_ood.cli.commands import COMMANDS, run_command
from grad_subspace_ood.cli.parser import build_parser, overrides_from
from grad_subspace_ood.config import get_settings, resolve_run_config
from grad_subspace_ood.utils.errors import EXIT_OK, EXIT_USAGE, GsoError
from grad_subspace_ood.utils.logger import logger, setup_logging


def main(argv: Sequence[str] | None = None) -> int:
    """
    Parse ``argv``, resolve the run configuration and run one command.

    Args:
        argv: Arguments without the program name; ``sys.argv[1:]`` when omitted

    Returns:
        int: Process exit code
    """
    try:
        args = build_parser().parse_args(argv)
        setup_logging(json_logs=args.json_logs, level=args.log_level)
        settings = get_settings()
        ambient = {
            "runtime": {"threads": settings.THREADS, "chunk_size": settings.CHUNK_SIZE}
        }
        config = resolve_run_config(args.config, overrides_from(args), ambient)
        echo = json.dumps(config.echo(), sort_keys=True)
        logger.debug(f"Resolved run config: {echo}")
        run_command(args, config)
        return EXIT_OK
    except GsoError as e:
        logger.error(str(e))
        return e.exit_code
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USAGE
    except (ValueError, OSError) as e:
        logger.error(f"Invalid invocation: {e}")
        return EXIT_USAGE


__all__ = ["COMMANDS", "main"]
