import asyncio
import logging
import sys
from argparse import ArgumentParser
from asyncio import AbstractEventLoop
from functools import partial
from pathlib import Path
from signal import SIGINT, SIGTERM

from drivesense.exceptions import ExecutionException, ValidationException
from drivesense.utils.SignalHaltError import immediate_exit

from .cli_manager import get_init_data, initialize_argument_parser
from .pipeline_endpoint import PipelineEndpoint

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_EXECUTION = 2


async def main(
    cmd_args: list[str] = sys.argv[1:], loop: AbstractEventLoop | None = None
) -> int:
    """Runs one subcommand and maps its outcome to an exit status."""
    argument_parser: ArgumentParser = initialize_argument_parser()
    parsed_args = argument_parser.parse_args(cmd_args)
    if loop is None:
        loop = asyncio.get_running_loop()

    signals = [SIGINT, SIGTERM]
    for signal_enum in signals:
        exit_func = partial(
            immediate_exit, signal_enum=signal_enum, loop=loop,
            out=Path(parsed_args.out))
        loop.add_signal_handler(signal_enum, exit_func)

    try:
        init_data = get_init_data(parsed_args)
        endpoint = PipelineEndpoint(init_data)
        await endpoint.run_subcommand(init_data.subcommand.value)
    except ValidationException as err:
        logging.error(str(err))
        return EXIT_VALIDATION
    except ExecutionException as err:
        logging.error(str(err))
        return EXIT_EXECUTION
    except Exception:
        logging.exception("Unexpected failure")
        return EXIT_EXECUTION
    finally:
        for signal_enum in signals:
            loop.remove_signal_handler(signal_enum)
    return EXIT_OK
