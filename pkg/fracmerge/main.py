
import logging
import sys
from typing import Any, Optional

from fracmerge import commands
from fracmerge.command_executor import CommandExecutor
from fracmerge.contract_violation import ContractViolation
from fracmerge.domain_error import DomainError
from fracmerge.invalid_argument import InvalidArgument
from fracmerge.load_error import LoadError
from fracmerge.module_command_store import ModuleCommandStore
from fracmerge.training_error import TrainingError

logger = logging.getLogger(__name__)

EXE_NAME = "fracmerge"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _pop_log_level(argv: list[str]) -> tuple[list[str], str]:
    level = "INFO"
    remaining: list[str] = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg == "--log-level" and i + 1 < len(argv):
            level = argv[i + 1]
            i += 2
            continue
        if arg.startswith("--log-level="):
            level = arg.split("=", 1)[1]
        else:
            remaining.append(arg)
        i += 1
    return remaining, level.upper()


def main(argv: Optional[list[str]] = None) -> Any:
    """Executes the pipeline command named by argv, returning any result.

    The command whose name matches argv[1] is executed with the remaining
    values as its arguments, either positional or as "--name value",
    "--name=value" or "name=value" options. If no command has the given name
    then usage help is printed to stdout.

    A "--log-level LEVEL" option anywhere on the command line sets the level
    of the root logger (INFO by default).

    Parameters
    ----------
    argv : Optional[list[str]], optional
        Command-line argument list, if not specified then sys.argv is used.

    Returns
    -------
    Any
        The result of the command function, if any.
    """
    argv, level = _pop_log_level(list(sys.argv if argv is None else argv))
    if not isinstance(logging.getLevelName(level), int):
        print(f"Unknown log level '{level}'")
        return None
    logging.basicConfig(level=level, format=LOG_FORMAT)
    executor = CommandExecutor(ModuleCommandStore(commands), EXE_NAME)
    try:
        return executor.execute_command_from_argv(argv)
    except (InvalidArgument, DomainError, LoadError, TrainingError,
            ContractViolation) as e:
        logger.error("%s: %s", type(e).__name__, e)
        sys.exit(1)
