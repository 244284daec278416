
import re
import sys
from typing import Any, Optional

from fracmerge.command_cls import Command
from fracmerge.command_store import CommandStore
from fracmerge.invalid_argument import InvalidArgument


class CommandExecutor:
    """Handles execution of command functions."""

    _KEYWORD_ARG_REGEX = re.compile("([^ =-][^ =]*)=(.+)")
    _OPTION_REGEX = re.compile("--([^ =]+)(?:=(.*))?")
    _store: CommandStore
    _exe_name: str

    def __init__(self, store: CommandStore, exe_name: Optional[str] = None):
        """Creates a CommandExecutor that looks for commands in the given
        store.

        Parameters
        ----------
        store : CommandStore
            The store to look for commands in.
        exe_name : Optional[str]
            Optional executable name to include in usage help, defaults to
            sys.argv[0].
        """
        self._store = store
        self._exe_name = exe_name or sys.argv[0]

    def execute_command_from_argv(self,
                                  argv: Optional[list[str]] = None) -> Any:
        """Execute a command from a list of command-line arguments.

        The first element of argv is assumed to be the program name and is
        ignored. The second element is treated as the command name.
        Subsequent elements are treated as command arguments.

        Parameters
        ----------
        argv : Optional[list[str]], optional
            Command-line argument list, if not specified then sys.argv is
            used.

        Returns
        -------
        Any
            The result of the command, if any.
        """
        if argv is None:
            argv = sys.argv
        if len(argv) < 2:
            self._print_usage()
            return None
        return self.execute_command_from_args(argv[1], argv[2:])

    def execute_command_from_args(self, command_name: str,
                                  args: list[str]) -> Any:
        """Execute a command given a command name and list of string
        arguments.

        Arguments of the form "--name value", "--name=value" or "name=value"
        are keyword arguments, with hyphens in the name read as underscores;
        a "--name" followed by another option or nothing is the flag value
        "true". Everything else is positional.

        Parameters
        ----------
        command_name : str
            The name of the command to execute.
        args : list[str]
            A list of command arguments.

        Returns
        -------
        Any
            The result of the command, or None if it could not be run.
        """
        if command_name in ("help", "--help", "-h"):
            self._print_help(args)
            return None
        command: Optional[Command] = self._store.get_command(command_name)
        if not command:
            self._command_not_found(command_name)
            return None
        try:
            positional_args, keyword_args = self.parse_args(args)
            return command.execute(positional_args, keyword_args)
        except InvalidArgument as e:
            print(str(e))
            return None

    def parse_args(self, args: list[str]) -> tuple[list[str], dict[str, str]]:
        positional_args: list[str] = []
        keyword_args: dict[str, str] = {}
        i = 0
        while i < len(args):
            arg = args[i]
            option = self._OPTION_REGEX.fullmatch(arg)
            keyword = self._KEYWORD_ARG_REGEX.fullmatch(arg)
            if option:
                name = option.group(1).replace("-", "_")
                value = option.group(2)
                if value is None:
                    if i + 1 < len(args) and not args[i + 1].startswith("--"):
                        value = args[i + 1]
                        i += 1
                    else:
                        value = "true"
                keyword_args[name] = value
            elif keyword:
                keyword_args[keyword.group(1).replace("-", "_")] = \
                    keyword.group(2)
            elif keyword_args:
                raise InvalidArgument(
                    f"Positional argument '{arg}' follows keyword arguments")
            else:
                positional_args.append(arg)
            i += 1
        return positional_args, keyword_args

    def _command_not_found(self, command_name: str) -> None:
        print(f"Command '{command_name}' not found")
        print()
        self._print_usage()

    def _print_help(self, args: list[str]) -> None:
        if args:
            command_name = args[0]
            command: Optional[Command] = self._store.get_command(command_name)
            if not command:
                self._command_not_found(command_name)
                return
            self._print_command_help(command)
            return
        self._print_usage()

    def _print_command_help(self, command: Command) -> None:
        print(f"Usage: {self._exe_name} {command.name} " +
              f"{command.args_string()}")
        if command.function.__doc__:
            print()
            print(command.function.__doc__)

    def _print_usage(self) -> None:
        print(f"Usage: {self._exe_name} [--log-level LEVEL] COMMAND [ARGS]")
        print()
        print("Where COMMAND is one of:")
        for command in self._store.get_commands():
            print(f"  {command.name:<16}{command.summary()}")
        print()
        print(f"Use '{self._exe_name} help COMMAND' for " +
              "command-specific help")
