
from inspect import getmembers, isfunction
from types import ModuleType
from typing import Optional

from fracmerge.command_cls import Command
from fracmerge.command_store import CommandStore


class ModuleCommandStore(CommandStore):
    """Returns the functions of one imported module that carry the @command
    decorator."""

    _commands: dict[str, Command]

    def __init__(self, module: ModuleType):
        """Create a CommandStore over the command functions of `module`.

        Parameters
        ----------
        module : ModuleType
            Module to scan, e.g. `fracmerge.commands`.
        """
        self._commands = {}
        for _, member in getmembers(module):
            if isfunction(member) and hasattr(member, "_command"):
                name: str = member._command["name"]  # type: ignore
                self._commands[name] = Command(name, module.__name__, member)

    def get_command(self, name: str) -> Optional[Command]:
        return self._commands.get(name)

    def get_commands(self) -> list[Command]:
        return [self._commands[name] for name in sorted(self._commands)]
