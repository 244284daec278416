
from typing import Optional

from fracmerge.command_cls import Command


class CommandStore:
    """Interface for looking up the pipeline commands (`gen`, `train-ae`,
    `eval`, ...) that the executor can run."""

    def get_command(self, name: str) -> Optional[Command]:
        """Looks up a pipeline command by its command-line name.

        Parameters
        ----------
        name : str
            Hyphenated command name, e.g. "train-denoiser".

        Returns
        -------
        Optional[Command]
            The command, or None if no command has that name.
        """
        raise NotImplementedError()

    def get_commands(self) -> list[Command]:
        """Returns every command, sorted by name, for the usage listing."""
        raise NotImplementedError()

    def get_names(self) -> list[str]:
        return [command.name for command in self.get_commands()]
