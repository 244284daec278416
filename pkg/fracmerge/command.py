
from typing import Any, Callable, Union


def command(fn_or_name: Union[str, Callable[..., Any]]) -> Callable[..., Any]:
    """Decorator for marking a function as a pipeline command that can be
    called from the command-line.

    Examples:

        @command
        def gen():
            ...

        @command("train-ae")
        def train_autoencoder_command():
            ...

    Parameters
    ----------
    fn_or_name : Union[str, Callable[..., Any]]
        Optional custom command name, if not provided then the function
        name is used with underscores turned into hyphens.

    Returns
    -------
    Callable[..., Any]
        The decorated function.
    """
    if callable(fn_or_name):
        fn_or_name._command = {  # type: ignore
            "name": fn_or_name.__name__.replace("_", "-")}
        return fn_or_name

    def decorator_fn(fn: Callable[..., Any]) -> Callable[..., Any]:
        fn._command = {"name": fn_or_name}  # type: ignore
        return fn
    return decorator_fn
