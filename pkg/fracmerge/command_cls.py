
from inspect import Parameter, Signature
from types import MappingProxyType
from typing import Any, Callable, Optional, Union, get_args, get_origin

from fracmerge.invalid_argument import InvalidArgument

_TRUE_VALUES = ("True", "true", "1")
_FALSE_VALUES = ("False", "false", "0")


def convert_value(value_str: str, annotation: Any) -> Any:
    """Converts a command-line or config file string to the annotated type.

    Supports `int`, `float`, `bool`, `str`, `Optional[...]` of those (the
    strings "None" and "none" give None) and comma-separated
    `tuple[X, ...]`.

    Raises
    ------
    ValueError
        If the string cannot be converted.
    """
    if annotation is Parameter.empty or annotation is None or \
            annotation is str or annotation is Any:
        return value_str
    origin = get_origin(annotation)
    if origin is Union:
        options = [arg for arg in get_args(annotation)
                   if arg is not type(None)]
        if value_str in ("None", "none"):
            return None
        return convert_value(value_str, options[0])
    if origin is tuple:
        item_type = get_args(annotation)[0]
        return tuple(convert_value(item.strip(), item_type)
                     for item in value_str.split(",") if item.strip())
    if annotation is bool:
        if value_str in _TRUE_VALUES:
            return True
        if value_str in _FALSE_VALUES:
            return False
        raise ValueError(f"Invalid bool value '{value_str}'")
    if annotation in (int, float):
        return annotation(value_str)
    raise ValueError(f"Unknown type '{annotation}'")


def type_name(annotation: Any) -> str:
    return getattr(annotation, "__name__", None) or str(annotation)


class Command:
    """
    Holds information about a command function.
    """

    name: str
    path: str
    function: Callable[..., Any]

    def __init__(self, name: str, path: str, function: Callable[..., Any]):
        self.name = name
        self.path = path
        self.function = function

    @property
    def parameters(self) -> MappingProxyType:
        return Signature.from_callable(self.function).parameters

    def execute(self, positional_args: list[str],
                keyword_args: dict[str, str]) -> Any:
        parameters = self.parameters
        converted_positional = \
            self._convert_positional_args(positional_args, parameters)
        converted_keyword = self._convert_keyword_args(keyword_args,
                                                       parameters)
        return self.function(*converted_positional, **converted_keyword)

    def args_string(self) -> str:
        parameter_strs: list[str] = []
        for name, parameter in self.parameters.items():
            option = name.replace("_", "-")
            if parameter.default is Parameter.empty:
                parameter_strs.append(name.upper())
            else:
                parameter_strs.append(f"[--{option} {name.upper()}]")
        return " ".join(parameter_strs)

    def summary(self) -> str:
        doc = self.function.__doc__
        return doc.strip().splitlines()[0] if doc else ""

    def _convert_positional_args(self, args: list[str],
                                 parameters: MappingProxyType
                                 ) -> list[Any]:
        parameters_list: list[Parameter] = list(parameters.values())
        if len(args) > len(parameters_list):
            raise InvalidArgument(
                f"Command '{self.name}' takes at most " +
                f"{len(parameters_list)} positional arguments, got " +
                f"{len(args)}")
        return [self._convert(arg, parameter)
                for arg, parameter in zip(args, parameters_list)]

    def _convert_keyword_args(self, args: dict[str, str],
                              parameters: MappingProxyType
                              ) -> dict[str, Any]:
        converted_args: dict[str, Any] = {}
        for name, arg in args.items():
            parameter: Optional[Parameter] = parameters.get(name)
            if parameter is None:
                raise InvalidArgument(
                    f"Unknown option '--{name.replace('_', '-')}' for " +
                    f"command '{self.name}'")
            converted_args[name] = self._convert(arg, parameter)
        return converted_args

    def _convert(self, arg: str, parameter: Parameter) -> Any:
        try:
            return convert_value(arg, parameter.annotation)
        except ValueError:
            raise InvalidArgument(
                f"Cannot convert '{arg}' to " +
                f"{type_name(parameter.annotation)} for parameter " +
                f"'{parameter.name}' of command '{self.name}'")
