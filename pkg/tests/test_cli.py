
from typing import Optional

import pytest

from fracmerge import commands
from fracmerge.command_cls import convert_value
from fracmerge.command_executor import CommandExecutor
from fracmerge.file_system_assembly_store import FileSystemAssemblyStore
from fracmerge.invalid_argument import InvalidArgument
from fracmerge.main import _pop_log_level, main
from fracmerge.module_command_store import ModuleCommandStore

COMMAND_NAMES = ["assemble", "eval", "experiment", "export", "gen",
                 "train-ae", "train-denoiser", "train-verifier"]


@pytest.fixture
def executor():
    return CommandExecutor(ModuleCommandStore(commands), "fracmerge")


def test_store_finds_every_command():
    store = ModuleCommandStore(commands)
    assert [c.name for c in store.get_commands()] == COMMAND_NAMES
    assert store.get_names() == COMMAND_NAMES
    assert store.get_command("gen").function is commands.gen
    assert store.get_command("missing") is None


def test_parse_args_forms(executor):
    positional, keyword = executor.parse_args(
        ["first", "--data-root", "data", "--include-anchor", "--count=3",
         "seed=2"])
    assert positional == ["first"]
    assert keyword == {"data_root": "data", "include_anchor": "true",
                       "count": "3", "seed": "2"}


def test_parse_args_rejects_late_positionals(executor):
    with pytest.raises(InvalidArgument):
        executor.parse_args(["count=3", "late"])


def test_convert_value():
    assert convert_value("false", bool) is False
    assert convert_value("1", bool) is True
    assert convert_value("none", Optional[int]) is None
    assert convert_value("4", Optional[int]) == 4
    assert convert_value("1, 2,3", tuple[int, ...]) == (1, 2, 3)
    assert convert_value("0.5", float) == 0.5
    assert convert_value("cube", str) == "cube"
    with pytest.raises(ValueError):
        convert_value("yes", bool)
    with pytest.raises(ValueError):
        convert_value("x", list)


def test_pop_log_level():
    assert _pop_log_level(["fracmerge", "--log-level", "debug", "gen"]) == \
        (["fracmerge", "gen"], "DEBUG")
    assert _pop_log_level(["fracmerge", "gen", "--log-level=warning"]) == \
        (["fracmerge", "gen"], "WARNING")
    assert _pop_log_level(["fracmerge", "gen"]) == (["fracmerge", "gen"],
                                                     "INFO")


def test_usage_lists_commands(capsys):
    assert main(["fracmerge"]) is None
    output = capsys.readouterr().out
    assert "Usage: fracmerge [--log-level LEVEL] COMMAND [ARGS]" in output
    for name in COMMAND_NAMES:
        assert name in output


def test_command_help(capsys):
    main(["fracmerge", "help", "gen"])
    output = capsys.readouterr().out
    assert output.startswith("Usage: fracmerge gen [--config CONFIG]")
    assert "[--data-root DATA_ROOT]" in output
    assert "Generate a synthetic fracture dataset." in output


def test_unknown_command(capsys):
    assert main(["fracmerge", "reassemble"]) is None
    assert "Command 'reassemble' not found" in capsys.readouterr().out


def test_unknown_option_is_reported(capsys):
    assert main(["fracmerge", "gen", "--colour", "red"]) is None
    assert "Unknown option '--colour'" in capsys.readouterr().out


def test_bad_value_is_reported(capsys):
    assert main(["fracmerge", "gen", "--count", "many"]) is None
    assert "Cannot convert 'many'" in capsys.readouterr().out


def test_unknown_log_level(capsys):
    assert main(["fracmerge", "--log-level", "LOUD", "gen"]) is None
    assert "Unknown log level 'LOUD'" in capsys.readouterr().out


def test_gen_writes_a_dataset(tmp_path):
    root = str(tmp_path / "data")
    assemblies = main(["fracmerge", "--log-level", "WARNING", "gen",
                       "--data-root", root, "--count", "2", "--shapes",
                       "cube", "--min-frags", "2", "--max-frags", "3"])
    assert len(assemblies) == 2
    assert FileSystemAssemblyStore(root).get_names() == \
        sorted(a.name for a in assemblies)


def test_missing_checkpoints_exit_with_an_error(tmp_path, three_slabs):
    root = str(tmp_path / "data")
    FileSystemAssemblyStore(root).put_assembly(three_slabs)
    with pytest.raises(SystemExit) as error:
        main(["fracmerge", "eval", "--data-root", root, "--checkpoint-dir",
              str(tmp_path / "none")])
    assert error.value.code == 1
