"""Tests for the command-line entry point."""

import json

import yaml

from probeopt_core.main_service.cli import EXIT_LIBRARY, EXIT_OK, build_parser, main
from tests.conftest import tiny_experiment


def last_json_line(text: str) -> dict:
    return json.loads(text.strip().splitlines()[-1])


def test_parser_flags():
    """Verb plus the documented options."""
    args = build_parser().parse_args(["optimize", "--seed", "3", "--baseline", "vae-mdn", "--workers", "2"])
    assert (args.verb, args.seed, args.baseline, args.workers) == ("optimize", 3, "vae-mdn", 2)


def test_missing_dataset_exits_with_library_error(tmp_path, capsys):
    """train before generate reports MISSING_ARTIFACT on stderr."""
    code = main(["train", "--out", str(tmp_path), "--settings", str(tmp_path / "none.yaml")])
    assert code == EXIT_LIBRARY
    error = last_json_line(capsys.readouterr().err)
    assert error["status"] == "error"
    assert error["code"] == "MISSING_ARTIFACT"


def test_invalid_config_exits_with_library_error(tmp_path, capsys):
    """Validation failures map to CONFIGURATION_ERROR."""
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"ga": {"population": 1}}))
    code = main(["generate", "--config", str(path), "--settings", str(tmp_path / "none.yaml")])
    assert code == EXIT_LIBRARY
    assert last_json_line(capsys.readouterr().err)["code"] == "CONFIGURATION_ERROR"


def test_generate_prints_status_line(tmp_path, capsys):
    """A successful stage ends with a JSON status line on stdout."""
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(tiny_experiment("unused")))
    out = tmp_path / "run"
    code = main(["generate", "--config", str(path), "--out", str(out), "--seed", "2",
                 "--settings", str(tmp_path / "none.yaml")])
    assert code == EXIT_OK
    record = last_json_line(capsys.readouterr().out)
    assert record["status"] == "success"
    assert record["stage"] == "generate"
    assert record["seed"] == 2
    assert (out / "data" / "dataset.pbds").exists()
