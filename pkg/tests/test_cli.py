import json

import pytest

from helpers import small_pipeline
from intentpool.cli import main, parse_args
from intentpool.harness import TRAJECTORIES


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "pipeline.json"
    path.write_text(json.dumps(small_pipeline(tmp_path / "run", games=6)))
    return path


def test_collect_succeeds(config_file, tmp_path, capsys):
    assert main(["collect", "--config", str(config_file)]) == 0
    assert "===== PIPELINE STAGES =====" in capsys.readouterr().out
    assert (tmp_path / "run" / TRAJECTORIES).exists()


def test_flags_before_and_after_the_command():
    before = parse_args(["--seed", "3", "--tau", "4", "embed"])
    after = parse_args(["embed", "--seed", "3", "--tau", "4"])
    assert (before.seed, before.tau, before.command) == (after.seed, after.tau, after.command) == (3, 4, "embed")
    assert not hasattr(parse_args(["embed"]), "seed")


def test_overrides_reach_the_run(config_file, tmp_path):
    out = tmp_path / "elsewhere"
    assert main(["collect", "--config", str(config_file), "--out", str(out), "--seed", "11"]) == 0
    assert (out / TRAJECTORIES).exists()
    manifest = json.loads((out / "collect" / "manifest.json").read_text())
    assert manifest["stage"] == "collect"


def test_exit_codes(config_file, tmp_path, capsys):
    assert main(["collect", "--config", str(config_file), "--tau", "-1"]) == 2
    assert main(["collect", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["embed", "--config", str(config_file)]) == 3
    assert "ArtifactError" in capsys.readouterr().err


def test_command_is_required():
    with pytest.raises(SystemExit):
        parse_args([])
