import json

import pytest

from helpers import small_pipeline
from intentpool.config import API_KEY_ENV, ENDPOINT_ENV, PipelineConfig
from intentpool.core.embed import EmbedderKind
from intentpool.core.errors import ConfigError
from intentpool.core.utils import derive_seed


def test_defaults_are_valid():
    config = PipelineConfig().validate()
    assert config.embedder.kind == EmbedderKind.HASH
    assert config.selection.gamma == 0.9 and config.selection.epsilon == 0.01 and config.selection.tau == 10


def test_loading_from_json(tmp_path):
    path = tmp_path / "pipeline.json"
    path.write_text(json.dumps(small_pipeline(tmp_path / "run")))
    config = PipelineConfig.from_json_file(path).validate()
    assert config.collect.game == "guess-16" and config.embedder.d == 16
    assert config.paths.cache_path == tmp_path / "run" / "embed_cache.json"


@pytest.mark.parametrize(
    "data",
    [{"plotting": {}}, {"selection": {"alpha": 1.0}}],
    ids=["unknown-section", "unknown-field"],
)
def test_unknown_keys_are_rejected(data):
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict(data)


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        PipelineConfig.from_json_file(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        PipelineConfig.from_json_file(bad)


@pytest.mark.parametrize(
    "section, values",
    [
        ("selection", {"gamma": 0.0}),
        ("selection", {"gamma": 1.5}),
        ("selection", {"epsilon": 0.0}),
        ("selection", {"tau": -1}),
        ("selection", {"k_max": 1}),
        ("selection", {"scope": "everything"}),
        ("selection", {"epsilon_grid": [0.1, 0.0]}),
        ("collect", {"games": 0}),
        ("collect", {"behavior": "clever"}),
        ("collect", {"num_workers": 0}),
        ("training", {"optimizer": "adam"}),
        ("training", {"advantage_mode": "shaped"}),
        ("training", {"learning_rate": 0.0}),
        ("online", {"refresh_every": 0}),
        ("eval", {"role": "carol"}),
        ("eval", {"games": 0}),
        ("diagnostics", {"n_grid": [64]}),
        ("paths", {"trajectories": "/nonexistent/log.traj.jsonl"}),
    ],
)
def test_validation(section, values):
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({section: values}).validate()


def test_overrides():
    config = PipelineConfig().apply_overrides(seed=3, out="elsewhere", gamma=0.5, epsilon=0.1, tau=2, k_max=9)
    assert config.seeds.base == 3 and config.paths.out == "elsewhere"
    assert (config.selection.gamma, config.selection.epsilon, config.selection.tau, config.selection.k_max) == (
        0.5,
        0.1,
        2,
        9,
    )


def test_remote_embedder_needs_an_endpoint(monkeypatch):
    monkeypatch.delenv(ENDPOINT_ENV, raising=False)
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    config = PipelineConfig().apply_overrides(embedder="remote")
    assert config.embedder.kind == EmbedderKind.REMOTE
    with pytest.raises(ConfigError):
        config.validate()
    monkeypatch.setenv(ENDPOINT_ENV, "http://localhost:9000/v1")
    monkeypatch.setenv(API_KEY_ENV, "sk-test")
    config.load_credentials()
    config.validate()
    assert config.embedder.endpoint == "http://localhost:9000/v1"
    assert "sk-test" not in json.dumps(config.to_json())


def test_named_seeds():
    seeds = PipelineConfig.from_dict({"seeds": {"base": 5, "train": 42}}).seeds
    assert seeds.resolve("train") == 42
    assert seeds.resolve("collect") == derive_seed(5, "collect")
    assert seeds.resolve("collect") != seeds.resolve("eval")
    with pytest.raises(ConfigError):
        seeds.resolve("plot")


def test_stage_fingerprints_track_their_sections():
    base = PipelineConfig()
    changed = PipelineConfig.from_dict({"training": {"epochs": 3}})
    assert base.fingerprint("train") != changed.fingerprint("train")
    assert base.fingerprint("embed") == changed.fingerprint("embed")
    assert base.fingerprint("select-k") == changed.fingerprint("select-k")
    keyed = PipelineConfig()
    keyed.embedder.api_key = "sk-secret"
    assert keyed.fingerprint("train-online") == base.fingerprint("train-online")
    with pytest.raises(ConfigError):
        base.fingerprint("plot")


def test_round_trip_preserves_fingerprints(tmp_path):
    config = PipelineConfig.from_dict(small_pipeline(tmp_path))
    again = PipelineConfig.from_dict(json.loads(json.dumps(config.to_json())))
    for stage in ("collect", "embed", "select-k", "train", "eval", "report"):
        assert again.fingerprint(stage) == config.fingerprint(stage)
