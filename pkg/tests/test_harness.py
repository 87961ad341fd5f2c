import json

import pandas as pd
import pytest

from helpers import guess_records, small_pipeline
from intentpool.config import PipelineConfig
from intentpool.core.errors import ArtifactChecksumError, ArtifactError, ValidationError
from intentpool.core.trajectory import TrajectorySet, parse_trajectories, write_trajectories
from intentpool.harness import (
    EVAL_SUMMARY,
    OUTCOMES,
    SELECTION,
    STAGES,
    TRAJECTORIES,
    Pipeline,
    _chunks,
)


def _pipeline(out, force=False, **sections):
    data = small_pipeline(out)
    for name, values in sections.items():
        data[name] = {**data.get(name, {}), **values}
    return Pipeline(PipelineConfig.from_dict(data).validate(), force=force)


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    results = _pipeline(out).run_all()
    return out, results


def test_chunks():
    assert _chunks(10, 3) == [(0, 4), (4, 3), (7, 3)]
    assert _chunks(2, 4) == [(0, 1), (1, 1)]
    assert _chunks(5, 1) == [(0, 5)]


def test_full_pipeline_writes_every_stage(full_run):
    out, results = full_run
    assert [r.stage for r in results] == list(STAGES)
    assert not any(r.skipped for r in results)
    for stage in STAGES:
        manifest = json.loads((out / stage / "manifest.json").read_text())
        assert manifest["stage"] == stage and manifest["outputs"]
    assert (out / "pipeline.log").exists()

    selection = json.loads((out / SELECTION).read_text())
    assert 2 <= selection["k_used"] <= 40

    summary = pd.read_csv(out / EVAL_SUMMARY)
    assert list(summary.columns) == ["policy", "task", "role", "metric", "value", "N"]
    assert set(summary.policy) == {"untrained", "terminal", "discounted", "aggregated", "online"}
    assert set(summary.role) == {"solo"}
    assert summary.value.between(0, 1).all() and (summary.N == 4).all()

    text = (out / "report" / "summary.txt").read_text()
    assert text.startswith("===== INTENTPOOL REPORT =====")
    report = json.loads((out / "report" / "summary.json").read_text())
    assert report["game"] == "guess-16" and report["k_used"] == selection["k_used"]
    assert report["variance"]["var_aggregated"] <= report["variance"]["var_raw"] + 1e-12
    assert report["split_score_bound_holds"]
    for name in ("epsilon_ablation.csv", "convergence.csv", "bias.csv", "reward_curve.csv"):
        assert (out / "report" / name).exists()


def test_rerun_skips_current_stages(full_run):
    out, _ = full_run
    results = _pipeline(out).run(["collect", "embed", "cluster"])
    assert all(r.skipped for r in results)
    forced = _pipeline(out, force=True).run(["collect"])
    assert not forced[0].skipped


def test_config_change_reruns_only_dependent_stages(tmp_path):
    _pipeline(tmp_path).run(["collect", "embed"])
    results = _pipeline(tmp_path, embedder={"d": 32}).run(["collect", "embed"])
    assert [r.skipped for r in results] == [True, False]


def test_tampered_upstream_output_is_detected(tmp_path):
    _pipeline(tmp_path).run(["collect", "embed"])
    log = tmp_path / TRAJECTORIES
    log.write_text(log.read_text() + "\n")
    with pytest.raises(ArtifactChecksumError) as excinfo:
        _pipeline(tmp_path).run(["embed"])
    assert excinfo.value.path == TRAJECTORIES


def test_missing_upstream_artifact(tmp_path):
    with pytest.raises(ArtifactError, match="missing upstream"):
        _pipeline(tmp_path).run(["embed"])


def test_unknown_stage(tmp_path):
    with pytest.raises(ValidationError):
        _pipeline(tmp_path).run(["collect", "plot"])


def test_same_seed_same_trajectories(tmp_path):
    _pipeline(tmp_path / "a").run(["collect"])
    _pipeline(tmp_path / "b").run(["collect"])
    assert (tmp_path / "a" / TRAJECTORIES).read_bytes() == (tmp_path / "b" / TRAJECTORIES).read_bytes()


def test_binary_search_collection(tmp_path):
    _pipeline(tmp_path, collect={"behavior": "binary_search", "games": 6}).run(["collect"])
    outcomes = [json.loads(line) for line in (tmp_path / OUTCOMES).read_text().splitlines()]
    assert len(outcomes) == 6
    assert all(o["solved"] and o["turns"] <= 5 for o in outcomes)
    trajectory_set = parse_trajectories(tmp_path / TRAJECTORIES)
    assert all(traj.terminal_reward == 1.0 for traj in trajectory_set)


def test_binary_search_needs_a_guessing_game(tmp_path):
    with pytest.raises(ValidationError):
        _pipeline(tmp_path, collect={"game": "bargain-3", "behavior": "binary_search"}).run(["collect"])


def test_logged_trajectories_pass_through(tmp_path):
    source = tmp_path / "logged.traj.jsonl"
    write_trajectories(TrajectorySet.from_records(guess_records(5, seed=4)), source)
    _pipeline(tmp_path / "run", paths={"trajectories": str(source)}).run(["collect"])
    copied = parse_trajectories(tmp_path / "run" / TRAJECTORIES)
    assert len(copied) == len(parse_trajectories(source))
    assert (tmp_path / "run" / OUTCOMES).read_text() == ""


@pytest.mark.slow
def test_parallel_collection_matches_a_single_worker(tmp_path):
    pytest.importorskip("ray")
    _pipeline(tmp_path / "one").run(["collect"])
    _pipeline(tmp_path / "many", collect={"num_workers": 2}).run(["collect"])
    one = parse_trajectories(tmp_path / "one" / TRAJECTORIES)
    many = parse_trajectories(tmp_path / "many" / TRAJECTORIES)
    assert [t.game_id for t in one] == [t.game_id for t in many]
