import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import guess_records, matrix, record
from intentpool.core.aggregate import AggregationScope
from intentpool.core.embed import EmbedderConfig, embed_corpus
from intentpool.core.errors import ValidationError
from intentpool.core.granularity import (
    select_k,
    split_score,
    split_score_upper_bound,
    sweep_split_scores,
    write_split_curve,
)
from intentpool.core.hac import build_dendrogram
from intentpool.core.trajectory import TrajectorySet


@pytest.fixture
def two_step_corpus():
    """Actions "a" (R=1) and "b" (R=0) pool at k=2 and separate at k=3."""
    trajectory_set = TrajectorySet.from_records(
        [record("g1", [("a", "x")], 1.0), record("g2", [("b", None)], 0.0)]
    )
    m = matrix([0.0, 100.0, 0.1])  # rows follow uids a, x, b
    return trajectory_set, build_dendrogram(m), m


def test_hand_enumerated_split(two_step_corpus):
    trajectory_set, dg, m = two_step_corpus
    assert split_score(trajectory_set, dg, m, 2) == pytest.approx(0.5)
    assert split_score_upper_bound(trajectory_set, dg, m, 2) == pytest.approx(1.0)
    curve = sweep_split_scores(trajectory_set, dg, m, normalize=False, tau=0)
    assert curve.scores == {2: pytest.approx(0.5)}
    assert curve.k_max == 2


def test_split_of_equal_rewards_scores_zero():
    trajectory_set = TrajectorySet.from_records(
        [record("g1", [("a", None)], 1.0), record("g2", [("b", None)], 1.0), record("g3", [("c", None)], 0.0)]
    )
    m = matrix([0.0, 0.1, 50.0])
    dg = build_dendrogram(m)
    # k=2 -> 3 separates a from b, both worth 1
    assert split_score(trajectory_set, dg, m, 2) == 0.0
    assert split_score_upper_bound(trajectory_set, dg, m, 2) == pytest.approx(2 / 3)


def test_split_touching_no_step_is_zero():
    trajectory_set = TrajectorySet.from_records([record("g1", [("a", None)], 1.0), record("g2", [("b", None)], 0.0)])
    # two unused rows beyond the corpus
    m = matrix([0.0, 10.0, 20.0, 20.1], uids=(0, 1, 7, 8))
    dg = build_dendrogram(m)
    assert split_score_upper_bound(trajectory_set, dg, m, 3) == 0.0
    assert sweep_split_scores(trajectory_set, dg, m, tau=0).scores[3] == 0.0


def test_k_out_of_range(two_step_corpus):
    trajectory_set, dg, m = two_step_corpus
    for k in (1, 3):
        with pytest.raises(ValidationError):
            split_score(trajectory_set, dg, m, k)


def test_select_k_rule():
    scores = {2: 0.5, 3: 0.2, 4: 0.005, 5: 0.004, 6: 0.003, 7: 0.002, 8: 0.001}
    assert select_k(scores, 0.01, 3) == 4
    assert select_k({k: 0.5 for k in range(2, 20)}, 0.01, 3) is None
    # window would run past K
    assert select_k(scores, 0.01, 6) is None
    assert select_k({}, 0.01, 3) is None
    with pytest.raises(ValidationError):
        select_k(scores, 0.0, 3)
    with pytest.raises(ValidationError):
        select_k(scores, 0.01, -1)


def test_select_k_defaults():
    scores = {k: (0.5 if k < 5 else 0.001) for k in range(2, 30)}
    assert select_k(scores) == select_k(scores, 0.01, 10) == 5


@settings(max_examples=50, deadline=None)
@given(
    st.dictionaries(st.integers(2, 30), st.floats(0, 0.05), min_size=1),
    st.floats(0.001, 0.05),
    st.floats(0.001, 0.05),
    st.integers(0, 4),
)
def test_select_k_is_monotone_in_epsilon(scores, e1, e2, tau):
    low, high = sorted((e1, e2))
    k_low, k_high = select_k(scores, low, tau), select_k(scores, high, tau)
    if k_low is not None:
        assert k_high is not None and k_high <= k_low


def _guess_corpus(n_games, seed):
    trajectory_set = TrajectorySet.from_records(guess_records(n_games, seed=seed, n_items=8))
    m = embed_corpus(EmbedderConfig(d=16), trajectory_set)
    return trajectory_set, build_dendrogram(m), m


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 1000), st.sampled_from(list(AggregationScope)))
def test_incremental_sweep_matches_full_recomputation(seed, scope):
    trajectory_set, dg, m = _guess_corpus(8, seed)
    curve = sweep_split_scores(trajectory_set, dg, m, k_max=25, gamma=0.9, scope=scope, normalize=False)
    for k, score in curve.scores.items():
        assert score == pytest.approx(split_score(trajectory_set, dg, m, k, 0.9, scope), abs=1e-9)
        assert curve.affected[k] == pytest.approx(split_score_upper_bound(trajectory_set, dg, m, k, scope), abs=1e-12)


def test_bound_chain_over_full_sweep():
    trajectory_set, dg, m = _guess_corpus(20, 4)
    curve = sweep_split_scores(trajectory_set, dg, m, k_max=10_000, epsilon=0.01, tau=3)
    assert curve.k_max == m.n - 1
    ks = sorted(curve.scores)
    assert ks == list(range(2, m.n))
    bounds = [curve.upper_bound[k] for k in ks]
    assert all(a >= b for a, b in zip(bounds, bounds[1:]))
    for k in ks:
        assert 0.0 <= curve.scores[k] <= curve.affected[k] + 1e-12 <= curve.upper_bound[k] + 1e-12 <= 1.0 + 1e-12
    assert curve.k_star == select_k(curve.scores, 0.01, 3)


def test_sweep_rejects_tiny_inputs(two_step_corpus):
    trajectory_set, _, _ = two_step_corpus
    m = matrix([0.0, 1.0])
    with pytest.raises(ValidationError):
        sweep_split_scores(trajectory_set, build_dendrogram(m), m)


def test_write_split_curve(tmp_path, two_step_corpus):
    trajectory_set, dg, m = two_step_corpus
    curve = sweep_split_scores(trajectory_set, dg, m, tau=0, epsilon=0.01)
    write_split_curve(curve, tmp_path / "split_scores.csv", tmp_path / "selection.json", k_used=2, fallback=True)
    header = (tmp_path / "split_scores.csv").read_text().splitlines()[0]
    assert header.split(",")[:4] == ["k", "split_score", "upper_bound", "below_epsilon"]
    selection = json.loads((tmp_path / "selection.json").read_text())
    assert selection == {"epsilon": 0.01, "tau": 0, "k_star": None, "k_max": 2, "k_used": 2, "fallback": True}
