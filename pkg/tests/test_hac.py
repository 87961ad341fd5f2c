import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import matrix
from intentpool.core.errors import ValidationError
from intentpool.core.hac import (
    build_dendrogram,
    cut_dendrogram,
    cut_labels,
    load_assignment,
    load_dendrogram,
    nearest_centroid_assign,
    save_assignment,
    save_dendrogram,
)
from intentpool.oracles import naive_average_linkage


def _partition(ca):
    groups = {}
    for uid, label in ca.labels.items():
        groups.setdefault(label, set()).add(uid)
    return {frozenset(g) for g in groups.values()}


def test_three_points_on_a_line():
    dg = build_dendrogram(matrix([0.0, 0.1, 1.0]))
    assert dg.pairs() == [(0, 1), (2, 3)]
    np.testing.assert_allclose(dg.heights, [0.1, 0.95], rtol=1e-6)
    ca = cut_dendrogram(dg, 2, matrix([0.0, 0.1, 1.0]))
    assert ca.labels == {0: 0, 1: 0, 2: 1}
    assert ca.sizes == (2, 1)


def test_identical_points_merge_at_zero():
    dg = build_dendrogram(matrix(np.ones((6, 3))))
    assert np.all(dg.heights == 0.0)
    assert dg.pairs()[0] == (0, 1)


def test_needs_two_points():
    with pytest.raises(ValidationError):
        build_dendrogram(matrix([[1.0, 2.0]]))


@pytest.mark.slow
def test_matches_naive_linkage_on_random_points():
    m = matrix(np.random.default_rng(7).normal(size=(200, 5)))
    fast = build_dendrogram(m)
    naive = naive_average_linkage(m).value
    assert fast.pairs() == naive.pairs()
    np.testing.assert_allclose(fast.heights, naive.heights, rtol=1e-9, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=2, max_size=14))
def test_matches_naive_linkage_with_duplicates(points):
    # small integer grids force exact ties and duplicate points
    m = matrix([[p, (3 * p) % 5] for p in points])
    fast = build_dendrogram(m)
    naive = naive_average_linkage(m).value
    assert fast.pairs() == naive.pairs()
    np.testing.assert_allclose(fast.heights, naive.heights, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10_000))
def test_heights_nondecreasing_and_cuts_nested(n, seed):
    m = matrix(np.random.default_rng(seed).normal(size=(n, 3)))
    dg = build_dendrogram(m)
    assert np.all(np.diff(dg.heights) >= 0)
    for k in range(1, n):
        coarse = _partition(cut_dendrogram(dg, k, m))
        fine = _partition(cut_dendrogram(dg, k + 1, m))
        assert len(coarse) == k and len(fine) == k + 1
        untouched = coarse & fine
        assert len(untouched) == k - 1
        (split,) = coarse - untouched
        a, b = fine - untouched
        assert a | b == split


def test_cut_extremes_and_range(line_matrix):
    dg = build_dendrogram(line_matrix)
    assert cut_dendrogram(dg, 4, line_matrix).labels == {0: 0, 1: 1, 2: 2, 3: 3}
    assert set(cut_dendrogram(dg, 1, line_matrix).labels.values()) == {0}
    for k in (0, 5):
        with pytest.raises(ValidationError):
            cut_labels(dg, k)


def test_centroids_are_member_means():
    rng = np.random.default_rng(3)
    m = matrix(rng.normal(size=(30, 4)))
    ca = cut_dendrogram(build_dendrogram(m), 5, m)
    labels = ca.row_labels()
    for c in range(5):
        np.testing.assert_allclose(ca.centroids[c], m.data[labels == c].astype(np.float64).mean(axis=0), atol=1e-6)
        assert ca.sizes[c] == int(np.sum(labels == c)) >= 1


def test_labels_follow_minimum_uid():
    m = matrix([10.0, 0.0, 10.1, 0.1], uids=(7, 3, 5, 9))
    ca = cut_dendrogram(build_dendrogram(m), 2, m)
    assert ca.labels == {3: 0, 9: 0, 5: 1, 7: 1}


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 25), st.integers(0, 10_000), st.randoms(use_true_random=False))
def test_partition_is_permutation_equivariant(n, seed, rnd):
    X = np.random.default_rng(seed).normal(size=(n, 2))
    order = list(range(n))
    rnd.shuffle(order)
    m = matrix(X)
    permuted = matrix(X[order], uids=order)
    for k in (2, n // 2 + 1):
        assert _partition(cut_dendrogram(build_dendrogram(m), k, m)) == _partition(
            cut_dendrogram(build_dendrogram(permuted), k, permuted)
        )


def test_nearest_centroid(line_matrix):
    ca = cut_dendrogram(build_dendrogram(line_matrix), 2, line_matrix)
    assert nearest_centroid_assign(ca, ca.centroids[1]) == 1
    # 5.5 is equidistant from centroids 0.5 and 10.5
    assert nearest_centroid_assign(ca, np.array([5.5])) == 0
    with pytest.raises(ValidationError):
        nearest_centroid_assign(ca, np.array([1.0, 2.0]))


def test_nearest_centroid_matches_exhaustive_scan():
    rng = np.random.default_rng(11)
    m = matrix(rng.normal(size=(40, 3)))
    ca = cut_dendrogram(build_dendrogram(m), 6, m)
    for v in rng.normal(size=(100, 3)):
        distances = [float(np.sum((c - v) ** 2)) for c in ca.centroids]
        assert nearest_centroid_assign(ca, v) == distances.index(min(distances))


def test_dendrogram_and_assignment_files(tmp_path, line_matrix):
    dg = build_dendrogram(line_matrix)
    save_dendrogram(dg, tmp_path / "dendrogram.json")
    assert load_dendrogram(tmp_path / "dendrogram.json") == dg
    ca = cut_dendrogram(dg, 2, line_matrix)
    save_assignment(ca, tmp_path / "assignment.json")
    assert (tmp_path / "assignment.centroids.f64").exists()
    assert load_assignment(tmp_path / "assignment.json") == ca
