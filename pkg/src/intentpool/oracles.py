"""
Brute-force reference implementations for tests. Each one recomputes its quantity straight
from the definition and refuses instances above its size cap.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Tuple, Union

import numpy as np

from intentpool.core.aggregate import AggregationScope, IntentionKey, RewardEntry, RewardTable
from intentpool.core.embed import EmbeddingMatrix
from intentpool.core.errors import ValidationError
from intentpool.core.hac import ClusterAssignment, Dendrogram, Merge
from intentpool.core.trajectory import TrajectorySet

HAC_CAP = 500
TABLE_CAP = 100_000
MDP_CAP = 10_000
TIE_TOLERANCE = 1e-12
FIXED_POINT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class OracleResult:
    value: Any
    method: str
    cap: int


def _cap(size: int, cap: int, what: str) -> None:
    if size > cap:
        raise ValidationError(f"oracle {what} is capped at {cap}, got {size}")


def _point_distances(X: np.ndarray) -> np.ndarray:
    n = X.shape[0]
    D = np.zeros((n, n))
    for i in range(n):
        D[i] = np.sqrt(np.sum((X - X[i]) ** 2, axis=1))
    return D


def naive_average_linkage(m: EmbeddingMatrix) -> OracleResult:
    """Merge the closest pair of clusters, recomputing every average linkage from the points."""
    n = m.n
    _cap(n, HAC_CAP, "naive_average_linkage")
    if n < 2:
        raise ValidationError(f"HAC needs at least 2 points, got {n}")
    D = _point_distances(m.data.astype(np.float64))
    clusters: List[Tuple[int, List[int]]] = [(i, [i]) for i in range(n)]
    merges = []
    for step in range(n - 1):
        membership = np.zeros((len(clusters), n))
        for c, (_, members) in enumerate(clusters):
            membership[c, members] = 1.0
        sizes = membership.sum(axis=1)
        linkage = (membership @ D @ membership.T) / np.outer(sizes, sizes)
        np.fill_diagonal(linkage, np.inf)
        dmin = linkage.min()
        threshold = dmin + TIE_TOLERANCE * max(1.0, abs(dmin))
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                if linkage[i, j] <= threshold:
                    pair = tuple(sorted((clusters[i][0], clusters[j][0])))
                    if best is None or pair < best[0]:
                        best = (pair, i, j)
        (left, right), i, j = best
        merges.append(Merge(left, right, float(linkage[i, j]), n + step))
        merged = (n + step, clusters[i][1] + clusters[j][1])
        clusters = [c for idx, c in enumerate(clusters) if idx not in (i, j)] + [merged]
    return OracleResult(Dendrogram(n, tuple(merges)), "naive_average_linkage", HAC_CAP)


def _labels_by_row(m: EmbeddingMatrix, ca: ClusterAssignment) -> List[int]:
    return [ca.labels[uid] for uid in m.uids]


def direct_silhouette(m: EmbeddingMatrix, ca: ClusterAssignment) -> OracleResult:
    X = m.data.astype(np.float64)
    labels = _labels_by_row(m, ca)
    n = len(labels)
    scores = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            scores.append(0.0)
            continue
        a = sum(math.dist(X[i], X[j]) for j in own) / len(own)
        b = math.inf
        for c in set(labels) - {labels[i]}:
            members = [j for j in range(n) if labels[j] == c]
            b = min(b, sum(math.dist(X[i], X[j]) for j in members) / len(members))
        scores.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return OracleResult(sum(scores) / n, "direct_silhouette", HAC_CAP)


def _centroid_table(X: np.ndarray, labels: List[int]) -> Dict[int, np.ndarray]:
    out = {}
    for c in sorted(set(labels)):
        members = [X[j] for j in range(len(labels)) if labels[j] == c]
        out[c] = sum(members) / len(members)
    return out


def direct_calinski_harabasz(m: EmbeddingMatrix, ca: ClusterAssignment) -> OracleResult:
    X = m.data.astype(np.float64)
    labels = _labels_by_row(m, ca)
    n, k = len(labels), len(set(labels))
    centroids = _centroid_table(X, labels)
    grand = X.sum(axis=0) / n
    between = sum(labels.count(c) * float(np.dot(centroids[c] - grand, centroids[c] - grand)) for c in centroids)
    within = sum(float(np.dot(X[j] - centroids[labels[j]], X[j] - centroids[labels[j]])) for j in range(n))
    value = math.inf if within == 0 else between / within * (n - k) / (k - 1)
    return OracleResult(value, "direct_calinski_harabasz", HAC_CAP)


def direct_davies_bouldin(m: EmbeddingMatrix, ca: ClusterAssignment) -> OracleResult:
    X = m.data.astype(np.float64)
    labels = _labels_by_row(m, ca)
    centroids = _centroid_table(X, labels)
    spread = {}
    for c, centroid in centroids.items():
        members = [j for j in range(len(labels)) if labels[j] == c]
        spread[c] = sum(math.dist(X[j], centroid) for j in members) / len(members)
    worst = []
    for c in centroids:
        worst.append(
            max((spread[c] + spread[o]) / math.dist(centroids[c], centroids[o]) for o in centroids if o != c)
        )
    return OracleResult(sum(worst) / len(worst), "direct_davies_bouldin", HAC_CAP)


def exhaustive_reward_table(
    trajectory_set: TrajectorySet,
    labels: Union[ClusterAssignment, Mapping[int, int]],
    gamma: float,
    scope: AggregationScope = AggregationScope.HISTORY_ACTION,
) -> OracleResult:
    """Materialize every (history, action) key with its discounted reward, then group by key."""
    label_of = labels.labels if isinstance(labels, ClusterAssignment) else labels
    k = labels.k if isinstance(labels, ClusterAssignment) else len(set(label_of.values()))
    _cap(trajectory_set.n_steps, TABLE_CAP, "exhaustive_reward_table")
    pairs = []
    for traj in trajectory_set:
        T = len(traj.steps)
        history = []
        for step in traj.steps:
            action = label_of[step.action.uid]
            observation = label_of[step.observation.uid] if step.observation is not None else -1
            key_history = () if AggregationScope(scope) == AggregationScope.ACTION_ONLY else tuple(history)
            pairs.append((IntentionKey(key_history, action), gamma ** (T - step.t) * traj.terminal_reward))
            history.append((action, observation))
    grouped: Dict[IntentionKey, List[float]] = {}
    for key, reward in pairs:
        grouped.setdefault(key, []).append(reward)
    entries = {key: RewardEntry(sum(values) / len(values), len(values)) for key, values in grouped.items()}
    return OracleResult(RewardTable(entries, gamma, k, AggregationScope(scope)), "exhaustive_reward_table", TABLE_CAP)


def naive_policy_gradient(p, batch) -> OracleResult:
    """Per-parameter double loop over trajectories and steps of grad log pi * advantage."""
    A = len(p.actions)
    grad = np.zeros(len(p.contexts) * A)
    for steps, advantages in zip(batch.steps, batch.advantages):
        for step, advantage in zip(steps, advantages):
            i = p.contexts.index(step.context)
            a = p.actions.index(step.action)
            row = p.logits[i].copy()
            if step.legal is not None:
                for b, action in enumerate(p.actions):
                    if action not in step.legal:
                        row[b] = -np.inf
            e = np.exp(row - np.max(row))
            pi = e / e.sum()
            for b in range(A):
                grad[i * A + b] += ((1.0 if b == a else 0.0) - pi[b]) * advantage
    return OracleResult(grad / len(batch.steps), "naive_policy_gradient", TABLE_CAP)


def exact_policy_evaluation(spec, p) -> OracleResult:
    """Q^pi by fixed-point iteration of the Bellman operator to a sup-norm change of 1e-12."""
    R = np.asarray(spec.rewards, dtype=np.float64)
    P = np.asarray(spec.transitions, dtype=np.float64)
    S, A = R.shape
    _cap(S * A, MDP_CAP, "exact_policy_evaluation")
    for s in range(S):
        for a in range(A):
            if np.any(P[s, a] < 0) or abs(P[s, a].sum() - 1.0) > 1e-12:
                raise ValidationError(f"transition row ({s}, {a}) is not a probability distribution")
    pi = np.zeros((S, A))
    for s in range(S):
        row = p.logits[p.contexts.index(((s, -1),))]
        e = np.exp(row - np.max(row))
        pi[s] = e / e.sum()
    Q = np.zeros((S, A))
    while True:
        V = np.sum(pi * Q, axis=1)
        Q_next = R + spec.gamma * P @ V
        residual = float(np.max(np.abs(Q_next - Q)))
        Q = Q_next
        if residual <= FIXED_POINT_TOLERANCE:
            break
    return OracleResult(Q, "exact_policy_evaluation", MDP_CAP)
