"""
Reward-oriented granularity selection.

For each cut k of the dendrogram, SplitScore(k) is the mean absolute change of the
per-step pooled reward when the cut is refined to k+1. Cuts are nested, so refining
k -> k+1 splits exactly one cluster; only steps whose key mentions that cluster can change,
which the sweep exploits to update the per-step values incrementally.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .aggregate import (
    AggregationScope,
    assign_advantages,
    build_reward_table,
    discount_rewards,
    intention_keys,
    normalize_rewards,
    project_trajectory,
)
from .constants import DEFAULT_EPSILON, DEFAULT_GAMMA, DEFAULT_K_MAX, DEFAULT_TAU
from .embed import EmbeddingMatrix
from .errors import ValidationError
from .hac import Dendrogram, cut_dendrogram
from .trajectory import TrajectorySet
from .utils import atomic_write_text

logger = logging.getLogger(__name__)


@dataclass
class SplitScoreCurve:
    scores: Dict[int, float]
    affected: Dict[int, float]
    upper_bound: Dict[int, float]
    epsilon: float
    tau: int
    k_star: Optional[int]
    k_max: int

    def to_frame(self) -> pd.DataFrame:
        ks = sorted(self.scores)
        return pd.DataFrame(
            {
                "k": ks,
                "split_score": [self.scores[k] for k in ks],
                "upper_bound": [self.upper_bound[k] for k in ks],
                "below_epsilon": [self.scores[k] < self.epsilon for k in ks],
                "affected_fraction": [self.affected[k] for k in ks],
            }
        )

    def selection(self) -> dict:
        return {"epsilon": self.epsilon, "tau": self.tau, "k_star": self.k_star, "k_max": self.k_max}


def _check_k(dg: Dendrogram, k: int) -> None:
    if not 2 <= k < dg.n:
        raise ValidationError(f"k must lie in [2, {dg.n - 1}], got {k}")


def _step_values(trajectory_set: TrajectorySet, ca, gamma: float, scope: AggregationScope) -> np.ndarray:
    table = build_reward_table(trajectory_set, ca, gamma, scope)
    return assign_advantages(trajectory_set, ca, table).flat_aggregated()


def split_score(
    trajectory_set: TrajectorySet,
    dg: Dendrogram,
    m: EmbeddingMatrix,
    k: int,
    gamma: float = DEFAULT_GAMMA,
    scope: AggregationScope = AggregationScope.HISTORY_ACTION,
) -> float:
    """delta_k / |D|, materializing both reward tables from scratch."""
    _check_k(dg, k)
    if trajectory_set.n_steps == 0:
        raise ValidationError("split score needs at least one step")
    coarse = _step_values(trajectory_set, cut_dendrogram(dg, k, m), gamma, scope)
    fine = _step_values(trajectory_set, cut_dendrogram(dg, k + 1, m), gamma, scope)
    return float(np.sum(np.abs(fine - coarse)) / trajectory_set.n_steps)


def split_score_upper_bound(
    trajectory_set: TrajectorySet,
    dg: Dendrogram,
    m: EmbeddingMatrix,
    k: int,
    scope: AggregationScope = AggregationScope.HISTORY_ACTION,
) -> float:
    """n_k / |D|: the fraction of steps whose pooling group is split when refining k -> k+1."""
    _check_k(dg, k)
    if trajectory_set.n_steps == 0:
        raise ValidationError("split score needs at least one step")
    coarse_ca, fine_ca = cut_dendrogram(dg, k, m), cut_dendrogram(dg, k + 1, m)
    coarse_keys, fine_keys = [], []
    for traj in trajectory_set:
        coarse_keys.extend(intention_keys(project_trajectory(traj, coarse_ca), scope))
        fine_keys.extend(intention_keys(project_trajectory(traj, fine_ca), scope))
    children: Dict = {}
    for coarse, fine in zip(coarse_keys, fine_keys):
        children.setdefault(coarse, set()).add(fine)
    affected = sum(1 for coarse in coarse_keys if len(children[coarse]) > 1)
    return affected / len(coarse_keys)


def select_k(scores: Mapping[int, float], epsilon: float = DEFAULT_EPSILON, tau: int = DEFAULT_TAU) -> Optional[int]:
    """Smallest k with scores[j] < epsilon for every j in [k, k+tau]; None if no k qualifies."""
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if tau < 0:
        raise ValidationError(f"tau must be non-negative, got {tau}")
    if not scores:
        return None
    K = max(scores)
    for k in sorted(scores):
        if k < 2 or k > K - tau:
            continue
        if all(j in scores and scores[j] < epsilon for j in range(k, k + tau + 1)):
            return k
    return None


class _StepIndex:
    """Per-step matrix rows that make up each intention key, plus the inverse leaf -> steps map."""

    def __init__(self, trajectory_set: TrajectorySet, m: EmbeddingMatrix, scope: AggregationScope):
        rows_per_step: List[List[int]] = []
        for traj in trajectory_set:
            pairs = []
            for step in traj.steps:
                action = m.uid_index[step.action.uid]
                if scope == AggregationScope.ACTION_ONLY:
                    rows_per_step.append([action])
                else:
                    rows_per_step.append(pairs + [action])
                obs = -1 if step.observation is None else m.uid_index[step.observation.uid]
                pairs = pairs + [action, obs]
        width = max(len(r) for r in rows_per_step)
        # -2 pads beyond the key, -1 marks a missing observation
        self.rows = np.full((len(rows_per_step), width), -2, dtype=np.int64)
        for i, r in enumerate(rows_per_step):
            self.rows[i, : len(r)] = r
        step_ids, positions = np.nonzero(self.rows >= 0)
        leaves = self.rows[step_ids, positions]
        order = np.argsort(leaves, kind="stable")
        self.leaf_steps = step_ids[order]
        self.leaf_offsets = np.searchsorted(leaves[order], np.arange(m.n + 1))

    def steps_touching(self, leaves: np.ndarray) -> np.ndarray:
        chunks = [self.leaf_steps[self.leaf_offsets[leaf] : self.leaf_offsets[leaf + 1]] for leaf in leaves]
        if not chunks:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(chunks))

    def keys(self, leaf_labels: np.ndarray, steps: Optional[np.ndarray] = None) -> np.ndarray:
        rows = self.rows if steps is None else self.rows[steps]
        extended = np.concatenate([leaf_labels, [-1, -2]])  # index -2 -> -1, index -1 -> -2
        return extended[rows]


def _group(keys: np.ndarray) -> np.ndarray:
    if keys.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    return inverse.reshape(-1)


def _pooled(groups: np.ndarray, rewards: np.ndarray) -> np.ndarray:
    sums = np.bincount(groups, weights=rewards)
    counts = np.bincount(groups)
    return (sums / counts)[groups]


def _subtree_leaves(dg: Dendrogram, node: int) -> np.ndarray:
    n = dg.n
    stack, leaves = [node], []
    while stack:
        current = stack.pop()
        if current < n:
            leaves.append(current)
        else:
            merge = dg.merges[current - n]
            stack.extend((merge.left, merge.right))
    return np.array(sorted(leaves), dtype=np.int64)


def sweep_split_scores(
    trajectory_set: TrajectorySet,
    dg: Dendrogram,
    m: EmbeddingMatrix,
    k_max: int = DEFAULT_K_MAX,
    gamma: float = DEFAULT_GAMMA,
    epsilon: float = DEFAULT_EPSILON,
    tau: int = DEFAULT_TAU,
    scope: AggregationScope = AggregationScope.HISTORY_ACTION,
    normalize: bool = True,
) -> SplitScoreCurve:
    """
    SplitScore(k) for k in [2, K] with K = min(k_max, n - 1), the running-maximum upper bound
    and the selected k*.

    Rewards are min-max normalized per task first unless `normalize` is False. Leaf labels
    are dendrogram node ids, so refining k -> k+1 only relabels the leaves of the split node.
    """
    if dg.n != m.n:
        raise ValidationError(f"Matrix has {m.n} rows, dendrogram {dg.n} leaves")
    if dg.n < 3:
        raise ValidationError(f"sweep needs at least 3 leaves, got {dg.n}")
    if trajectory_set.n_steps == 0:
        raise ValidationError("sweep needs at least one step")
    source = normalize_rewards(trajectory_set) if normalize else trajectory_set
    K = min(k_max, dg.n - 1)
    if K < 2:
        raise ValidationError(f"k_max must be >= 2, got {k_max}")

    index = _StepIndex(source, m, AggregationScope(scope))
    rewards = np.concatenate([discount_rewards(traj, gamma) for traj in source])
    n_steps = rewards.shape[0]

    n = dg.n
    root = 2 * n - 2
    labels = np.full(n, root, dtype=np.int64)

    def refine(k_from: int) -> Tuple[np.ndarray, int, int]:
        """Undo the merge that separates cut k_from from k_from + 1."""
        merge = dg.merges[n - 1 - k_from]
        labels[_subtree_leaves(dg, merge.left)] = merge.left
        labels[_subtree_leaves(dg, merge.right)] = merge.right
        return _subtree_leaves(dg, merge.node_id), merge.left, merge.right

    refine(1)  # labels now describe cut k = 2
    values = _pooled(_group(index.keys(labels)), rewards)

    scores: Dict[int, float] = {}
    affected: Dict[int, float] = {}
    for k in tqdm(range(2, K + 1), desc="SplitScore sweep", disable=None):
        coarse_labels = labels.copy()
        split_leaves, _, _ = refine(k)
        steps = index.steps_touching(split_leaves)
        if steps.size == 0:
            scores[k] = 0.0
            affected[k] = 0.0
            continue
        coarse_groups = _group(index.keys(coarse_labels, steps))
        fine_groups = _group(index.keys(labels, steps))
        new_values = _pooled(fine_groups, rewards[steps])
        scores[k] = float(np.sum(np.abs(new_values - values[steps])) / n_steps)
        pairs = np.unique(np.stack([coarse_groups, fine_groups], axis=1), axis=0)
        splits = np.bincount(pairs[:, 0], minlength=int(coarse_groups.max()) + 1)
        affected[k] = float(np.count_nonzero(splits[coarse_groups] > 1) / n_steps)
        values[steps] = new_values

    upper_bound: Dict[int, float] = {}
    running = 0.0
    for k in sorted(affected, reverse=True):
        running = max(running, affected[k])
        upper_bound[k] = running

    k_star = select_k(scores, epsilon, tau)
    logger.info(f"SplitScore sweep over k in [2, {K}]: k* = {k_star} (epsilon={epsilon}, tau={tau})")
    return SplitScoreCurve(scores, affected, upper_bound, epsilon, tau, k_star, K)


def write_split_curve(
    curve: SplitScoreCurve, csv_path: Union[str, Path], selection_path: Union[str, Path], **extra
) -> None:
    """Write the sweep as CSV and the selection record as JSON; `extra` entries are added to the record."""
    curve.to_frame().to_csv(csv_path, index=False)
    atomic_write_text(selection_path, json.dumps({**curve.selection(), **extra}, indent=2) + "\n")
