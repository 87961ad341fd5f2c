"""
Projection of trajectories into intention space and pooling of discounted terminal
rewards over steps that share an intention key.

A step t of a trajectory of horizon T receives the discounted reward gamma**(T-t) * R.
Its intention key is the sequence of (action label, observation label) pairs of steps
1..t-1 together with the label of its own action; the aggregated advantage of the step is
the mean discounted reward over every step in the corpus with the same key.
"""

import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import DEFAULT_GAMMA
from .errors import UnknownUtteranceError, ValidationError
from .hac import ClusterAssignment
from .trajectory import Task, Trajectory, TrajectorySet, Utterance
from .utils import atomic_write_text

logger = logging.getLogger(__name__)


class AggregationScope(str, Enum):
    HISTORY_ACTION = "history_action"
    ACTION_ONLY = "action_only"


class AdvantageMode(str, Enum):
    TERMINAL = "terminal"  # vanilla REINFORCE: every step gets R
    DISCOUNTED = "discounted"
    AGGREGATED = "aggregated"


@dataclass(frozen=True)
class IntentionKey:
    history: Tuple[Tuple[int, int], ...]
    action: int

    def to_json(self) -> dict:
        return {"history_labels": [list(pair) for pair in self.history], "action_label": self.action}

    @classmethod
    def from_json(cls, data: dict) -> "IntentionKey":
        return cls(tuple((int(a), int(o)) for a, o in data["history_labels"]), int(data["action_label"]))

    def sort_key(self):
        return (len(self.history), self.history, self.action)


@dataclass(frozen=True)
class ProjectedTrajectory:
    labels: Tuple[Tuple[int, Optional[int]], ...]
    game_id: str
    terminal_reward: float

    @property
    def T(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class RewardEntry:
    mean: float
    count: int


@dataclass(frozen=True)
class RewardTable:
    entries: Dict[IntentionKey, RewardEntry]
    gamma: float
    k: int
    scope: AggregationScope = AggregationScope.HISTORY_ACTION

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: IntentionKey) -> bool:
        return key in self.entries

    @property
    def total_count(self) -> int:
        return sum(entry.count for entry in self.entries.values())

    @property
    def global_mean(self) -> float:
        total = self.total_count
        if total == 0:
            return 0.0
        return sum(entry.mean * entry.count for entry in self.entries.values()) / total

    def score(self, key: IntentionKey) -> float:
        """Mean for a known key; the count-weighted global mean for an unseen one."""
        entry = self.entries.get(key)
        return self.global_mean if entry is None else entry.mean

    def to_json(self) -> dict:
        ordered = sorted(self.entries.items(), key=lambda item: item[0].sort_key())
        return {
            "k": self.k,
            "gamma": self.gamma,
            "scope": self.scope.value,
            "entries": [dict(key.to_json(), mean=entry.mean, count=entry.count) for key, entry in ordered],
        }

    @classmethod
    def from_json(cls, data: dict) -> "RewardTable":
        entries = {
            IntentionKey.from_json(item): RewardEntry(float(item["mean"]), int(item["count"])) for item in data["entries"]
        }
        return cls(entries, float(data["gamma"]), int(data["k"]), AggregationScope(data.get("scope", "history_action")))


@dataclass(frozen=True)
class AdvantageSet:
    aggregated: Tuple[np.ndarray, ...]
    raw: Tuple[np.ndarray, ...]
    keys: Tuple[Tuple[IntentionKey, ...], ...]
    terminal: Tuple[float, ...]

    def values(self, mode: AdvantageMode) -> Tuple[np.ndarray, ...]:
        mode = AdvantageMode(mode)
        if mode == AdvantageMode.AGGREGATED:
            return self.aggregated
        if mode == AdvantageMode.DISCOUNTED:
            return self.raw
        return tuple(np.full(len(raw), r, dtype=np.float64) for raw, r in zip(self.raw, self.terminal))

    def flat_raw(self) -> np.ndarray:
        return np.concatenate(self.raw) if self.raw else np.zeros(0)

    def flat_aggregated(self) -> np.ndarray:
        return np.concatenate(self.aggregated) if self.aggregated else np.zeros(0)

    def flat_keys(self) -> List[IntentionKey]:
        return [key for keys in self.keys for key in keys]


def _check_gamma(gamma: float) -> None:
    if not 0 < gamma <= 1:
        raise ValidationError(f"gamma must lie in (0, 1], got {gamma}")


def discount_rewards(traj: Trajectory, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    _check_gamma(gamma)
    T = traj.horizon
    return np.array([gamma ** (T - t) * traj.terminal_reward for t in range(1, T + 1)], dtype=np.float64)


def project_with(traj: Trajectory, label_of: Callable[[Utterance], int]) -> ProjectedTrajectory:
    labels = []
    for step in traj.steps:
        observation = None if step.observation is None else label_of(step.observation)
        labels.append((label_of(step.action), observation))
    return ProjectedTrajectory(tuple(labels), traj.game_id, traj.terminal_reward)


def project_trajectory(traj: Trajectory, ca: ClusterAssignment) -> ProjectedTrajectory:
    def label_of(utterance: Utterance) -> int:
        try:
            return ca.labels[utterance.uid]
        except KeyError:
            raise UnknownUtteranceError(
                f"{traj.game_id}: utterance {utterance.uid} ({utterance.text!r}) has no cluster label"
            ) from None

    return project_with(traj, label_of)


def intention_keys(
    projected: ProjectedTrajectory, scope: AggregationScope = AggregationScope.HISTORY_ACTION
) -> List[IntentionKey]:
    keys = []
    for t, (action, _) in enumerate(projected.labels):
        if scope == AggregationScope.ACTION_ONLY:
            keys.append(IntentionKey((), action))
        else:
            keys.append(IntentionKey(tuple(projected.labels[:t]), action))
    return keys


def table_from_projections(
    projections: Iterable[ProjectedTrajectory],
    gamma: float = DEFAULT_GAMMA,
    k: int = 0,
    scope: AggregationScope = AggregationScope.HISTORY_ACTION,
) -> RewardTable:
    _check_gamma(gamma)
    sums: Dict[IntentionKey, float] = defaultdict(float)
    counts: Dict[IntentionKey, int] = defaultdict(int)
    for projected in projections:
        T = projected.T
        for t, key in enumerate(intention_keys(projected, scope), start=1):
            sums[key] += gamma ** (T - t) * projected.terminal_reward
            counts[key] += 1
    entries = {key: RewardEntry(sums[key] / counts[key], counts[key]) for key in sums}
    return RewardTable(entries, gamma, k, AggregationScope(scope))


def build_reward_table(
    trajectory_set: TrajectorySet,
    ca: ClusterAssignment,
    gamma: float = DEFAULT_GAMMA,
    scope: AggregationScope = AggregationScope.HISTORY_ACTION,
) -> RewardTable:
    projections = [project_trajectory(traj, ca) for traj in trajectory_set]
    table = table_from_projections(projections, gamma, ca.k, scope)
    logger.debug(f"Reward table at k={ca.k}: {len(table)} keys over {table.total_count} steps")
    return table


def assign_advantages(
    trajectory_set: TrajectorySet,
    ca: ClusterAssignment,
    table: RewardTable,
    allow_unseen: bool = False,
) -> AdvantageSet:
    """
    Per-step aggregated advantages from `table` alongside the raw discounted rewards.

    Offline the table is built from the same set, so every key is present; with
    `allow_unseen` a missing key scores the table's global mean instead of failing.
    """
    aggregated, raw, all_keys = [], [], []
    for traj in trajectory_set:
        keys = intention_keys(project_trajectory(traj, ca), table.scope)
        values = np.empty(len(keys), dtype=np.float64)
        for i, key in enumerate(keys):
            entry = table.entries.get(key)
            if entry is None:
                if not allow_unseen:
                    raise ValidationError(f"{traj.game_id}: step {i + 1} has no reward-table entry")
                values[i] = table.global_mean
            else:
                values[i] = entry.mean
        aggregated.append(values)
        raw.append(discount_rewards(traj, table.gamma))
        all_keys.append(tuple(keys))
    terminal = tuple(traj.terminal_reward for traj in trajectory_set)
    return AdvantageSet(tuple(aggregated), tuple(raw), tuple(all_keys), terminal)


def normalize_rewards(trajectory_set: TrajectorySet) -> TrajectorySet:
    """Min-max normalize terminal rewards into [0, 1] separately for each task."""
    by_task: Dict[Task, List[float]] = defaultdict(list)
    for traj in trajectory_set:
        by_task[traj.task].append(traj.terminal_reward)
    bounds = {task: (min(values), max(values)) for task, values in by_task.items()}
    rewards = []
    for traj in trajectory_set:
        low, high = bounds[traj.task]
        if high > low:
            rewards.append((traj.terminal_reward - low) / (high - low))
        else:
            rewards.append(min(max(traj.terminal_reward, 0.0), 1.0))
    return trajectory_set.map_rewards(rewards)


def save_reward_table(table: RewardTable, path: Union[str, Path]) -> None:
    atomic_write_text(path, json.dumps(table.to_json()))


def load_reward_table(path: Union[str, Path]) -> RewardTable:
    with open(path, "r", encoding="utf-8") as f:
        return RewardTable.from_json(json.load(f))
