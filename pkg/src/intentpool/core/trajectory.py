"""
Trajectories, steps and utterances, plus the line-delimited `.traj.jsonl` log format.

A log holds one JSON record per line:

    {"game_id": "g-0001", "task": "guess", "player": "solo", "reward": 1.0,
     "steps": [{"t": 1, "action": "Is it alive?", "observation": "No."}, ...]}

The final step may omit its observation. Utterances are deduplicated on the exact
(trimmed text, speaker) pair and numbered in order of first appearance.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

from .errors import TrajectoryParseError, UnknownUtteranceError

logger = logging.getLogger(__name__)


class Speaker(str, Enum):
    AGENT = "agent"
    ENVIRONMENT = "environment"


class Task(str, Enum):
    GUESS = "guess"
    BARGAIN = "bargain"
    NEGOTIATE = "negotiate"
    CUSTOM = "custom"


class Player(str, Enum):
    SOLO = "solo"
    ALICE = "alice"
    BOB = "bob"


@dataclass(frozen=True)
class Utterance:
    text: str
    speaker: Speaker
    uid: int


@dataclass(frozen=True)
class Step:
    t: int
    action: Utterance
    observation: Optional[Utterance] = None

    def utterances(self) -> Tuple[Utterance, ...]:
        if self.observation is None:
            return (self.action,)
        return (self.action, self.observation)


@dataclass(frozen=True)
class Trajectory:
    game_id: str
    task: Task
    player: Player
    steps: Tuple[Step, ...]
    terminal_reward: float

    @property
    def horizon(self) -> int:
        return len(self.steps)

    def with_reward(self, reward: float) -> "Trajectory":
        return Trajectory(self.game_id, self.task, self.player, self.steps, float(reward))

    def to_record(self) -> dict:
        steps = []
        for step in self.steps:
            entry = {"t": step.t, "action": step.action.text}
            if step.observation is not None:
                entry["observation"] = step.observation.text
            steps.append(entry)
        return {
            "game_id": self.game_id,
            "task": self.task.value,
            "player": self.player.value,
            "reward": self.terminal_reward,
            "steps": steps,
        }


class CorpusBuilder:
    """Interns utterances by (trimmed text, speaker), assigning uids by first appearance."""

    def __init__(self) -> None:
        self._index: Dict[Tuple[str, Speaker], Utterance] = {}
        self._corpus: List[Utterance] = []

    def intern(self, text: str, speaker: Speaker) -> Utterance:
        key = (text.strip(), Speaker(speaker))
        utterance = self._index.get(key)
        if utterance is None:
            utterance = Utterance(text=key[0], speaker=key[1], uid=len(self._corpus))
            self._index[key] = utterance
            self._corpus.append(utterance)
        return utterance

    @property
    def corpus(self) -> Tuple[Utterance, ...]:
        return tuple(self._corpus)


@dataclass(frozen=True)
class TrajectorySet:
    trajectories: Tuple[Trajectory, ...]
    corpus: Tuple[Utterance, ...]
    _by_uid: Dict[int, Utterance] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_uid", {u.uid: u for u in self.corpus})

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    @property
    def n_steps(self) -> int:
        """Size of the (history, action) pair collection."""
        return sum(traj.horizon for traj in self.trajectories)

    def utterance(self, uid: int) -> Utterance:
        try:
            return self._by_uid[uid]
        except KeyError:
            raise UnknownUtteranceError(f"uid {uid} is not part of this corpus") from None

    def texts(self) -> List[str]:
        return [u.text for u in self.corpus]

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "TrajectorySet":
        """Build a set from log-format records without validation."""
        builder = CorpusBuilder()
        trajectories = [_trajectory_from_record(record, builder) for record in records]
        return cls(tuple(trajectories), builder.corpus)

    def map_rewards(self, rewards: Iterable[float]) -> "TrajectorySet":
        trajectories = tuple(traj.with_reward(r) for traj, r in zip(self.trajectories, rewards, strict=True))
        return TrajectorySet(trajectories, self.corpus)


def _trajectory_from_record(record: dict, builder: CorpusBuilder) -> Trajectory:
    steps = []
    for entry in record["steps"]:
        action = builder.intern(entry["action"], Speaker.AGENT)
        observation = None
        if entry.get("observation") is not None:
            observation = builder.intern(entry["observation"], Speaker.ENVIRONMENT)
        steps.append(Step(t=int(entry["t"]), action=action, observation=observation))
    return Trajectory(
        game_id=str(record["game_id"]),
        task=Task(record["task"]),
        player=Player(record["player"]),
        steps=tuple(steps),
        terminal_reward=float(record["reward"]),
    )


def validate_trajectory(traj: Trajectory) -> List[str]:
    """Return a description of every invariant the trajectory violates (empty when valid)."""
    violations = []
    if traj.horizon < 1:
        violations.append("horizon must be a positive integer (no steps recorded)")
    indices = [step.t for step in traj.steps]
    if len(set(indices)) != len(indices):
        violations.append(f"duplicate step indices in {indices}")
    elif indices != list(range(1, len(indices) + 1)):
        violations.append(f"step indices must be exactly 1..{len(indices)} without gaps, got {indices}")
    for position, step in enumerate(traj.steps):
        if step.action.speaker != Speaker.AGENT:
            violations.append(f"step {step.t}: action speaker must be agent")
        if not step.action.text.strip():
            violations.append(f"step {step.t}: action text is empty")
        if step.observation is None:
            if position != len(traj.steps) - 1:
                violations.append(f"step {step.t}: only the final step may omit its observation")
        else:
            if step.observation.speaker != Speaker.ENVIRONMENT:
                violations.append(f"step {step.t}: observation speaker must be environment")
            if not step.observation.text.strip():
                violations.append(f"step {step.t}: observation text is empty")
    if not math.isfinite(traj.terminal_reward):
        violations.append(f"terminal reward must be finite, got {traj.terminal_reward}")
    elif traj.task == Task.GUESS and traj.terminal_reward not in (0.0, 1.0):
        violations.append(f"guess-task reward must be binary (0 or 1), got {traj.terminal_reward}")
    return violations


def validate_set(trajectory_set: TrajectorySet) -> List[str]:
    violations = []
    seen = set()
    for utterance in trajectory_set.corpus:
        key = (utterance.text, utterance.speaker)
        if key in seen:
            violations.append(f"corpus holds duplicate utterance {utterance.text!r} ({utterance.speaker.value})")
        seen.add(key)
    uids = [u.uid for u in trajectory_set.corpus]
    if len(set(uids)) != len(uids):
        violations.append("corpus uids are not unique")
    for traj in trajectory_set:
        for problem in validate_trajectory(traj):
            violations.append(f"{traj.game_id}/{traj.player.value}: {problem}")
        for step in traj.steps:
            for utterance in step.utterances():
                try:
                    resolved = trajectory_set.utterance(utterance.uid)
                except UnknownUtteranceError:
                    violations.append(f"{traj.game_id}: uid {utterance.uid} missing from corpus")
                    continue
                if resolved != utterance:
                    violations.append(f"{traj.game_id}: uid {utterance.uid} resolves to a different utterance")
    return violations


def _check_record(record, line_number: int, path: str) -> None:
    if not isinstance(record, dict):
        raise TrajectoryParseError("record is not a JSON object", line_number, path)
    for key in ("game_id", "task", "player", "reward", "steps"):
        if key not in record:
            raise TrajectoryParseError(f"missing field {key!r}", line_number, path)
    try:
        Task(record["task"])
        Player(record["player"])
    except ValueError as e:
        raise TrajectoryParseError(str(e), line_number, path) from None
    reward = record["reward"]
    if isinstance(reward, bool) or not isinstance(reward, (int, float)) or not math.isfinite(reward):
        raise TrajectoryParseError(f"reward must be a finite number, got {reward!r}", line_number, path)
    if not isinstance(record["steps"], list):
        raise TrajectoryParseError("steps must be a list", line_number, path)
    seen = set()
    for entry in record["steps"]:
        if not isinstance(entry, dict):
            raise TrajectoryParseError("step is not a JSON object", line_number, path)
        if "t" not in entry:
            raise TrajectoryParseError("step is missing field 't'", line_number, path)
        t = entry["t"]
        if isinstance(t, bool) or not isinstance(t, int):
            raise TrajectoryParseError(f"step index must be an integer, got {t!r}", line_number, path)
        if t in seen:
            raise TrajectoryParseError(f"duplicate step index {t}", line_number, path)
        seen.add(t)
        action = entry.get("action")
        if not isinstance(action, str) or not action.strip():
            raise TrajectoryParseError(f"step {t} has empty action text", line_number, path)
        observation = entry.get("observation")
        if observation is not None and (not isinstance(observation, str) or not observation.strip()):
            raise TrajectoryParseError(f"step {t} has empty observation text", line_number, path)


def parse_trajectories(path: Union[str, Path]) -> TrajectorySet:
    path = Path(path)
    builder = CorpusBuilder()
    trajectories = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise TrajectoryParseError(f"malformed JSON ({e.msg})", line_number, str(path)) from None
            _check_record(record, line_number, str(path))
            traj = _trajectory_from_record(record, builder)
            violations = validate_trajectory(traj)
            if violations:
                raise TrajectoryParseError("; ".join(violations), line_number, str(path))
            trajectories.append(traj)
    logger.debug(f"Parsed {len(trajectories)} trajectories ({len(builder.corpus)} utterances) from {path}")
    return TrajectorySet(tuple(trajectories), builder.corpus)


def dumps_trajectories(trajectory_set: TrajectorySet) -> str:
    return "".join(
        json.dumps(traj.to_record(), ensure_ascii=False) + "\n" for traj in trajectory_set.trajectories
    )


def write_trajectories(trajectory_set: TrajectorySet, path: Union[str, Path]) -> None:
    violations = validate_set(trajectory_set)
    if violations:
        raise TrajectoryParseError("refusing to write an invalid set: " + "; ".join(violations[:5]))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_trajectories(trajectory_set))
    logger.info(f"Wrote {len(trajectory_set)} trajectories to {path}")
