from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from intentpool.core.aggregate import ProjectedTrajectory, project_trajectory
from intentpool.core.constants import CONTEXT_WINDOW
from intentpool.core.errors import IntentPoolError, ValidationError
from intentpool.core.hac import ClusterAssignment
from intentpool.core.trajectory import Trajectory, TrajectorySet

from .policy import Context, context_of


@dataclass(frozen=True)
class PolicyStep:
    context: Context
    action: str
    # None when every policy action was available
    legal: Optional[Tuple[str, ...]] = None


@dataclass(frozen=True)
class PolicyBatch:
    """Per-trajectory (context, action) steps with one advantage per step."""

    steps: Tuple[Tuple[PolicyStep, ...], ...]
    advantages: Tuple[np.ndarray, ...]
    game_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.steps) != len(self.advantages):
            raise ValidationError(f"{len(self.steps)} trajectories but {len(self.advantages)} advantage rows")
        for i, (steps, adv) in enumerate(zip(self.steps, self.advantages)):
            if len(steps) != len(adv):
                raise ValidationError(f"trajectory {i}: {len(steps)} steps but {len(adv)} advantages")
            if not np.all(np.isfinite(adv)):
                raise ValidationError(f"trajectory {i}: non-finite advantage")
            for step in steps:
                if step.legal is not None and step.action not in step.legal:
                    raise ValidationError(f"trajectory {i}: action {step.action!r} is outside its legal set")

    @property
    def n_trajectories(self) -> int:
        return len(self.steps)

    def contexts(self) -> List[Context]:
        return sorted({step.context for steps in self.steps for step in steps})

    def actions(self) -> List[str]:
        return sorted({step.action for steps in self.steps for step in steps})

    def with_advantages(self, advantages: Sequence[np.ndarray]) -> "PolicyBatch":
        return PolicyBatch(self.steps, tuple(np.asarray(a, dtype=np.float64) for a in advantages), self.game_ids)

    def subset(self, indices: Sequence[int]) -> "PolicyBatch":
        return PolicyBatch(
            tuple(self.steps[i] for i in indices),
            tuple(self.advantages[i] for i in indices),
            tuple(self.game_ids[i] for i in indices) if self.game_ids else (),
        )


def policy_steps(
    traj: Trajectory, projected: ProjectedTrajectory, resolve_action: Callable[[str], str], window: int
) -> Tuple[PolicyStep, ...]:
    steps = []
    for t, step in enumerate(traj.steps):
        try:
            action = resolve_action(step.action.text)
        except IntentPoolError as e:
            raise ValidationError(f"{traj.game_id}: step {step.t} has no action template ({e})") from None
        steps.append(PolicyStep(context_of(projected.labels[:t], window), action))
    return tuple(steps)


def build_policy_batch(
    trajectory_set: TrajectorySet,
    ca: ClusterAssignment,
    advantages: Sequence[np.ndarray],
    resolve_action: Callable[[str], str],
    window: int = CONTEXT_WINDOW,
) -> PolicyBatch:
    """
    Resolve every step of the set to a (context, action) pair: the context comes from the
    projected history under `ca`, the action from `resolve_action` on the action text.
    """
    steps = tuple(
        policy_steps(traj, project_trajectory(traj, ca), resolve_action, window) for traj in trajectory_set
    )
    game_ids = tuple(traj.game_id for traj in trajectory_set)
    return PolicyBatch(steps, tuple(np.asarray(a, dtype=np.float64) for a in advantages), game_ids)
