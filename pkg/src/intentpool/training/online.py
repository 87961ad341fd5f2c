"""
Online REINFORCE against a reward-table oracle: fresh games are projected onto the offline
centroids, scored step by step from the table and used for one update per iteration.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional

import gymnasium as gym
import numpy as np
from tqdm import tqdm

from intentpool.core.aggregate import ProjectedTrajectory, RewardTable, intention_keys, table_from_projections
from intentpool.core.errors import TrainingDivergedError, ValidationError
from intentpool.core.projection import UtteranceLabeler
from intentpool.experiments.loop import rollout
from intentpool.experiments.policy_agent import PolicyAgent

from .batch import PolicyBatch, PolicyStep
from .policy import PolicyParams, context_of
from .reinforce import estimate_policy_gradient

logger = logging.getLogger(__name__)


@dataclass
class OnlineResult:
    params: PolicyParams
    reward_curve: List[float] = field(default_factory=list)
    table: Optional[RewardTable] = None
    refreshes: int = 0
    n_embedded: int = 0


def _scored_steps(
    projected: ProjectedTrajectory, actions: List[str], legal: List[tuple], table: RewardTable, window: int
):
    if len(legal) != len(actions):
        raise ValidationError(f"{len(actions)} actions but {len(legal)} recorded legal sets")
    keys = intention_keys(projected, table.scope)
    steps = tuple(
        PolicyStep(context_of(projected.labels[:t], window), action, legal[t]) for t, action in enumerate(actions)
    )
    return steps, np.array([table.score(key) for key in keys], dtype=np.float64)


def train_online(
    p: PolicyParams,
    env: gym.Env,
    labeler: UtteranceLabeler,
    table: RewardTable,
    iterations: int,
    batch_size: int = 32,
    refresh_every: Optional[int] = None,
    window_size: Optional[int] = None,
    learning_rate: Optional[float] = None,
    seed: int = 0,
) -> OnlineResult:
    """
    Args:
        p: initial policy, usually the offline checkpoint.
        env: a game env; the policy plays its seat.
        labeler: projects new utterances onto the clustering the table was built at.
        table: reward-table oracle from the offline phase; unseen keys score its global mean.
        iterations: number of batch-then-update rounds.
        batch_size: games per iteration.
        refresh_every: rebuild the table every this many iterations (never when None).
        window_size: trajectories kept for a refresh; defaults to batch_size * refresh_every.
        learning_rate: overrides `p.learning_rate` when set.
        seed: game i of iteration j is seeded with seed + j * batch_size + i.
    """
    if iterations < 0 or batch_size < 1:
        raise ValidationError(f"iterations must be >= 0 and batch_size >= 1, got {iterations} and {batch_size}")
    if refresh_every is not None and refresh_every < 1:
        raise ValidationError(f"refresh_every must be positive, got {refresh_every}")
    if window_size is None and refresh_every is not None:
        window_size = batch_size * refresh_every
    lr = p.learning_rate if learning_rate is None else learning_rate
    seat = env.unwrapped.seat
    recent: Deque[ProjectedTrajectory] = deque(maxlen=window_size)
    result = OnlineResult(p, table=table)

    for it in tqdm(range(iterations), desc="Online REINFORCE", disable=None):
        agent = PolicyAgent(result.params, labeler, seed=seed)
        steps, advantages, rewards, game_ids = [], [], [], []
        for b in range(batch_size):
            game_seed = seed + it * batch_size + b
            episode = rollout(env, agent, seed=game_seed, game_id=f"online-{it:04d}-{b:03d}")
            traj = episode.trajectory_of(seat)
            projected = labeler.project(traj)
            actions = episode.intents[seat.value][0]
            legal = [info.legal for info in agent.decisions]
            traj_steps, traj_adv = _scored_steps(projected, actions, legal, result.table, p.window)
            steps.append(traj_steps)
            advantages.append(traj_adv)
            rewards.append(traj.terminal_reward)
            game_ids.append(episode.game_id)
            recent.append(projected)

        batch = PolicyBatch(tuple(steps), tuple(advantages), tuple(game_ids))
        params = result.params.ensure_contexts(batch.contexts())
        g = estimate_policy_gradient(params, batch).vector.reshape(params.logits.shape)
        logits = params.logits + lr * g
        if not np.all(np.isfinite(logits)):
            raise TrainingDivergedError(f"non-finite logits at online iteration {it + 1}", diagnostics={"iteration": it + 1})
        result.params = params.with_logits(logits)
        result.reward_curve.append(float(np.mean(rewards)))
        logger.debug(f"online iteration {it + 1}: mean reward {result.reward_curve[-1]:.4f}")

        if refresh_every is not None and (it + 1) % refresh_every == 0:
            t = result.table
            result.table = table_from_projections(list(recent), t.gamma, t.k, t.scope)
            result.refreshes += 1
            logger.info(f"Refreshed reward table after iteration {it + 1}: {len(result.table)} keys")

    result.n_embedded = labeler.n_embedded
    if result.reward_curve:
        logger.info(
            f"Online REINFORCE: {iterations} iterations, final mean reward {result.reward_curve[-1]:.4f}, "
            f"{result.n_embedded} utterances projected outside the offline corpus"
        )
    return result
