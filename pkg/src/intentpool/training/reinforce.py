"""Offline REINFORCE on a tabular softmax policy with per-step advantages."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from tqdm import tqdm

from intentpool.core.errors import TrainingDivergedError, ValidationError

from .batch import PolicyBatch
from .policy import PolicyParams

logger = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "momentum")


@dataclass
class GradEstimate:
    vector: np.ndarray
    n_trajectories: int
    samples: Optional[np.ndarray] = None
    mean_sq_norm: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.vector)):
            raise ValidationError("gradient estimate has non-finite entries")

    def covariance_trace(self) -> float:
        """Trace of the population covariance of the per-trajectory gradient sums."""
        return max(0.0, self.mean_sq_norm - float(self.vector @ self.vector))


def trajectory_gradient(p: PolicyParams, steps, advantages: np.ndarray) -> np.ndarray:
    """
    sum_t grad log pi(a_t | c_t) * A_t for one trajectory, accumulated in step order. A step
    that carries a legal set is scored under the softmax masked to it.
    """
    g = np.zeros(p.n_params)
    A = len(p.actions)
    for step, adv in zip(steps, advantages):
        i, a = p.context_index(step.context), p.action_index(step.action)
        block = -p.probs(step.context, step.legal)
        block[a] += 1.0
        g[i * A : (i + 1) * A] += adv * block
    return g


def estimate_policy_gradient(p: PolicyParams, batch: PolicyBatch, keep_samples: bool = False) -> GradEstimate:
    """Mean over trajectories of the per-trajectory gradient sums, reduced in trajectory order."""
    if batch.n_trajectories == 0:
        raise ValidationError("gradient estimate needs at least one trajectory")
    total = np.zeros(p.n_params)
    sq_norms = 0.0
    samples = np.empty((batch.n_trajectories, p.n_params)) if keep_samples else None
    for n, (steps, advantages) in enumerate(zip(batch.steps, batch.advantages)):
        g = trajectory_gradient(p, steps, advantages)
        total += g
        sq_norms += float(g @ g)
        if samples is not None:
            samples[n] = g
    N = batch.n_trajectories
    return GradEstimate(total / N, N, samples, sq_norms / N)


def objective(p: PolicyParams, batch: PolicyBatch) -> float:
    """J = (1/N) sum_i sum_t log pi(a_t | c_t) * A_t."""
    total = 0.0
    for steps, advantages in zip(batch.steps, batch.advantages):
        for step, adv in zip(steps, advantages):
            p.context_index(step.context)  # raises on an unknown context
            pi = p.probs(step.context, step.legal)
            total += float(np.log(pi[p.action_index(step.action)])) * adv
    return total / max(batch.n_trajectories, 1)


@dataclass
class TrainingResult:
    params: PolicyParams
    loss_curve: List[float] = field(default_factory=list)


def train_offline(
    p: PolicyParams,
    batch: PolicyBatch,
    epochs: int = 20,
    batch_size: int = 32,
    learning_rate: Optional[float] = None,
    seed: int = 0,
    optimizer: str = "sgd",
    momentum: float = 0.9,
    baseline: float = 0.0,
) -> TrainingResult:
    """
    Gradient ascent on J over shuffled minibatches of trajectories.

    Args:
        p: initial parameters; contexts present in `batch` but unknown to `p` are added with zero logits.
        batch: resolved steps and their advantages.
        epochs: passes over the batch; the loss (-J over the whole batch) is recorded after each.
        batch_size: trajectories per update.
        learning_rate: overrides `p.learning_rate` when set.
        seed: seeds the minibatch shuffling.
        optimizer: "sgd" or "momentum".
        momentum: momentum coefficient for the "momentum" optimizer.
        baseline: constant subtracted from every advantage (off by default).
    """
    if optimizer not in OPTIMIZERS:
        raise ValidationError(f"unknown optimizer {optimizer!r}; expected one of {OPTIMIZERS}")
    if epochs < 0 or batch_size < 1:
        raise ValidationError(f"epochs must be >= 0 and batch_size >= 1, got {epochs} and {batch_size}")
    p = p.ensure_contexts(batch.contexts())
    unknown = set(batch.actions()) - set(p.actions)
    if unknown:
        raise ValidationError(f"batch uses actions outside the policy's action set: {sorted(unknown)}")
    if baseline:
        batch = batch.with_advantages([adv - baseline for adv in batch.advantages])
    lr = p.learning_rate if learning_rate is None else learning_rate
    rng = np.random.default_rng(seed)
    logits = p.logits.copy()
    velocity = np.zeros_like(logits)
    loss_curve: List[float] = []
    steps_taken = 0

    for epoch in tqdm(range(epochs), desc="Offline REINFORCE", disable=None):
        order = rng.permutation(batch.n_trajectories)
        for start in range(0, batch.n_trajectories, batch_size):
            current = p.with_logits(logits, steps=0)
            g = estimate_policy_gradient(current, batch.subset(order[start : start + batch_size])).vector
            g = g.reshape(logits.shape)
            if optimizer == "momentum":
                velocity = momentum * velocity + g
                logits = logits + lr * velocity
            else:
                logits = logits + lr * g
            steps_taken += 1
            if not np.all(np.isfinite(logits)):
                raise TrainingDivergedError(
                    f"non-finite logits after update {steps_taken}",
                    diagnostics={"epoch": epoch + 1, "update": steps_taken},
                )
        loss = -objective(p.with_logits(logits, steps=0), batch)
        if not np.isfinite(loss) or not np.all(np.isfinite(logits)):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch + 1}",
                diagnostics={"epoch": epoch + 1, "loss": loss, "max_abs_logit": float(np.max(np.abs(logits)))},
            )
        loss_curve.append(loss)
        logger.debug(f"epoch {epoch + 1}/{epochs}: loss {loss:.6f}")

    if loss_curve:
        logger.info(f"Offline REINFORCE: {epochs} epochs, {steps_taken} updates, final loss {loss_curve[-1]:.6f}")
    return TrainingResult(p.with_logits(logits, steps=steps_taken), loss_curve)
