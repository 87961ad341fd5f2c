"""
Contextual softmax policy over a finite action-template set.

A context is the last `window` projected (action label, observation label) pairs before a
step, with -1 standing for a missing observation. Each context owns one row of logits;
parameters are addressed as a flat vector of length C*A in row-major order.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from intentpool.core.constants import CONTEXT_WINDOW
from intentpool.core.embed import read_float_block, write_float_block
from intentpool.core.errors import ValidationError
from intentpool.core.utils import atomic_write_text

logger = logging.getLogger(__name__)

Context = Tuple[Tuple[int, int], ...]


def context_of(history: Sequence[Tuple[int, Optional[int]]], window: int = CONTEXT_WINDOW) -> Context:
    recent = list(history)[-window:] if window > 0 else []
    return tuple((int(a), -1 if o is None else int(o)) for a, o in recent)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z))
    return e / e.sum()


@dataclass(eq=False)
class PolicyParams:
    actions: Tuple[str, ...]
    contexts: Tuple[Context, ...]
    logits: np.ndarray
    learning_rate: float = 0.5
    seed: int = 0
    window: int = CONTEXT_WINDOW
    step: int = 0
    _context_index: Dict[Context, int] = field(default=None, init=False, repr=False)
    _action_index: Dict[str, int] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.actions = tuple(self.actions)
        self.contexts = tuple(tuple((int(a), int(o)) for a, o in c) for c in self.contexts)
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if self.logits.shape != (len(self.contexts), len(self.actions)):
            raise ValidationError(
                f"logits have shape {self.logits.shape}, expected {(len(self.contexts), len(self.actions))}"
            )
        if not self.actions:
            raise ValidationError("policy needs at least one action")
        if len(set(self.actions)) != len(self.actions):
            raise ValidationError("policy actions must be distinct")
        if len(set(self.contexts)) != len(self.contexts):
            raise ValidationError("policy contexts must be distinct")
        if not np.all(np.isfinite(self.logits)):
            raise ValidationError("policy logits must be finite")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        self._context_index = {c: i for i, c in enumerate(self.contexts)}
        self._action_index = {a: j for j, a in enumerate(self.actions)}

    @classmethod
    def initial(
        cls,
        actions: Sequence[str],
        contexts: Iterable[Context] = (),
        learning_rate: float = 0.5,
        seed: int = 0,
        window: int = CONTEXT_WINDOW,
    ) -> "PolicyParams":
        """Uniform policy: zero logits in every context."""
        contexts = tuple(sorted(set(contexts)))
        return cls(tuple(actions), contexts, np.zeros((len(contexts), len(actions))), learning_rate, seed, window)

    @property
    def n_params(self) -> int:
        return self.logits.size

    def knows(self, context: Context) -> bool:
        return context in self._context_index

    def context_index(self, context: Context) -> int:
        try:
            return self._context_index[context]
        except KeyError:
            raise ValidationError(f"context {context} is unknown to the policy") from None

    def action_index(self, action: str) -> int:
        try:
            return self._action_index[action]
        except KeyError:
            raise ValidationError(f"action {action!r} is not in the policy's action set") from None

    def probs(self, context: Context, legal: Optional[Sequence[str]] = None) -> np.ndarray:
        """Action distribution in `context`; unknown contexts are uniform. `legal` masks the rest out."""
        row = self.logits[self._context_index[context]] if context in self._context_index else np.zeros(len(self.actions))
        if legal is None:
            return _softmax(row)
        mask = np.full(len(self.actions), -np.inf)
        for action in legal:
            if action in self._action_index:
                mask[self._action_index[action]] = 0.0
        if np.all(np.isinf(mask)):
            raise ValidationError(f"none of the legal actions {list(legal)} is in the policy's action set")
        return _softmax(row + mask)

    def with_logits(self, logits: np.ndarray, steps: int = 1) -> "PolicyParams":
        return PolicyParams(
            self.actions, self.contexts, logits, self.learning_rate, self.seed, self.window, self.step + steps
        )

    def ensure_contexts(self, contexts: Iterable[Context]) -> "PolicyParams":
        """Add zero-logit rows for unseen contexts, keeping existing rows in place."""
        new = sorted(set(c for c in contexts if c not in self._context_index))
        if not new:
            return self
        logits = np.vstack([self.logits, np.zeros((len(new), len(self.actions)))])
        return PolicyParams(
            self.actions, self.contexts + tuple(new), logits, self.learning_rate, self.seed, self.window, self.step
        )

    def copy(self) -> "PolicyParams":
        return self.with_logits(self.logits.copy(), steps=0)


def log_prob_and_grad(
    p: PolicyParams, context: Context, action: str, legal: Optional[Sequence[str]] = None
) -> Tuple[float, np.ndarray]:
    """log pi(action | context) and its gradient over the flat parameter vector, masked to `legal` when given."""
    i, a = p.context_index(context), p.action_index(action)
    if legal is not None and action not in legal:
        raise ValidationError(f"action {action!r} is not among the legal actions {list(legal)}")
    pi = p.probs(context, legal)
    block = -pi
    block[a] += 1.0
    grad = np.zeros(p.n_params)
    A = len(p.actions)
    grad[i * A : (i + 1) * A] = block
    return float(np.log(pi[a])), grad


def save_checkpoint(p: PolicyParams, path: Union[str, Path]) -> None:
    path = Path(path)
    block = path.with_name(path.stem + ".logits.f64")
    checksum = write_float_block(p.logits, block, "<f8")
    record = {
        "actions": list(p.actions),
        "contexts": [[list(pair) for pair in c] for c in p.contexts],
        "learning_rate": p.learning_rate,
        "seed": p.seed,
        "window": p.window,
        "step": p.step,
        "logits": {"file": block.name, "dtype": "<f8", "shape": list(p.logits.shape), "checksum": checksum},
    }
    atomic_write_text(path, json.dumps(record, indent=2) + "\n")
    logger.debug(f"Saved policy checkpoint ({len(p.contexts)} contexts x {len(p.actions)} actions) to {path}")


def load_checkpoint(path: Union[str, Path]) -> PolicyParams:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        record = json.load(f)
    block = record["logits"]
    logits = read_float_block(path.with_name(block["file"]), tuple(block["shape"]), block["checksum"], "<f8")
    contexts = tuple(tuple((int(a), int(o)) for a, o in c) for c in record["contexts"])
    return PolicyParams(
        tuple(record["actions"]),
        contexts,
        logits,
        record["learning_rate"],
        record["seed"],
        record["window"],
        record["step"],
    )
