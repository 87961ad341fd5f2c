"""
Scripted policies: opponents for the offer games and the binary-search guesser.

Opponents reason over normalized own-share values ("offer_values" and "pending_value" in the
observation), so the same strategy plays bargaining and negotiation alike.
"""

import logging
from abc import abstractmethod
from typing import Callable, Dict, List, Mapping, Optional

import numpy as np

from intentpool.core.errors import UnknownOpponentError
from intentpool.experiments.agent import Agent, AgentInfo

from .guess import GUESS_INTENT
from .offers import ACCEPT_INTENT, OPEN_INTENT

logger = logging.getLogger(__name__)


def nearest_offer(offer_values: Mapping[str, float], target: float) -> str:
    """Offer intent whose own value is closest to `target`; ties go to the larger value."""
    return min(offer_values, key=lambda intent: (abs(offer_values[intent] - target), -offer_values[intent], intent))


class ScriptedOpponent(Agent):
    style: str = None

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.reset(seed)

    def reset(self, seed: Optional[int] = None) -> None:
        if seed is not None:
            self.seed = seed
        self.random = np.random.default_rng(self.seed)
        self._reset_state()

    def _reset_state(self) -> None:
        pass

    def _observe(self, obs: dict) -> None:
        pass

    @abstractmethod
    def accepts(self, value: float) -> bool:
        pass

    @abstractmethod
    def demand(self) -> float:
        """Own share this opponent proposes to keep."""

    def get_action(self, obs: dict) -> tuple[str, AgentInfo]:
        legal = obs["legal_intents"]
        if legal == [OPEN_INTENT]:
            return OPEN_INTENT, AgentInfo(intent=OPEN_INTENT)
        self._observe(obs)
        pending = obs.get("pending_value")
        if pending is not None and ACCEPT_INTENT in legal and self.accepts(pending):
            return ACCEPT_INTENT, AgentInfo(intent=ACCEPT_INTENT, extra_info={"pending_value": pending})
        intent = nearest_offer(obs["offer_values"], self.demand())
        return intent, AgentInfo(intent=intent, extra_info={"demand": self.demand()})


class FixedThresholdOpponent(ScriptedOpponent):
    """Accepts any proposal worth at least `threshold` of the pot, otherwise asks for `ask`."""

    style = "fixed_threshold"

    def __init__(self, seed: int = 0, threshold: float = 0.45, ask: float = 0.55):
        self.threshold = threshold
        self.ask = ask
        super().__init__(seed)

    def accepts(self, value: float) -> bool:
        return value >= self.threshold

    def demand(self) -> float:
        return self.ask


class GreedyOpponent(ScriptedOpponent):
    style = "greedy"

    def __init__(self, seed: int = 0, ask: float = 0.8, threshold: float = 0.7):
        self.ask = ask
        self.threshold = threshold
        super().__init__(seed)

    def accepts(self, value: float) -> bool:
        return value >= self.threshold

    def demand(self) -> float:
        return self.ask


class TitForTatOpponent(ScriptedOpponent):
    """
    Opens high and concedes each turn by at least `step`, matching larger concessions made by
    the other side. Concessions carry seeded jitter and never go below `floor`.
    """

    style = "tit_for_tat"

    def __init__(self, seed: int = 0, start: float = 0.8, floor: float = 0.5, step: float = 0.05, jitter: float = 0.02):
        self.start = start
        self.floor = floor
        self.step = step
        self.jitter = jitter
        super().__init__(seed)

    def _reset_state(self) -> None:
        self.current = self.start
        self.last_seen: Optional[float] = None
        self.turns = 0

    def _observe(self, obs: dict) -> None:
        pending = obs.get("pending_value")
        concession = 0.0
        if pending is not None:
            if self.last_seen is not None:
                concession = max(0.0, pending - self.last_seen)
            self.last_seen = pending
        if self.turns > 0:
            noise = float(self.random.uniform(-self.jitter, self.jitter))
            self.current = max(self.floor, self.current - max(self.step, concession) + noise)
        self.turns += 1

    def accepts(self, value: float) -> bool:
        return value >= self.current

    def demand(self) -> float:
        return self.current


OPPONENT_STYLES: Dict[str, Callable[..., ScriptedOpponent]] = {
    FixedThresholdOpponent.style: FixedThresholdOpponent,
    GreedyOpponent.style: GreedyOpponent,
    TitForTatOpponent.style: TitForTatOpponent,
}


def scripted_opponent(style: str, seed: int = 0, **params) -> ScriptedOpponent:
    """Instantiate a registered opponent style; unknown styles raise UnknownOpponentError."""
    try:
        factory = OPPONENT_STYLES[style]
    except KeyError:
        raise UnknownOpponentError(
            f"unknown opponent style {style!r}; registered styles: {sorted(OPPONENT_STYLES)}"
        ) from None
    return factory(seed=seed, **params)


class BinarySearchAgent(Agent):
    """Asks every attribute question in order, then guesses the remaining candidate."""

    def __init__(self, attribute_intents: List[str]):
        self.attribute_intents = list(attribute_intents)

    def get_action(self, obs: dict) -> tuple[str, AgentInfo]:
        asked = obs["turn"] - 1
        if asked < len(self.attribute_intents) and len(obs["candidates"]) > 1:
            intent = self.attribute_intents[asked]
            return intent, AgentInfo(intent=intent)
        return f"{GUESS_INTENT}:{obs['candidates'][0]}", AgentInfo(intent=GUESS_INTENT)
