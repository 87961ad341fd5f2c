from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from intentpool.core.errors import IllegalActionError, UnknownIntentError
from intentpool.core.trajectory import CorpusBuilder, Player, Speaker, Step, Task, Trajectory

from .templates import IntentTemplateBank

ORACLE = "oracle"


@dataclass(frozen=True)
class Message:
    sender: str  # a Player value or ORACLE
    intent: str
    text: str
    slots: Dict[str, str] = field(default_factory=dict)


def parse_action(action: str) -> Tuple[str, Optional[str]]:
    """Actions are `intent` or `intent:value` where value fills the intent's single slot."""
    intent, sep, value = action.partition(":")
    return intent.strip(), (value.strip() if sep else None)


class AbstractGame(ABC):
    """
    A turn-based text game. Seats act in turn; every action is rendered through the
    game's template bank and appended to a shared transcript from which per-seat
    trajectories are cut.
    """

    task: Task
    seats: Tuple[Player, ...]

    @classmethod
    @abstractmethod
    def get_game_kind(cls) -> str:
        pass

    def __init__(self, seed: int, noise: float = 0.0) -> None:
        self.random = np.random.default_rng(seed)
        self.seed = seed
        self.noise = noise
        self.transcript: List[Message] = []

    @property
    @abstractmethod
    def bank(self) -> IntentTemplateBank:
        """Templates of every intent any seat or the oracle can emit."""

    @abstractmethod
    def action_intents(self) -> List[str]:
        """The action-template set a learning agent chooses from."""

    @abstractmethod
    def reset(self) -> None:
        pass

    @abstractmethod
    def current_seat(self) -> Optional[Player]:
        """Seat to act next, None once the game is over."""

    @abstractmethod
    def legal_intents(self, seat: Player) -> List[str]:
        pass

    @abstractmethod
    def _apply(self, seat: Player, intent: str, value: Optional[str]) -> Dict[str, str]:
        """Update the game state for a legal action; returns the slots used for rendering."""

    @abstractmethod
    def rewards(self) -> Dict[Player, float]:
        pass

    @abstractmethod
    def outcome(self) -> dict:
        pass

    def observation(self, seat: Player) -> dict:
        return {
            "task": self.task.value,
            "seat": seat.value,
            "turn": sum(1 for m in self.transcript if m.sender == seat.value) + 1,
            "legal_intents": self.legal_intents(seat) if self.current_seat() == seat else [],
            "transcript": self.seat_transcript(seat),
        }

    @property
    def is_over(self) -> bool:
        return self.current_seat() is None

    def act(self, seat: Player, action: str) -> Message:
        if self.current_seat() != seat:
            raise IllegalActionError(f"seat {seat.value} acted out of turn")
        intent, value = parse_action(action)
        if intent not in self.bank:
            raise UnknownIntentError(f"intent {intent!r} is not in the template bank")
        if intent not in self.legal_intents(seat):
            raise IllegalActionError(f"intent {intent!r} is not legal for {seat.value} now")
        slots = self._apply(seat, intent, value)
        message = self.emit(seat.value, intent, slots)
        self._respond(seat, intent)
        return message

    def _respond(self, seat: Player, intent: str) -> None:
        """Hook for oracle replies emitted right after a seat acts."""

    def emit(self, sender: str, intent: str, slots: Optional[Dict[str, str]] = None) -> Message:
        slots = slots or {}
        message = Message(sender, intent, self.bank.render(intent, self.random, **slots), dict(slots))
        self.transcript.append(message)
        return message

    def seat_transcript(self, seat: Player) -> List[Tuple[str, Optional[str]]]:
        """(action text, observation text) pairs from the seat's point of view."""
        pairs: List[List] = []
        for message in self.transcript:
            if message.sender == seat.value:
                pairs.append([message.text, None])
            elif pairs and pairs[-1][1] is None:
                pairs[-1][1] = message.text
        return [tuple(p) for p in pairs]

    def seat_intents(self, seat: Player) -> Tuple[List[str], List[Optional[str]]]:
        actions, observations = [], []
        for message in self.transcript:
            if message.sender == seat.value:
                actions.append(message.intent)
                observations.append(None)
            elif actions and observations[-1] is None:
                observations[-1] = message.intent
        return actions, observations

    def trajectories(self, game_id: str) -> List[Trajectory]:
        rewards = self.rewards()
        out = []
        for seat in self.seats:
            builder = CorpusBuilder()
            steps = []
            for t, (action, observation) in enumerate(self.seat_transcript(seat), start=1):
                steps.append(
                    Step(
                        t=t,
                        action=builder.intern(action, Speaker.AGENT),
                        observation=None if observation is None else builder.intern(observation, Speaker.ENVIRONMENT),
                    )
                )
            if steps:
                out.append(Trajectory(game_id, self.task, seat, tuple(steps), float(rewards[seat])))
        return out
