"""
Alternating-offer protocol shared by the bargaining and negotiation games.

Bob opens with a greeting, Alice makes the round-1 proposal, and from then on the responder
either accepts the pending proposal or counters with one of their own, which becomes the
next round's proposal. A counter made in the final round ends the game without a deal.
"""

from abc import abstractmethod
from typing import Dict, List, Optional, Tuple

from intentpool.core.errors import ValidationError
from intentpool.core.trajectory import Player

from .game import AbstractGame
from .templates import IntentTemplateBank

OPEN_INTENT = "open"
ACCEPT_INTENT = "accept"

_OPEN_TEMPLATES = (
    "Make me your first offer.",
    "Hello, make me your first offer.",
    "Go on, make me your first offer.",
    "Please make me your first offer.",
)
_ACCEPT_TEMPLATES = (
    "Deal, we have ourselves a deal.",
    "We have ourselves a deal.",
    "Great, we have ourselves a deal.",
    "Fine, we have ourselves a deal.",
)


def other(seat: Player) -> Player:
    return Player.BOB if seat == Player.ALICE else Player.ALICE


class AlternatingOfferGame(AbstractGame):
    seats = (Player.ALICE, Player.BOB)

    def __init__(self, seed: int, T: int, noise: float = 0.0):
        super().__init__(seed, noise)
        if T < 1:
            raise ValidationError(f"T must be positive, got {T}")
        self.T = T
        self._bank: Optional[IntentTemplateBank] = None

    @abstractmethod
    def offer_levels(self) -> Dict[str, float]:
        """Offer intent -> the level it proposes."""

    @abstractmethod
    def offer_templates(self, level: float) -> List[str]:
        pass

    @abstractmethod
    def value_of(self, seat: Player, proposer: Player, level: float) -> float:
        """The seat's own normalized share if `proposer`'s offer at `level` is accepted."""

    @abstractmethod
    def settle(self, proposer: Optional[Player], level: Optional[float], t_ev: Optional[int]) -> None:
        """Record the final outcome; all arguments are None when there is no deal."""

    @property
    def bank(self) -> IntentTemplateBank:
        if self._bank is None:
            templates = {OPEN_INTENT: list(_OPEN_TEMPLATES), ACCEPT_INTENT: list(_ACCEPT_TEMPLATES)}
            for intent, level in self.offer_levels().items():
                templates[intent] = self.offer_templates(level)
            self._bank = IntentTemplateBank(templates, self.noise)
        return self._bank

    def action_intents(self) -> List[str]:
        return [OPEN_INTENT, ACCEPT_INTENT] + list(self.offer_levels())

    def reset(self) -> None:
        self.transcript = []
        self.opened = False
        self.round = 1
        self.pending: Optional[Tuple[Player, float]] = None
        self.over = False

    def current_seat(self) -> Optional[Player]:
        if self.over:
            return None
        if not self.opened:
            return Player.BOB
        if self.pending is None:
            return Player.ALICE
        return other(self.pending[0])

    def legal_intents(self, seat: Player) -> List[str]:
        if self.current_seat() != seat:
            return []
        if not self.opened:
            return [OPEN_INTENT]
        offers = list(self.offer_levels())
        if self.pending is None:
            return offers
        return [ACCEPT_INTENT] + offers

    def _apply(self, seat: Player, intent: str, value: Optional[str]) -> Dict[str, str]:
        if intent == OPEN_INTENT:
            self.opened = True
            return {}
        if intent == ACCEPT_INTENT:
            proposer, level = self.pending
            self.over = True
            self.settle(proposer, level, self.round)
            return {}
        level = self.offer_levels()[intent]
        if self.pending is not None:
            if self.round >= self.T:
                self.over = True
                self.settle(None, None, None)
                return {}
            self.round += 1
        self.pending = (seat, level)
        return {}

    def observation(self, seat: Player) -> dict:
        obs = super().observation(seat)
        obs["round"] = self.round
        obs["T"] = self.T
        obs["offer_values"] = {intent: self.value_of(seat, seat, level) for intent, level in self.offer_levels().items()}
        pending_value = None
        if self.pending is not None and self.pending[0] != seat:
            pending_value = self.value_of(seat, self.pending[0], self.pending[1])
        obs["pending_value"] = pending_value
        return obs
