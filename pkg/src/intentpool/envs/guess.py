"""
Single-agent guessing game: the agent asks yes/no attribute questions about a hidden item
and wins by naming it before the turn limit.

Items are indexed 0..N-1 and attribute b of item i is bit b of i, so an agent that asks
the ceil(log2 N) attribute questions in turn pins the item down exactly.
"""

import logging
import math
from typing import Dict, List, Optional

from intentpool.core.errors import ValidationError
from intentpool.core.trajectory import Player, Task

from .game import ORACLE, AbstractGame
from .templates import IntentTemplateBank

logger = logging.getLogger(__name__)

_OBJECT_ADJECTIVES = (
    "red", "blue", "green", "yellow", "black", "white", "silver",
    "wooden", "glass", "paper", "plastic", "golden", "striped",
)  # fmt: skip
_OBJECT_NOUNS = (
    "kettle", "lamp", "chair", "bicycle", "guitar", "umbrella", "backpack", "clock",
    "pillow", "candle", "teapot", "basket", "hammer", "mirror", "blanket",
)  # fmt: skip
_CITY_PREFIXES = ("North", "South", "East", "West", "Port", "Lake", "New", "Old", "Fort", "Mount")
_CITY_SUFFIXES = ("haven", "ford", "bridge", "field", "wood", "ridge", "brook", "dale", "stone", "water", "gate")

ATTRIBUTES = {
    "objects": (
        "bigger than a standard shoebox",
        "made mostly of metal parts",
        "usually found in a kitchen",
        "meant to be used outdoors",
        "heavier than a hardcover book",
        "powered by a battery pack",
        "something you can sit on",
        "soft and fluffy to the touch",
        "sold in most grocery stores",
        "invented over a century ago",
    ),
    "cities": (
        "right on the ocean coastline",
        "a national capital city",
        "in the northern hemisphere",
        "home to over a million people",
        "located somewhere in Europe",
        "close to snowy mountain peaks",
        "famous for its local cuisine",
        "an old harbor for trading ships",
        "crossed by a wide river",
        "older than a thousand years",
    ),
}

# paraphrases of one intent share a long core and differ only in a short frame
_DECOYS = {
    "ask_hint": (
        "Can I have a little hint or clue?",
        "Any little hint or clue for me?",
        "A little hint or clue, please?",
        "I need a little hint or clue.",
    ),
    "ask_name": (
        "What is its proper name?",
        "Can you tell me its proper name?",
        "Just say its proper name.",
        "I want its proper name.",
    ),
    "ask_description": (
        "Can you describe what it looks like?",
        "Please describe what it looks like.",
        "Describe what it looks like for me.",
        "Would you describe what it looks like?",
    ),
}

_ORACLE_TEMPLATES = {
    "answer_yes": ("Yes, absolutely.", "Yes, absolutely so.", "Absolutely, yes.", "Oh yes, absolutely."),
    "answer_no": ("No, definitely not.", "Definitely not, no.", "No, no, definitely not.", "Nope, definitely not."),
    "answer_invalid": (
        "Invalid question.",
        "An invalid question.",
        "Invalid question, sorry.",
        "That is an invalid question.",
    ),
    "answer_correct": (
        "Correct, you guessed it!",
        "You guessed it, nice!",
        "Nice, you guessed it!",
        "You guessed it exactly!",
    ),
}

_GUESS_TEMPLATES = (
    "My final guess is the {item}.",
    "My final guess: the {item}.",
    "My final guess would be the {item}.",
    "My final guess, the {item}.",
)

GUESS_INTENT = "guess"


def item_names(domain: str, n_items: int) -> List[str]:
    if domain == "objects":
        pool = [f"{adjective} {noun}" for noun in _OBJECT_NOUNS for adjective in _OBJECT_ADJECTIVES]
    elif domain == "cities":
        pool = [f"{prefix}{suffix}" for suffix in _CITY_SUFFIXES for prefix in _CITY_PREFIXES]
    else:
        raise ValidationError(f"unknown guess domain {domain!r}; expected 'objects' or 'cities'")
    if not 2 <= n_items <= len(pool):
        raise ValidationError(f"{domain} supports between 2 and {len(pool)} items, got {n_items}")
    return pool[:n_items]


def attribute_intent(index: int, domain: str) -> str:
    slug = ATTRIBUTES[domain][index].replace(" ", "_")
    return f"ask_{slug}"


def _attribute_templates(phrase: str) -> List[str]:
    return [f"Is it {phrase}?", f"Is it {phrase} or not?", f"Would it be {phrase}?", f"Might it be {phrase}?"]


class GuessGame(AbstractGame):
    task = Task.GUESS
    seats = (Player.SOLO,)

    def __init__(
        self,
        seed: int,
        n_items: int = 157,
        domain: str = "objects",
        max_turns: int = 20,
        n_attributes: Optional[int] = None,
        n_decoys: int = 3,
        noise: float = 0.0,
        target: Optional[int] = None,
    ):
        super().__init__(seed, noise)
        self.items = item_names(domain, n_items)
        self.domain = domain
        self.max_turns = max_turns
        needed = max(1, math.ceil(math.log2(n_items)))
        self.n_attributes = needed if n_attributes is None else n_attributes
        if not needed <= self.n_attributes <= len(ATTRIBUTES[domain]):
            raise ValidationError(
                f"{n_items} items need between {needed} and {len(ATTRIBUTES[domain])} attributes, got {self.n_attributes}"
            )
        if not 0 <= n_decoys <= len(_DECOYS):
            raise ValidationError(f"n_decoys must lie in [0, {len(_DECOYS)}], got {n_decoys}")
        if max_turns < 1:
            raise ValidationError(f"max_turns must be positive, got {max_turns}")
        self.attribute_intents = [attribute_intent(b, domain) for b in range(self.n_attributes)]
        self.decoy_intents = list(_DECOYS)[:n_decoys]
        templates: Dict[str, List[str]] = {}
        for b, intent in enumerate(self.attribute_intents):
            templates[intent] = _attribute_templates(ATTRIBUTES[domain][b])
        for intent in self.decoy_intents:
            templates[intent] = list(_DECOYS[intent])
        templates[GUESS_INTENT] = list(_GUESS_TEMPLATES)
        templates.update({intent: list(ts) for intent, ts in _ORACLE_TEMPLATES.items()})
        self._bank = IntentTemplateBank(templates, noise)
        self._target = target
        self.reset()

    @classmethod
    def get_game_kind(cls) -> str:
        return "guess"

    @property
    def bank(self) -> IntentTemplateBank:
        return self._bank

    def action_intents(self) -> List[str]:
        return self.attribute_intents + self.decoy_intents + [GUESS_INTENT]

    def reset(self) -> None:
        self.transcript = []
        if self._target is None:
            self.item = int(self.random.integers(len(self.items)))
        else:
            self.item = self._target
        self.candidates = list(range(len(self.items)))
        self.turns = 0
        self.solved = False
        self._reply: Optional[str] = None

    def attribute(self, item: int, question: int) -> bool:
        """The yes/no oracle, total over (item, attribute question)."""
        return bool((item >> question) & 1)

    def current_seat(self) -> Optional[Player]:
        if self.solved or self.turns >= self.max_turns:
            return None
        return Player.SOLO

    def legal_intents(self, seat: Player) -> List[str]:
        return self.action_intents() if self.current_seat() == seat else []

    def _apply(self, seat: Player, intent: str, value: Optional[str]) -> Dict[str, str]:
        self.turns += 1
        slots: Dict[str, str] = {}
        if intent in self.attribute_intents:
            b = self.attribute_intents.index(intent)
            answer = self.attribute(self.item, b)
            self.candidates = [c for c in self.candidates if self.attribute(c, b) == answer]
            self._reply = "answer_yes" if answer else "answer_no"
        elif intent == GUESS_INTENT:
            name = value if value else self.items[self.candidates[0] if self.candidates else 0]
            slots["item"] = name
            if name == self.items[self.item]:
                self.solved = True
                self._reply = "answer_correct"
            else:
                self.candidates = [c for c in self.candidates if self.items[c] != name]
                self._reply = "answer_no"
        else:
            self._reply = "answer_invalid"
        return slots

    def _respond(self, seat: Player, intent: str) -> None:
        if self._reply is not None:
            self.emit(ORACLE, self._reply)
            self._reply = None

    def observation(self, seat: Player) -> dict:
        obs = super().observation(seat)
        obs["candidates"] = [self.items[c] for c in self.candidates]
        obs["turns_left"] = self.max_turns - self.turns
        return obs

    def rewards(self) -> Dict[Player, float]:
        return {Player.SOLO: 1.0 if self.solved else 0.0}

    def outcome(self) -> dict:
        return {"solved": self.solved, "item": self.items[self.item], "turns": self.turns}
