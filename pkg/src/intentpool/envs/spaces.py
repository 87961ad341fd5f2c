from typing import Any, Iterable

from gymnasium.spaces import Space, Text

# longest action string a game accepts
MAX_ACTION_LENGTH = 256


class IntentActionSpace(Text):
    """
    Actions are strings `intent` or `intent:value` over a fixed intent vocabulary.

    Unlike Gymnasium's Text space, any unicode character may appear in the value part and
    membership also checks the intent against the vocabulary.
    """

    def __init__(self, intents: Iterable[str], max_length: int = MAX_ACTION_LENGTH, seed=None):
        self.intents = tuple(intents)
        super().__init__(max_length=max_length, min_length=1, seed=seed)

    def contains(self, x: Any) -> bool:
        if not isinstance(x, str) or not self.min_length <= len(x) <= self.max_length:
            return False
        return x.partition(":")[0].strip() in self.intents

    def sample(self, mask=None) -> str:
        return self.intents[int(self.np_random.integers(len(self.intents)))]

    def __repr__(self) -> str:
        return f"IntentActionSpace({len(self.intents)} intents, max_length={self.max_length})"

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, IntentActionSpace) and self.intents == other.intents and self.max_length == other.max_length


class AnyDict(Space):
    """A space representing an arbitrary dictionary object."""

    def contains(self, x: Any) -> bool:
        return isinstance(x, dict)

    def __repr__(self) -> str:
        return "AnyDict()"

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, AnyDict)
