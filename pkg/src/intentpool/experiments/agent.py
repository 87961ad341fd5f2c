from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Optional


@dataclass
class AgentInfo:
    intent: str = None
    log_prob: float = None
    context: tuple = None
    legal: tuple = None
    stats: dict = field(default_factory=dict)
    extra_info: dict = None


class Agent(ABC):
    """
    A template class that defines the required signature of an agent playing one seat of a
    game environment.
    """

    def obs_preprocessor(self, obs: dict) -> Any:
        """
        Function that pre-processes observations before feeding them to `get_action()`.
        By default, the observation is passed through unchanged.
        """
        return obs

    def reset(self, seed: Optional[int] = None) -> None:
        """Called once per game before the first action; reseed any internal randomness here."""

    @abstractmethod
    def get_action(self, obs: Any) -> tuple[str, AgentInfo]:
        """
        Updates the agent with the current observation, and returns its next action (plus an info dict, optional).

        Parameters:
        -----------
        obs:
            The current observation of the environment, after it has been processed by `obs_preprocessor()`.
            A game observation is a dict with the following entries:
            - "task": str, the game's task.
            - "seat": str, the seat this agent plays.
            - "turn": int, 1-based index of the seat's upcoming action.
            - "legal_intents": list[str], intents the seat may emit now.
            - "transcript": list of (action text, observation text) pairs seen by the seat.
            Guessing games add "candidates" and "turns_left"; offer games add "round", "T",
            "offer_values" and "pending_value".

        Returns:
        --------
        action: str
            An intent id, optionally followed by ":" and the value of the intent's slot.
        info: AgentInfo
            Additional information about the action.
        """
