import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Type

import gymnasium as gym

from intentpool.core.errors import ValidationError
from intentpool.core.trajectory import Player, Trajectory
from intentpool.experiments.agent import Agent

from .game import AbstractGame
from .opponents import scripted_opponent
from .spaces import AnyDict, IntentActionSpace

logger = logging.getLogger(__name__)


@dataclass
class Episode:
    """Everything one finished game leaves behind."""

    game_id: str
    trajectories: List[Trajectory]
    outcome: dict
    intents: Dict[str, Tuple[List[str], List[Optional[str]]]] = field(default_factory=dict)

    def trajectory_of(self, seat: Player) -> Trajectory:
        for traj in self.trajectories:
            if traj.player == Player(seat):
                return traj
        raise ValidationError(f"{self.game_id}: no trajectory for seat {Player(seat).value}")


class GameEnv(gym.Env):
    """A single-seat view of a turn-based text game; any other seat is played by an opponent agent."""

    # gym metadata
    metadata = {"render_modes": None}

    def __init__(
        self,
        game_entrypoint: Type[AbstractGame],
        game_kwargs: dict = {},
        config_id: str = "custom",
        seat: Optional[str] = None,
        opponent: Optional[Agent] = None,
        opponent_style: str = "fixed_threshold",
        opponent_kwargs: dict = {},
    ):
        """
        Instantiate a game environment.

        Args:
            game_entrypoint: the game class, constructed anew from a seed on every `reset()`.
            game_kwargs: additional arguments passed to `game_entrypoint`.
            config_id: id of the game configuration, used to name games.
            seat: the seat the agent plays. Defaults to the game's first seat.
            opponent: agent playing the other seat. Pass the learning agent itself for self-play.
            opponent_style: scripted opponent built when `opponent` is not given.
            opponent_kwargs: additional arguments for the scripted opponent.
        """
        super().__init__()
        self.game_entrypoint = game_entrypoint
        self.game_kwargs = dict(**game_kwargs)
        self.config_id = config_id
        self.game: AbstractGame = game_entrypoint(seed=0, **self.game_kwargs)
        self.seat = Player(seat) if seat is not None else self.game.seats[0]
        if self.seat not in self.game.seats:
            raise ValidationError(f"{config_id} has no seat {self.seat.value}")
        self.opponent = opponent
        if opponent is None and len(self.game.seats) > 1:
            self.opponent = scripted_opponent(opponent_style, **opponent_kwargs)
        self.game_id: Optional[str] = None

        self.observation_space = AnyDict()
        self.action_space = IntentActionSpace(self.game.action_intents())

    def reset(self, seed: Optional[int] = None, options: Optional[dict] = None):
        super().reset(seed=seed)
        seed = 0 if seed is None else int(seed)
        options = options or {}
        self.game_id = options.get("game_id", f"{self.config_id}-{seed:06d}")
        self.game = self.game_entrypoint(seed=seed, **self.game_kwargs)
        if self.opponent is not None:
            self.opponent.reset(seed + 1)
        self._advance()
        return self.game.observation(self.seat), {"game_id": self.game_id}

    def _advance(self) -> None:
        """Let the opponent act until it is the agent's turn or the game ends."""
        while not self.game.is_over and self.game.current_seat() != self.seat:
            other = self.game.current_seat()
            obs = self.opponent.obs_preprocessor(self.game.observation(other))
            action, _ = self.opponent.get_action(obs)
            self.game.act(other, action)

    def step(self, action: str):
        message = self.game.act(self.seat, action)
        self._advance()
        terminated = self.game.is_over
        reward = float(self.game.rewards()[self.seat]) if terminated else 0.0
        info = {"message": message.text, "intent": message.intent}
        if terminated:
            info["episode"] = self.episode()
        return self.game.observation(self.seat), reward, terminated, False, info

    def episode(self) -> Episode:
        return Episode(
            game_id=self.game_id,
            trajectories=self.game.trajectories(self.game_id),
            outcome=self.game.outcome(),
            intents={seat.value: self.game.seat_intents(seat) for seat in self.game.seats},
        )

    def close(self):
        pass
