import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import gymnasium as gym
from tqdm import tqdm

from intentpool.core.errors import ComputationError, IntentPoolError

from .agent import Agent, AgentInfo

logger = logging.getLogger(__name__)


@dataclass
class EnvArgs:
    game_name: str
    seed: int = 0
    max_steps: int = None
    seat: str = None
    opponent_style: str = None
    opponent_kwargs: dict = None
    game_kwargs: dict = None  # overrides of the configuration's game parameters

    def make_env(self, opponent: Optional[Agent] = None) -> gym.Env:
        # registers the shipped game configurations
        import intentpool.envs
        from intentpool.envs.game_config import GameConfig

        extra_kwargs = {}
        if self.seat is not None:
            extra_kwargs["seat"] = self.seat
        if opponent is not None:
            extra_kwargs["opponent"] = opponent
        if self.opponent_style is not None:
            extra_kwargs["opponent_style"] = self.opponent_style
        if self.opponent_kwargs:
            extra_kwargs["opponent_kwargs"] = self.opponent_kwargs
        env_id = intentpool.envs.env_id(self.game_name)
        if self.game_kwargs is not None or env_id not in gym.registry:
            config = GameConfig.load(self.game_name)
            return intentpool.envs.GameEnv(
                config.game_class,
                game_kwargs={**config.params, **(self.game_kwargs or {})},
                config_id=config.id,
                **{"opponent_style": config.opponent, **extra_kwargs},
            )
        return gym.make(
            env_id,
            disable_env_checker=True,
            max_episode_steps=self.max_steps,
            **extra_kwargs,
        )


@dataclass
class AbstractAgentArgs(ABC):
    """A template class that defines the required signature of an agent's arguments."""

    agent_name: str = None

    def __post_init__(self):
        if self.agent_name is None:
            self.agent_name = self.__class__.__name__

    @abstractmethod
    def make_agent(self) -> Agent:
        """Comply the experiments.loop API for instantiating the agent."""


@dataclass
class StepInfo:
    """
    Collects information about one step of an episode.

    Attributes:
    -----------
    step: int
        The step number of the episode.
    obs: dict
        The observation of the environment.
    reward: float
        The reward of the step (non-zero only when the game ends).
    terminated: bool
        Whether the game is over.
    truncated: bool
        Whether the episode hit the step limit first.
    action: str
        The action taken by the agent.
    agent_info: AgentInfo
        Additional information from the agent.
    env_info: dict
        The info dict returned by the environment.
    """

    step: int = None
    obs: dict = None
    reward: float = 0
    terminated: bool = None
    truncated: bool = None
    action: str = None
    agent_info: AgentInfo = field(default_factory=AgentInfo)
    env_info: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def from_reset(self, env: gym.Env, seed: int, obs_preprocessor: Callable, options: Optional[dict] = None):
        self.obs, self.env_info = env.reset(seed=seed, options=options)
        self.reward, self.terminated, self.truncated = 0, False, False
        if obs_preprocessor:
            self.obs = obs_preprocessor(self.obs)

    def from_action(self, agent: Agent) -> str:
        start = time.time()
        self.action, self.agent_info = agent.get_action(self.obs)
        self.elapsed = time.time() - start
        return self.action

    def from_step(self, env: gym.Env, action: str, obs_preprocessor: Callable):
        self.obs, self.reward, self.terminated, self.truncated, self.env_info = env.step(action)
        if obs_preprocessor:
            self.obs = obs_preprocessor(self.obs)

    @property
    def is_done(self):
        return self.terminated or self.truncated


def rollout(env: gym.Env, agent: Agent, seed: int = 0, game_id: Optional[str] = None):
    """
    Play one game with `agent` in the env's seat and return its `Episode`. For self-play,
    build the env with the same agent as its opponent.
    """
    agent.reset(seed)
    options = {"game_id": game_id} if game_id is not None else None
    step_info = StepInfo(step=0)
    step_info.from_reset(env, seed=seed, obs_preprocessor=agent.obs_preprocessor, options=options)
    while not step_info.is_done:
        action = step_info.from_action(agent)
        logger.debug(f"{step_info.env_info.get('game_id', game_id)} step {step_info.step}: {action}")
        step_info = StepInfo(step=step_info.step + 1, action=action)
        step_info.from_step(env, action, obs_preprocessor=agent.obs_preprocessor)
    if "episode" in step_info.env_info:
        return step_info.env_info["episode"]
    logger.warning(f"Game {env.unwrapped.game_id} was truncated after {step_info.step} steps")
    return env.unwrapped.episode()


def run_games(
    env_args: EnvArgs,
    agent: Agent,
    n_games: int,
    seed: Optional[int] = None,
    self_play: bool = False,
    desc: str = "Games",
) -> List:
    """
    Play `n_games` games, game i seeded with `seed + i` (`seed` defaults to the env args' seed).
    Failures are re-raised naming the game they happened in.
    """
    seed = env_args.seed if seed is None else seed
    env = env_args.make_env(opponent=agent if self_play else None)
    episodes = []
    try:
        for i in tqdm(range(n_games), desc=desc, disable=None):
            game_seed = seed + i
            game_id = f"{env_args.game_name}-{game_seed:06d}"
            try:
                episodes.append(rollout(env, agent, seed=game_seed, game_id=game_id))
            except IntentPoolError as e:
                logger.error(f"Game {game_id} failed: {type(e).__name__}: {e}")
                raise
            except Exception as e:
                raise ComputationError(f"game {game_id} failed: {type(e).__name__}: {e}") from e
    finally:
        env.close()
    return episodes
