import gymnasium as gym

from .env import GameEnv
from .game_config import GameConfig

ENV_PREFIX = "intentpool"


def env_id(config_id: str) -> str:
    return config_id if config_id.startswith(f"{ENV_PREFIX}/") else f"{ENV_PREFIX}/{config_id}"


def register_game(config: GameConfig, *args, **kwargs) -> None:
    """
    Registers a game configuration as a gym environment with its unique id.

    Args:
        config: the game configuration to register (its id will be prepended by "intentpool/").
        *args: additional arguments for gym registration.
        **kwargs: additional arguments for gym registration.
    """

    # these environment arguments will be fixed, and error will be raised if they are set when calling gym.make()
    fixed_env_kwargs = {
        "game_entrypoint": config.game_class,
        "game_kwargs": dict(config.params),
        "config_id": config.id,
    }

    gym.register(
        id=env_id(config.id),
        entry_point=lambda *env_args, **env_kwargs: GameEnv(
            *env_args,
            **fixed_env_kwargs,
            **{"opponent_style": config.opponent, **env_kwargs},
        ),
        nondeterministic=False,
        *args,
        **kwargs,
    )
