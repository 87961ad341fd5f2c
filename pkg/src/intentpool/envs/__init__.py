import gymnasium as gym

from . import game_config
from .bargain import BargainGame
from .env import Episode, GameEnv
from .evaluate import (
    EvalRow,
    bargain_payoffs,
    eval_average_final_reward,
    eval_win_rate_bargain,
    eval_win_rate_negotiation,
    negotiation_utilities,
    write_eval_summary,
)
from .game import AbstractGame, Message
from .game_config import GameConfig
from .guess import GuessGame
from .negotiate import NegotiationGame
from .opponents import BinarySearchAgent, scripted_opponent
from .registration import env_id, register_game
from .templates import IntentTemplateBank

# register the shipped game configurations
for config_id in game_config.GAMES:
    if env_id(config_id) not in gym.registry:
        register_game(GameConfig.load(config_id))
