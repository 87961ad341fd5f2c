"""
This module provides functionality to load and manage game configurations.
"""

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Type

from intentpool.core.errors import ConfigError
from intentpool.core.trajectory import Task

from .bargain import BargainGame
from .game import AbstractGame
from .guess import GuessGame
from .negotiate import NegotiationGame

CURRENT_DIR = os.path.dirname(os.path.abspath(__file__))
CONFIG_DIR = os.path.join(CURRENT_DIR, "configs")
GAMES = sorted(name.split(".")[0] for name in os.listdir(CONFIG_DIR) if name.endswith(".json"))

GAME_KINDS: Dict[str, Type[AbstractGame]] = {
    cls.get_game_kind(): cls for cls in (GuessGame, BargainGame, NegotiationGame)
}


@dataclass
class GameConfig:
    """
    A class to represent a specific game configuration.
    :param id: The unique identifier for the game configuration
    :param kind: The game kind (guess, bargain or negotiate)
    :param params: Keyword arguments of the game class
    :param opponent: The default scripted opponent style for two-seat games
    :param description: A short description of the configuration
    """

    id: str
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    opponent: str = "fixed_threshold"
    description: str = ""

    def __post_init__(self):
        if self.kind not in GAME_KINDS:
            raise ConfigError(f"game {self.id!r} has unknown kind {self.kind!r}; expected one of {sorted(GAME_KINDS)}")

    @property
    def game_class(self) -> Type[AbstractGame]:
        return GAME_KINDS[self.kind]

    @property
    def task(self) -> Task:
        return self.game_class.task

    @property
    def adversarial(self) -> bool:
        return len(self.game_class.seats) > 1

    def make_game(self, seed: int, **overrides) -> AbstractGame:
        return self.game_class(seed=seed, **{**self.params, **overrides})

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json_file(cls, file_path: str) -> "GameConfig":
        with open(file_path, "r", encoding="utf-8") as file:
            config_json = json.load(file)
        missing = [key for key in ("id", "kind") if key not in config_json]
        if missing:
            raise ConfigError(f"game configuration {file_path} is missing {missing}")
        return cls(**config_json)

    @classmethod
    def load(cls, id_or_path: str) -> "GameConfig":
        """Load a configuration from a JSON path or by id from the shipped configurations."""
        if os.path.exists(id_or_path) and id_or_path.endswith(".json"):
            return cls.from_json_file(id_or_path)
        path = os.path.join(CONFIG_DIR, f"{id_or_path}.json")
        if not os.path.exists(path):
            raise ConfigError(f"unknown game configuration {id_or_path!r}; shipped: {GAMES}")
        return cls.from_json_file(path)
