"""
Pipeline configuration: a dataclass tree loaded from JSON, overridden by command-line flags,
then validated. Every stage hashes only the sections it depends on.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from intentpool.core.aggregate import AdvantageMode, AggregationScope
from intentpool.core.constants import (
    CONTEXT_WINDOW,
    DEFAULT_EPSILON,
    DEFAULT_GAME_COUNT,
    DEFAULT_GAMMA,
    DEFAULT_K_MAX,
    DEFAULT_TAU,
)
from intentpool.core.embed import EmbedderConfig
from intentpool.core.errors import ConfigError
from intentpool.core.utils import canonical_json, derive_seed, sha256_text

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "INTENTPOOL_EMBED_ENDPOINT"
API_KEY_ENV = "INTENTPOOL_EMBED_API_KEY"

BEHAVIORS = ("uniform", "binary_search")
SEED_NAMES = ("collect", "train", "online", "eval", "diagnostics")


@dataclass
class PathsConfig:
    """
    :param out: Root directory of every stage artifact
    :param trajectories: Existing trajectory log to use instead of collecting games
    :param cache: Embedding cache file; defaults to <out>/embed_cache.json
    """

    out: str = "runs/default"
    trajectories: Optional[str] = None
    cache: Optional[str] = None

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def cache_path(self) -> Path:
        return Path(self.cache) if self.cache else self.out_dir / "embed_cache.json"


@dataclass
class CollectConfig:
    """
    :param game: Game configuration id (see intentpool/envs/configs) or a JSON path
    :param games: Number of games to roll out
    :param behavior: Data-collection policy, "uniform" over legal intents or "binary_search" (guess games)
    :param self_play: Let the collection policy play both seats of adversarial games
    :param opponent_style: Scripted opponent when not in self-play; defaults to the game's
    :param num_workers: Parallel rollout workers; more than one dispatches to ray
    """

    game: str = "guess-157"
    games: int = DEFAULT_GAME_COUNT
    behavior: str = "uniform"
    self_play: bool = True
    opponent_style: Optional[str] = None
    num_workers: int = 1


@dataclass
class SelectionConfig:
    gamma: float = DEFAULT_GAMMA
    epsilon: float = DEFAULT_EPSILON
    tau: int = DEFAULT_TAU
    k_max: int = DEFAULT_K_MAX
    scope: str = AggregationScope.HISTORY_ACTION.value
    normalize: bool = True
    epsilon_grid: Tuple[float, ...] = (0.1, 0.01, 0.001)


@dataclass
class TrainingConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 0.5
    optimizer: str = "sgd"
    momentum: float = 0.9
    baseline: float = 0.0
    window: int = CONTEXT_WINDOW
    advantage_mode: str = AdvantageMode.AGGREGATED.value


@dataclass
class OnlineConfig:
    iterations: int = 150
    batch_size: int = 32
    refresh_every: Optional[int] = None
    window_size: Optional[int] = None
    learning_rate: Optional[float] = None


@dataclass
class EvalConfig:
    """
    :param games: Evaluation games; defaults to 200 for guessing and 25 for adversarial games
    :param role: Seat the trained policy plays in adversarial games
    :param greedy: Play the most likely legal intent instead of sampling
    """

    games: Optional[int] = None
    role: str = "alice"
    greedy: bool = False


@dataclass
class DiagnosticsConfig:
    n_grid: Tuple[int, ...] = (64, 256, 1024, 4096)
    replicates: int = 50
    bias_epsilons: Tuple[float, ...] = (0.01, 0.02, 0.05)


@dataclass
class SeedsConfig:
    """Named seeds; any left unset is derived from `base` and its name."""

    base: int = 0
    collect: Optional[int] = None
    train: Optional[int] = None
    online: Optional[int] = None
    eval: Optional[int] = None
    diagnostics: Optional[int] = None

    def resolve(self, name: str) -> int:
        if name not in SEED_NAMES:
            raise ConfigError(f"unknown seed name {name!r}; expected one of {SEED_NAMES}")
        explicit = getattr(self, name)
        return derive_seed(self.base, name) if explicit is None else int(explicit)


# sections each stage's output depends on
STAGE_SECTIONS: Dict[str, Tuple[str, ...]] = {
    "collect": ("collect", "seeds.collect"),
    "embed": ("embedder",),
    "cluster": (),
    "select-k": ("selection",),
    "aggregate": ("selection",),
    "train": ("training", "seeds.train"),
    "train-online": ("training", "online", "seeds.online", "embedder"),
    "eval": ("collect", "eval", "training", "seeds.eval", "embedder"),
    "report": ("selection", "diagnostics", "seeds.diagnostics"),
}


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    collect: CollectConfig = field(default_factory=CollectConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    online: OnlineConfig = field(default_factory=OnlineConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    seeds: SeedsConfig = field(default_factory=SeedsConfig)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineConfig":
        sections = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(sections)
        if unknown:
            raise ConfigError(f"unknown configuration sections: {sorted(unknown)}")
        kwargs = {}
        for name, value in data.items():
            section_type = sections[name].default_factory
            try:
                kwargs[name] = section_type(**value)
            except TypeError as e:
                raise ConfigError(f"section {name!r}: {e}") from None
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path: Union[str, Path]) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"configuration file {path} does not exist") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"configuration file {path} is not valid JSON: {e}") from None
        return cls.from_dict(data)

    def apply_overrides(
        self,
        seed: Optional[int] = None,
        out: Optional[str] = None,
        gamma: Optional[float] = None,
        epsilon: Optional[float] = None,
        tau: Optional[int] = None,
        k_max: Optional[int] = None,
        embedder: Optional[str] = None,
    ) -> "PipelineConfig":
        if seed is not None:
            self.seeds.base = seed
        if out is not None:
            self.paths.out = out
        if gamma is not None:
            self.selection.gamma = gamma
        if epsilon is not None:
            self.selection.epsilon = epsilon
        if tau is not None:
            self.selection.tau = tau
        if k_max is not None:
            self.selection.k_max = k_max
        if embedder is not None:
            self.embedder = EmbedderConfig(**{**self.embedder.to_json(), "kind": embedder, "api_key": self.embedder.api_key})
        return self

    def load_credentials(self) -> None:
        """Fill the remote embedder's endpoint and key from the environment when the config leaves them out."""
        if not self.embedder.endpoint and os.environ.get(ENDPOINT_ENV):
            self.embedder.endpoint = os.environ[ENDPOINT_ENV]
        if not self.embedder.api_key and os.environ.get(API_KEY_ENV):
            self.embedder.api_key = os.environ[API_KEY_ENV]

    def validate(self) -> "PipelineConfig":
        s = self.selection
        if not 0 < s.gamma <= 1:
            raise ConfigError(f"gamma must lie in (0, 1], got {s.gamma}")
        if s.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {s.epsilon}")
        if s.tau < 0:
            raise ConfigError(f"tau must be non-negative, got {s.tau}")
        if s.k_max < 2:
            raise ConfigError(f"k_max must be at least 2, got {s.k_max}")
        if any(e <= 0 for e in s.epsilon_grid):
            raise ConfigError(f"epsilon_grid values must be positive, got {list(s.epsilon_grid)}")
        try:
            AggregationScope(s.scope)
            AdvantageMode(self.training.advantage_mode)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        c = self.collect
        if c.games < 1:
            raise ConfigError(f"collect.games must be positive, got {c.games}")
        if c.behavior not in BEHAVIORS:
            raise ConfigError(f"collect.behavior must be one of {BEHAVIORS}, got {c.behavior!r}")
        if c.num_workers < 1:
            raise ConfigError(f"collect.num_workers must be positive, got {c.num_workers}")
        t = self.training
        if t.epochs < 0 or t.batch_size < 1 or t.learning_rate <= 0 or t.window < 0:
            raise ConfigError("training needs epochs >= 0, batch_size >= 1, learning_rate > 0 and window >= 0")
        if t.optimizer not in ("sgd", "momentum"):
            raise ConfigError(f"training.optimizer must be 'sgd' or 'momentum', got {t.optimizer!r}")
        o = self.online
        if o.iterations < 0 or o.batch_size < 1 or (o.refresh_every is not None and o.refresh_every < 1):
            raise ConfigError("online needs iterations >= 0, batch_size >= 1 and refresh_every >= 1 when set")
        if self.eval.games is not None and self.eval.games < 1:
            raise ConfigError(f"eval.games must be positive, got {self.eval.games}")
        if self.eval.role not in ("alice", "bob", "solo"):
            raise ConfigError(f"eval.role must be alice, bob or solo, got {self.eval.role!r}")
        d = self.diagnostics
        if len(d.n_grid) < 2 or d.replicates < 1:
            raise ConfigError("diagnostics need at least two sample sizes and one replicate")
        if self.paths.trajectories is not None and not Path(self.paths.trajectories).exists():
            raise ConfigError(f"trajectory log {self.paths.trajectories} does not exist")
        self.embedder.validate_remote()
        return self

    def section_json(self, name: str) -> Any:
        if name.startswith("seeds."):
            return self.seeds.resolve(name.split(".", 1)[1])
        if name == "embedder":
            return {"fingerprint": self.embedder.fingerprint(), "batch_size": self.embedder.batch_size}
        return asdict(getattr(self, name))

    def fingerprint(self, stage: str) -> str:
        """SHA-256 of the canonical JSON of the sections `stage` depends on; credentials never enter it."""
        try:
            names = STAGE_SECTIONS[stage]
        except KeyError:
            raise ConfigError(f"unknown stage {stage!r}") from None
        return sha256_text(canonical_json({name: self.section_json(name) for name in names}))

    def to_json(self) -> Dict[str, Any]:
        data = {f.name: asdict(getattr(self, f.name)) for f in fields(self) if f.name != "embedder"}
        data["embedder"] = self.embedder.to_json()
        return data
