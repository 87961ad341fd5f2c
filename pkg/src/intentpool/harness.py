"""
The staged pipeline: collect -> embed -> cluster -> select-k -> aggregate -> train ->
train-online -> eval -> report. Each stage writes its artifacts under <out>/<stage>/ with a
manifest of the config fingerprint and input/output checksums, and is skipped when nothing
it depends on has changed.
"""

import json
import logging
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

try:
    import ray

    RAY_AVAILABLE = True
except ImportError:
    RAY_AVAILABLE = False

from intentpool.config import PipelineConfig
from intentpool.core.aggregate import (
    AdvantageMode,
    AggregationScope,
    assign_advantages,
    build_reward_table,
    load_reward_table,
    save_reward_table,
)
from intentpool.core.constants import EVAL_GAMES_ADVERSARIAL, EVAL_GAMES_GUESS
from intentpool.core.embed import embed_corpus, load_matrix, save_matrix
from intentpool.core.errors import ArtifactChecksumError, ArtifactError, ComputationError, ValidationError
from intentpool.core.granularity import select_k, sweep_split_scores, write_split_curve
from intentpool.core.hac import build_dendrogram, cut_dendrogram, load_assignment, load_dendrogram, save_assignment, save_dendrogram
from intentpool.core.metrics import metric_sweep, write_metric_sweep
from intentpool.core.projection import UtteranceLabeler
from intentpool.core.trajectory import Task, TrajectorySet, parse_trajectories, write_trajectories
from intentpool.core.utils import atomic_write_text, read_json, sha256_file, write_json
from intentpool.experiments.loop import EnvArgs, run_games
from intentpool.experiments.policy_agent import PolicyAgent
from intentpool.training.batch import build_policy_batch
from intentpool.training.diagnostics import (
    BanditGenerator,
    advantage_variance_report,
    convergence_slope_check,
    gradient_variance_report,
)
from intentpool.training.policy import PolicyParams, load_checkpoint, save_checkpoint
from intentpool.training.reinforce import train_offline
from intentpool.training.tabular import bias_scaling

logger = logging.getLogger(__name__)

STAGES = ("collect", "embed", "cluster", "select-k", "aggregate", "train", "train-online", "eval", "report")

# metric sweeps stop here even when k_max allows more cuts
METRIC_K_LIMIT = 64

TRAJECTORIES = "collect/trajectories.traj.jsonl"
OUTCOMES = "collect/outcomes.jsonl"
EMBEDDINGS = "embed/embeddings.f32"
DENDROGRAM = "cluster/dendrogram.json"
METRICS = "cluster/metrics.csv"
SPLIT_SCORES = "select-k/split_scores.csv"
SELECTION = "select-k/selection.json"
ASSIGNMENT = "aggregate/assignment.json"
CENTROIDS = "aggregate/assignment.centroids.f64"
REWARD_TABLE = "aggregate/reward_table.json"
ADVANTAGES = "aggregate/advantages.csv"
VARIANCE = "aggregate/variance.json"
LOSS_CURVES = "train/loss_curves.csv"
ONLINE_POLICY = "train-online/policy.json"
REWARD_CURVE = "train-online/reward_curve.csv"
EVAL_SUMMARY = "eval/summary.csv"


def policy_path(mode: str) -> str:
    return f"train/policy_{AdvantageMode(mode).value}.json"


def checkpoint_files(rel: str) -> List[str]:
    """A checkpoint's JSON record and its logits block."""
    return [rel, rel[: -len(".json")] + ".logits.f64"]


@dataclass
class StageResult:
    stage: str
    skipped: bool
    outputs: Dict[str, str] = field(default_factory=dict)
    elapsed: float = 0.0


# --------------------------------------------------------------------------- collection workers


def _collection_agent(game: str, behavior: str):
    from intentpool.envs import BinarySearchAgent, GameConfig, GuessGame

    config = GameConfig.load(game)
    template_game = config.make_game(0)
    if behavior == "binary_search":
        if not isinstance(template_game, GuessGame):
            raise ValidationError(f"binary_search collection only plays guessing games, not {config.kind}")
        return BinarySearchAgent(template_game.attribute_intents)
    return PolicyAgent(PolicyParams.initial(template_game.action_intents(), window=0))


def collect_games(
    game: str,
    behavior: str,
    self_play: bool,
    opponent_style: Optional[str],
    first_seed: int,
    n_games: int,
) -> List[Tuple[str, List[dict], dict]]:
    """Play games first_seed .. first_seed + n_games - 1 and return (game_id, trajectory records, outcome)."""
    env_args = EnvArgs(game_name=game, seed=first_seed, opponent_style=opponent_style)
    agent = _collection_agent(game, behavior)
    episodes = run_games(env_args, agent, n_games, self_play=self_play, desc="Collecting games")
    return [(ep.game_id, [traj.to_record() for traj in ep.trajectories], ep.outcome) for ep in episodes]


if RAY_AVAILABLE:

    @ray.remote
    def collect_games_ray(game, behavior, self_play, opponent_style, first_seed, n_games):
        return collect_games(game, behavior, self_play, opponent_style, first_seed, n_games)


def _chunks(n: int, parts: int) -> List[Tuple[int, int]]:
    """Contiguous (offset, count) chunks covering range(n)."""
    size, extra = divmod(n, parts)
    chunks, offset = [], 0
    for i in range(parts):
        count = size + (1 if i < extra else 0)
        if count:
            chunks.append((offset, count))
        offset += count
    return chunks


# --------------------------------------------------------------------------- pipeline


class Pipeline:
    """
    Runs pipeline stages against one output directory.

    Args:
        config: a validated `PipelineConfig`.
        force: re-run stages even when their manifest is current.
        logging_level: level of the `<out>/pipeline.log` file handler and of the root logger.
        client: optional embedding client passed to the remote embedder (tests inject fakes).
    """

    def __init__(
        self,
        config: PipelineConfig,
        force: bool = False,
        logging_level: int = logging.INFO,
        client=None,
    ):
        self.config = config
        self.force = force
        self.logging_level = logging_level
        self.client = client
        self.out = config.paths.out_dir
        self._cache: Dict[str, object] = {}
        self._handler: Optional[logging.Handler] = None
        self.stage_fns: Dict[str, Callable[[], List[Path]]] = {
            "collect": self.collect,
            "embed": self.embed,
            "cluster": self.cluster,
            "select-k": self.select_k,
            "aggregate": self.aggregate,
            "train": self.train,
            "train-online": self.train_online,
            "eval": self.eval,
            "report": self.report,
        }

    # ---------------------------------------------------------------- logging

    def _set_logger(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        self._handler = logging.FileHandler(self.out / "pipeline.log")
        self._handler.setLevel(self.logging_level)
        formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        self._handler.setFormatter(formatter)
        root_logger = logging.getLogger()
        root_logger.setLevel(self.logging_level)
        root_logger.addHandler(self._handler)
        # keep request dumps of the embedding client out of debug logs
        for name in ("openai._base_client", "httpx"):
            logging.getLogger(name).setLevel(max(logging.INFO, self.logging_level))

    def _unset_logger(self) -> None:
        if self._handler is not None:
            logging.getLogger().removeHandler(self._handler)
            self._handler.close()
            self._handler = None

    # ---------------------------------------------------------------- paths and manifests

    def path(self, rel: str) -> Path:
        return self.out / rel

    def _rel(self, path: Path) -> str:
        try:
            return Path(path).relative_to(self.out).as_posix()
        except ValueError:
            return str(path)

    def manifest_path(self, stage: str) -> Path:
        return self.out / stage / "manifest.json"

    def read_manifest(self, stage: str) -> Optional[dict]:
        path = self.manifest_path(stage)
        return read_json(path) if path.exists() else None

    def _recorded_checksum(self, path: Path) -> Optional[str]:
        rel = self._rel(path)
        if rel == str(path):
            return None
        manifest = self.read_manifest(rel.split("/", 1)[0])
        if manifest is None:
            return None
        return manifest["outputs"].get(rel)

    def _check_inputs(self, stage: str, inputs: Sequence[Path]) -> Dict[str, str]:
        missing = [self._rel(p) for p in inputs if not Path(p).exists()]
        if missing:
            raise ArtifactError(f"stage {stage} is missing upstream artifacts: {', '.join(missing)}")
        checksums = {}
        for p in inputs:
            actual = sha256_file(p)
            expected = self._recorded_checksum(Path(p))
            if expected is not None and expected != actual:
                raise ArtifactChecksumError(self._rel(p), expected, actual)
            checksums[self._rel(p)] = actual
        return checksums

    def _is_current(self, stage: str, fingerprint: str, inputs: Dict[str, str]) -> bool:
        manifest = self.read_manifest(stage)
        if manifest is None:
            return False
        if manifest.get("config_fingerprint") != fingerprint or manifest.get("inputs") != inputs:
            return False
        for rel, checksum in manifest.get("outputs", {}).items():
            path = self.path(rel)
            if not path.exists() or sha256_file(path) != checksum:
                logger.info(f"Stage {stage}: output {rel} changed since its manifest was written")
                return False
        return True

    def stage_inputs(self, stage: str) -> List[Path]:
        c = self.config
        paths = {
            "collect": [Path(c.paths.trajectories)] if c.paths.trajectories else [],
            "embed": [TRAJECTORIES],
            "cluster": [EMBEDDINGS],
            "select-k": [TRAJECTORIES, EMBEDDINGS, DENDROGRAM],
            "aggregate": [TRAJECTORIES, EMBEDDINGS, DENDROGRAM, SELECTION],
            "train": [TRAJECTORIES, ASSIGNMENT, CENTROIDS, ADVANTAGES],
            "train-online": [TRAJECTORIES, ASSIGNMENT, CENTROIDS, REWARD_TABLE]
            + checkpoint_files(policy_path(c.training.advantage_mode)),
            "eval": [TRAJECTORIES, ASSIGNMENT, CENTROIDS]
            + [f for mode in AdvantageMode for f in checkpoint_files(policy_path(mode.value))]
            + (checkpoint_files(ONLINE_POLICY) if self.path(ONLINE_POLICY).exists() else []),
            "report": [
                TRAJECTORIES,
                ASSIGNMENT,
                CENTROIDS,
                METRICS,
                SPLIT_SCORES,
                SELECTION,
                ADVANTAGES,
                VARIANCE,
                LOSS_CURVES,
                EVAL_SUMMARY,
            ]
            + ([REWARD_CURVE] if self.path(REWARD_CURVE).exists() else []),
        }[stage]
        return [p if isinstance(p, Path) else self.path(p) for p in paths]

    # ---------------------------------------------------------------- running

    def run(self, stages: Sequence[str]) -> List[StageResult]:
        unknown = [s for s in stages if s not in STAGES]
        if unknown:
            raise ValidationError(f"unknown stages {unknown}; expected some of {STAGES}")
        self._set_logger()
        results = []
        try:
            for stage in stages:
                results.append(self.run_stage(stage))
        except Exception as e:
            logger.error(f"Pipeline failed: {type(e).__name__}: {e}\n{traceback.format_exc()}")
            raise
        finally:
            self._unset_logger()
        return results

    def run_all(self) -> List[StageResult]:
        return self.run(STAGES)

    def run_stage(self, stage: str) -> StageResult:
        fingerprint = self.config.fingerprint(stage)
        inputs = self._check_inputs(stage, self.stage_inputs(stage))
        if not self.force and self._is_current(stage, fingerprint, inputs):
            logger.info(f"Stage {stage} is up to date, skipping")
            manifest = self.read_manifest(stage)
            return StageResult(stage, skipped=True, outputs=manifest["outputs"])

        logger.info(f"Running stage {stage}")
        (self.out / stage).mkdir(parents=True, exist_ok=True)
        start = time.time()
        outputs = self.stage_fns[stage]()
        elapsed = time.time() - start
        checksums = {self._rel(p): sha256_file(p) for p in outputs}
        manifest = {
            "stage": stage,
            "config_fingerprint": fingerprint,
            "inputs": inputs,
            "outputs": checksums,
            "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        write_json(self.manifest_path(stage), manifest)
        logger.info(f"Stage {stage} finished in {elapsed:.2f}s with {len(checksums)} outputs")
        return StageResult(stage, skipped=False, outputs=checksums, elapsed=elapsed)

    # ---------------------------------------------------------------- loaders

    def _memo(self, key: str, load: Callable[[], object]):
        if key not in self._cache:
            self._cache[key] = load()
        return self._cache[key]

    def trajectory_set(self) -> TrajectorySet:
        return self._memo("trajectories", lambda: parse_trajectories(self.path(TRAJECTORIES)))

    def embeddings(self):
        return self._memo("embeddings", lambda: load_matrix(self.path(EMBEDDINGS)))

    def dendrogram(self):
        return self._memo("dendrogram", lambda: load_dendrogram(self.path(DENDROGRAM)))

    def assignment(self):
        return self._memo("assignment", lambda: load_assignment(self.path(ASSIGNMENT)))

    def game_config(self):
        from intentpool.envs import GameConfig

        return GameConfig.load(self.config.collect.game)

    def labeler(self) -> UtteranceLabeler:
        return self._memo(
            "labeler",
            lambda: UtteranceLabeler(self.assignment(), self.trajectory_set().corpus, self.config.embedder, self.client),
        )

    def _invalidate(self, *keys: str) -> None:
        for key in keys:
            self._cache.pop(key, None)

    # ---------------------------------------------------------------- stages

    def collect(self) -> List[Path]:
        c = self.config.collect
        out_traj, out_outcomes = self.path(TRAJECTORIES), self.path(OUTCOMES)
        self._invalidate("trajectories", "labeler")
        if self.config.paths.trajectories:
            trajectory_set = parse_trajectories(self.config.paths.trajectories)
            logger.info(f"Using {len(trajectory_set)} logged trajectories from {self.config.paths.trajectories}")
            write_trajectories(trajectory_set, out_traj)
            atomic_write_text(out_outcomes, "")
            return [out_traj, out_outcomes]

        seed = self.config.seeds.resolve("collect")
        chunks = _chunks(c.games, c.num_workers)
        if c.num_workers > 1:
            if not RAY_AVAILABLE:
                raise ValidationError("collect.num_workers > 1 requires ray; install it or use a single worker")
            if not ray.is_initialized():
                ray.init(num_cpus=c.num_workers)
            futures = [
                collect_games_ray.remote(c.game, c.behavior, c.self_play, c.opponent_style, seed + offset, count)
                for offset, count in chunks
            ]
            played = [game for chunk in ray.get(futures) for game in chunk]
        else:
            played = collect_games(c.game, c.behavior, c.self_play, c.opponent_style, seed, c.games)

        records = [record for _, game_records, _ in played for record in game_records]
        trajectory_set = TrajectorySet.from_records(records)
        write_trajectories(trajectory_set, out_traj)
        task = self.game_config().task.value
        lines = [json.dumps({"game_id": game_id, "task": task, **outcome}, sort_keys=True) for game_id, _, outcome in played]
        atomic_write_text(out_outcomes, "".join(line + "\n" for line in lines))
        logger.info(f"Collected {len(played)} games, {len(trajectory_set)} trajectories, {trajectory_set.n_steps} steps")
        return [out_traj, out_outcomes]

    def embed(self) -> List[Path]:
        self._invalidate("embeddings", "labeler")
        m = embed_corpus(self.config.embedder, self.trajectory_set(), self.config.paths.cache_path, self.client)
        out = self.path(EMBEDDINGS)
        save_matrix(m, out)
        return [out, out.with_name(out.name + ".json")]

    def cluster(self) -> List[Path]:
        self._invalidate("dendrogram")
        m = self.embeddings()
        dg = build_dendrogram(m)
        save_dendrogram(dg, self.path(DENDROGRAM))
        k_top = min(self.config.selection.k_max, m.n - 2, METRIC_K_LIMIT)
        reports = metric_sweep(m, dg, range(2, k_top + 1)) if k_top >= 3 else []
        write_metric_sweep(reports, self.path(METRICS))
        if reports:
            best = max(reports, key=lambda r: r.combined)
            logger.info(f"Best combined clustering score {best.combined:.3f} at k={best.k}")
        return [self.path(DENDROGRAM), self.path(METRICS)]

    def split_curve(self, epsilon: Optional[float] = None):
        s = self.config.selection
        return sweep_split_scores(
            self.trajectory_set(),
            self.dendrogram(),
            self.embeddings(),
            k_max=s.k_max,
            gamma=s.gamma,
            epsilon=s.epsilon if epsilon is None else epsilon,
            tau=s.tau,
            scope=AggregationScope(s.scope),
            normalize=s.normalize,
        )

    def select_k(self) -> List[Path]:
        curve = self.split_curve()
        k_used, fallback = curve.k_star, curve.k_star is None
        if fallback:
            k_used = max(curve.scores)
            logger.warning(
                f"No k satisfies SplitScore < {curve.epsilon} for {curve.tau + 1} consecutive cuts up to "
                f"{curve.k_max}; aggregating at k={k_used}"
            )
        write_split_curve(curve, self.path(SPLIT_SCORES), self.path(SELECTION), k_used=k_used, fallback=fallback)
        return [self.path(SPLIT_SCORES), self.path(SELECTION)]

    def aggregate(self) -> List[Path]:
        self._invalidate("assignment", "labeler")
        s = self.config.selection
        k = read_json(self.path(SELECTION))["k_used"]
        trajectory_set = self.trajectory_set()
        ca = cut_dendrogram(self.dendrogram(), k, self.embeddings())
        table = build_reward_table(trajectory_set, ca, s.gamma, AggregationScope(s.scope))
        advset = assign_advantages(trajectory_set, ca, table)
        variance = advantage_variance_report(advset)

        save_assignment(ca, self.path(ASSIGNMENT))
        save_reward_table(table, self.path(REWARD_TABLE))
        rows = []
        for traj, terminal, discounted, aggregated in zip(
            trajectory_set,
            advset.values(AdvantageMode.TERMINAL),
            advset.values(AdvantageMode.DISCOUNTED),
            advset.values(AdvantageMode.AGGREGATED),
        ):
            for step, a_term, a_disc, a_agg in zip(traj.steps, terminal, discounted, aggregated):
                rows.append((traj.game_id, traj.player.value, step.t, a_term, a_disc, a_agg))
        frame = pd.DataFrame(rows, columns=["game_id", "player", "t", "terminal", "discounted", "aggregated"])
        frame.to_csv(self.path(ADVANTAGES), index=False)
        write_json(self.path(VARIANCE), dict(variance.to_json(), k=k, table_keys=len(table)))
        logger.info(f"Aggregated at k={k}: {len(table)} intention keys over {trajectory_set.n_steps} steps")
        return [self.path(ASSIGNMENT), self.path(CENTROIDS), self.path(REWARD_TABLE), self.path(ADVANTAGES), self.path(VARIANCE)]

    def _advantages(self) -> Dict[AdvantageMode, Tuple[np.ndarray, ...]]:
        frame = pd.read_csv(self.path(ADVANTAGES), dtype={"game_id": str, "player": str})
        groups = {key: rows.sort_values("t") for key, rows in frame.groupby(["game_id", "player"], sort=False)}
        keys = [(traj.game_id, traj.player.value) for traj in self.trajectory_set()]
        missing = [key for key in keys if key not in groups]
        if missing:
            raise ArtifactError(f"{ADVANTAGES} has no rows for {len(missing)} trajectories, e.g. {missing[0]}")
        return {
            mode: tuple(groups[key][mode.value].to_numpy(dtype=np.float64) for key in keys) for mode in AdvantageMode
        }

    def policy_batches(self):
        t = self.config.training
        bank = self.game_config().make_game(0).bank
        advantages = self._advantages()
        return {
            mode: build_policy_batch(self.trajectory_set(), self.assignment(), values, bank.intent_of, t.window)
            for mode, values in advantages.items()
        }

    def train(self) -> List[Path]:
        t = self.config.training
        seed = self.config.seeds.resolve("train")
        actions = self.game_config().make_game(0).action_intents()
        outputs, curves = [], []
        for mode, batch in self.policy_batches().items():
            logger.info(f"Training offline REINFORCE with {mode.value} advantages")
            p0 = PolicyParams.initial(actions, batch.contexts(), t.learning_rate, seed, t.window)
            result = train_offline(
                p0, batch, t.epochs, t.batch_size, t.learning_rate, seed, t.optimizer, t.momentum, t.baseline
            )
            rel = policy_path(mode.value)
            save_checkpoint(result.params, self.path(rel))
            outputs += [self.path(f) for f in checkpoint_files(rel)]
            curves += [(mode.value, epoch + 1, loss) for epoch, loss in enumerate(result.loss_curve)]
        pd.DataFrame(curves, columns=["mode", "epoch", "loss"]).to_csv(self.path(LOSS_CURVES), index=False)
        return outputs + [self.path(LOSS_CURVES)]

    def _seat(self) -> Optional[str]:
        return self.config.eval.role if self.game_config().adversarial else None

    def train_online(self) -> List[Path]:
        from intentpool.training.online import train_online

        o, c = self.config.online, self.config.collect
        p = load_checkpoint(self.path(policy_path(self.config.training.advantage_mode)))
        table = load_reward_table(self.path(REWARD_TABLE))
        env = EnvArgs(c.game, seat=self._seat(), opponent_style=c.opponent_style).make_env()
        try:
            result = train_online(
                p,
                env,
                self.labeler(),
                table,
                o.iterations,
                o.batch_size,
                o.refresh_every,
                o.window_size,
                o.learning_rate,
                seed=self.config.seeds.resolve("online"),
            )
        finally:
            env.close()
        save_checkpoint(result.params, self.path(ONLINE_POLICY))
        curve = pd.DataFrame({"iteration": range(1, len(result.reward_curve) + 1), "mean_reward": result.reward_curve})
        curve.to_csv(self.path(REWARD_CURVE), index=False)
        return [self.path(f) for f in checkpoint_files(ONLINE_POLICY)] + [self.path(REWARD_CURVE)]

    def eval_policies(self) -> Dict[str, PolicyParams]:
        t = self.config.training
        first = load_checkpoint(self.path(policy_path(AdvantageMode.TERMINAL.value)))
        policies = {"untrained": PolicyParams.initial(first.actions, window=t.window)}
        for mode in AdvantageMode:
            policies[mode.value] = load_checkpoint(self.path(policy_path(mode.value)))
        if self.path(ONLINE_POLICY).exists():
            policies["online"] = load_checkpoint(self.path(ONLINE_POLICY))
        return policies

    def eval(self) -> List[Path]:
        from intentpool.envs import write_eval_summary

        e, c = self.config.eval, self.config.collect
        config = self.game_config()
        seed = self.config.seeds.resolve("eval")
        n_games = e.games or (EVAL_GAMES_ADVERSARIAL if config.adversarial else EVAL_GAMES_GUESS)
        seat = self._seat()
        role = seat or "solo"
        env_args = EnvArgs(c.game, seed=seed, seat=seat, opponent_style=c.opponent_style)
        rows = []
        for name, params in self.eval_policies().items():
            agent = PolicyAgent(params, self.labeler() if params.window > 0 else None, seed=seed, greedy=e.greedy)
            episodes = run_games(env_args, agent, n_games, seed=seed, desc=f"Evaluating {name}")
            trajectories = [ep.trajectory_of(seat or ep.trajectories[0].player) for ep in episodes]
            rows += _evaluation_rows(config.task, trajectories, [ep.outcome for ep in episodes], role, name)
        frame = write_eval_summary(rows, self.path(EVAL_SUMMARY))
        logger.info(f"Evaluation over {n_games} games per policy:\n{frame.to_string(index=False)}")
        return [self.path(EVAL_SUMMARY)]

    def report(self) -> List[Path]:
        s, d = self.config.selection, self.config.diagnostics
        seed = self.config.seeds.resolve("diagnostics")
        trajectory_set = self.trajectory_set()
        selection = read_json(self.path(SELECTION))
        variance = read_json(self.path(VARIANCE))
        split = pd.read_csv(self.path(SPLIT_SCORES))
        scores = dict(zip(split.k.astype(int), split.split_score))
        ablation = pd.DataFrame(
            {"epsilon": list(s.epsilon_grid), "k_star": [select_k(scores, eps, s.tau) for eps in s.epsilon_grid]}
        )
        bound_holds = bool(np.all((split.split_score >= 0) & (split.split_score <= split.affected_fraction + 1e-12)))

        batches = self.policy_batches()
        actions = self.game_config().make_game(0).action_intents()
        contexts = batches[AdvantageMode.DISCOUNTED].contexts()
        p = PolicyParams.initial(actions, contexts, window=self.config.training.window)
        grad = gradient_variance_report(p, batches[AdvantageMode.DISCOUNTED], batches[AdvantageMode.AGGREGATED])

        generator = BanditGenerator()
        slope = convergence_slope_check(generator.policy(seed), generator, d.n_grid, d.replicates, seed)
        bias = bias_scaling(d.bias_epsilons, seed=seed, policy_seed=seed)

        report_dir = self.out / "report"
        outputs = []
        for name, frame in [
            ("epsilon_ablation.csv", ablation),
            ("split_scores.csv", split),
            ("metrics.csv", pd.read_csv(self.path(METRICS))),
            ("loss_curves.csv", pd.read_csv(self.path(LOSS_CURVES))),
            ("eval.csv", pd.read_csv(self.path(EVAL_SUMMARY))),
            (
                "convergence.csv",
                pd.DataFrame(
                    {
                        "N": slope.n_grid,
                        "error_raw": [slope.errors_raw[n] for n in slope.n_grid],
                        "error_aggregated": [slope.errors_aggregated[n] for n in slope.n_grid],
                    }
                ),
            ),
            ("bias.csv", pd.DataFrame([r.to_json() for r in bias.reports])),
        ]:
            frame.to_csv(report_dir / name, index=False)
            outputs.append(report_dir / name)
        if self.path(REWARD_CURVE).exists():
            pd.read_csv(self.path(REWARD_CURVE)).to_csv(report_dir / "reward_curve.csv", index=False)
            outputs.append(report_dir / "reward_curve.csv")

        summary = {
            "game": self.config.collect.game,
            "trajectories": len(trajectory_set),
            "steps": trajectory_set.n_steps,
            "utterances": len(trajectory_set.corpus),
            "k_star": selection["k_star"],
            "k_used": selection["k_used"],
            "split_score_bound_holds": bound_holds,
            "variance": variance,
            "gradient_variance": grad.to_json(),
            "convergence": {
                "slope_raw": slope.slope_raw,
                "slope_aggregated": slope.slope_aggregated,
                "within_tolerance": slope.within_tolerance,
                "aggregated_dominates": slope.aggregated_dominates,
            },
            "bias": {"constant": bias.constant, "slope": bias.slope, "linear": bias.linear},
        }
        write_json(report_dir / "summary.json", summary)
        text = format_summary(summary, ablation, pd.read_csv(self.path(EVAL_SUMMARY)))
        atomic_write_text(report_dir / "summary.txt", text)
        print(text)
        return outputs + [report_dir / "summary.json", report_dir / "summary.txt"]


def _evaluation_rows(task: Task, trajectories, outcomes, role: str, policy: str):
    from intentpool.envs.evaluate import evaluate_games

    try:
        return evaluate_games(task, trajectories, outcomes, role, policy)
    except ValidationError as e:
        raise ComputationError(f"evaluation of policy {policy} failed: {e}") from e


def format_summary(summary: dict, ablation: pd.DataFrame, evaluation: pd.DataFrame) -> str:
    v, g, c, b = summary["variance"], summary["gradient_variance"], summary["convergence"], summary["bias"]
    k_star = summary["k_star"] if summary["k_star"] is not None else "none"
    lines = [
        "===== INTENTPOOL REPORT =====",
        f"Game: {summary['game']} ({summary['trajectories']} trajectories, {summary['steps']} steps, "
        f"{summary['utterances']} utterances)",
        f"Selected granularity: k* = {k_star}, aggregated at k = {summary['k_used']}",
        f"SplitScore bound holds: {summary['split_score_bound_holds']}",
        "Epsilon ablation: "
        + ", ".join(f"{row.epsilon:g} -> {row.k_star if pd.notna(row.k_star) else 'none'}" for row in ablation.itertuples()),
        "",
        "Advantage variance:",
        f"  Var(A) = {v['var_raw']:.6g}",
        f"  Var(A~) = {v['var_aggregated']:.6g}",
        f"  E[Var(A|key)] = {v['expected_conditional']:.6g} (identity residual {v['residual']:.3g})",
        f"  ratio = {v['ratio']:.4f}",
        f"Gradient covariance trace: raw {g['trace_raw']:.6g}, aggregated {g['trace_aggregated']:.6g}, "
        f"ratio {g['ratio']:.4f}",
        f"Convergence slope: raw {c['slope_raw']:.3f}, aggregated {c['slope_aggregated']:.3f}",
        f"Bisimulation bias: C = {b['constant']:.4g}, log-log slope {b['slope']:.3f}, linear {b['linear']}",
        "",
        "Evaluation:",
    ]
    for row in evaluation.itertuples():
        lines.append(f"  {row.policy:<12} {row.role:<6} {row.metric:<22} {row.value:.4f} (N={row.N})")
    return "\n".join(lines) + "\n"
