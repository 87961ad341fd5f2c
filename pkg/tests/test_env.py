import json

import gymnasium as gym
import numpy as np
import pytest

from helpers import guess_records
from intentpool.core.aggregate import project_trajectory
from intentpool.core.embed import EmbedderConfig, embed_corpus
from intentpool.core.errors import ComputationError, ConfigError, IllegalActionError, ValidationError
from intentpool.core.hac import build_dendrogram, cut_dendrogram
from intentpool.core.projection import UtteranceLabeler
from intentpool.core.trajectory import Player, Speaker, TrajectorySet
from intentpool.envs import BargainGame, GameConfig, GameEnv, env_id, scripted_opponent
from intentpool.envs.game_config import GAMES
from intentpool.envs.opponents import BinarySearchAgent
from intentpool.envs.spaces import AnyDict, IntentActionSpace
from intentpool.experiments import Agent, AgentInfo, EnvArgs, PolicyAgent, rollout, run_games
from intentpool.training import PolicyParams


class ConstantAgent(Agent):
    def __init__(self, action):
        self.action = action

    def get_action(self, obs):
        return self.action, AgentInfo(intent=self.action)


class BrokenAgent(Agent):
    def get_action(self, obs):
        raise RuntimeError("lost connection to the model")


def test_shipped_configs_are_registered():
    assert {"guess-16", "guess-157", "bargain-1", "negotiate-6"} <= set(GAMES)
    for config_id in GAMES:
        assert env_id(config_id) in gym.registry
    assert env_id("guess-16") == env_id("intentpool/guess-16") == "intentpool/guess-16"


def test_game_config_loading(tmp_path):
    config = GameConfig.load("bargain-1")
    assert config.game_class is BargainGame and config.adversarial
    assert config.make_game(seed=0, T=2).T == 2
    with pytest.raises(ConfigError):
        GameConfig.load("chess-1")
    with pytest.raises(ConfigError):
        GameConfig(id="odd", kind="chess")
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({"id": "tiny", "kind": "guess", "params": {"n_items": 4, "max_turns": 4}}))
    assert GameConfig.load(str(path)).make_game(seed=0).items == GameConfig.load("guess-16").make_game(seed=0).items[:4]
    path.write_text(json.dumps({"kind": "guess"}))
    with pytest.raises(ConfigError):
        GameConfig.load(str(path))


def test_intent_action_space():
    space = IntentActionSpace(["ask_hint", "guess"], seed=0)
    assert space.contains("guess:red kettle")
    assert space.contains("ask_hint")
    assert not space.contains("fly")
    assert not space.contains(3)
    assert space.sample() in space.intents
    assert AnyDict().contains({}) and not AnyDict().contains([])


def test_reset_and_step_guess_env():
    env = EnvArgs("guess-16").make_env()
    obs, info = env.reset(seed=3)
    assert info["game_id"] == "guess-16-000003"
    assert obs["seat"] == "solo" and obs["turn"] == 1 and len(obs["candidates"]) == 16
    obs, reward, terminated, truncated, info = env.step("ask_hint")
    assert (reward, terminated, truncated) == (0.0, False, False)
    assert info["intent"] == "ask_hint" and obs["turns_left"] == 7
    assert obs["transcript"][0][1] is not None


def test_binary_search_rollout():
    env = EnvArgs("guess-16").make_env()
    agent = BinarySearchAgent(env.unwrapped.game.attribute_intents)
    episode = rollout(env, agent, seed=5, game_id="bs-5")
    assert episode.outcome["solved"] and episode.outcome["turns"] == 5
    traj = episode.trajectory_of(Player.SOLO)
    assert traj.game_id == "bs-5" and traj.terminal_reward == 1.0
    actions, observations = episode.intents["solo"]
    assert actions[-1] == "guess" and observations[-1] == "answer_correct"


def test_opponent_moves_first_for_bob():
    env = EnvArgs("bargain-1", seat="bob").make_env()
    obs, _ = env.reset(seed=0)
    assert obs["legal_intents"] == ["open"]
    obs, *_ = env.step("open")
    # alice (scripted) has proposed
    assert "accept" in obs["legal_intents"] and obs["pending_value"] is not None


def test_game_kwargs_override_the_config():
    env = EnvArgs("guess-16", game_kwargs={"max_turns": 2}).make_env()
    env.reset(seed=0)
    assert isinstance(env, GameEnv) and env.game.max_turns == 2


def test_unknown_seat():
    with pytest.raises(ValidationError):
        GameEnv(BargainGame, seat="solo")


def test_run_games_is_deterministic():
    def play():
        episodes = run_games(EnvArgs("bargain-3"), scripted_opponent("tit_for_tat"), 3, seed=10)
        return [(e.game_id, e.outcome, e.intents) for e in episodes]

    first = play()
    assert [game_id for game_id, _, _ in first] == ["bargain-3-000010", "bargain-3-000011", "bargain-3-000012"]
    assert first == play()


def test_self_play_fills_both_seats():
    (episode,) = run_games(EnvArgs("bargain-1"), scripted_opponent("fixed_threshold"), 1, self_play=True)
    assert episode.outcome["deal"] and episode.outcome["t_ev"] == 1
    assert {traj.player for traj in episode.trajectories} == {Player.ALICE, Player.BOB}


def test_truncated_rollout_returns_partial_episode():
    env = EnvArgs("guess-16", max_steps=2).make_env()
    episode = rollout(env, ConstantAgent("ask_hint"), seed=0)
    traj = episode.trajectory_of(Player.SOLO)
    assert traj.horizon == 2 and traj.terminal_reward == 0.0


def test_failures_name_the_game():
    with pytest.raises(IllegalActionError):
        run_games(EnvArgs("bargain-1"), ConstantAgent("accept"), 2)
    with pytest.raises(ComputationError, match="guess-16-000007"):
        run_games(EnvArgs("guess-16"), BrokenAgent(), 1, seed=7)


# --------------------------------------------------------------------------- policies playing games


@pytest.fixture(scope="module")
def labeled_corpus():
    trajectory_set = TrajectorySet.from_records(guess_records(30, seed=1))
    cfg = EmbedderConfig(d=16)
    m = embed_corpus(cfg, trajectory_set)
    ca = cut_dendrogram(build_dendrogram(m), 6, m)
    return trajectory_set, ca, UtteranceLabeler(ca, trajectory_set.corpus, cfg)


def test_labeler_keeps_corpus_labels(labeled_corpus):
    trajectory_set, ca, labeler = labeled_corpus
    for traj in trajectory_set.trajectories[:10]:
        assert labeler.project(traj).labels == project_trajectory(traj, ca).labels
    assert labeler.n_embedded == 0


def test_labeler_projects_new_text_once(labeled_corpus):
    _, ca, labeler = labeled_corpus
    first = labeler.label("Honestly, is it made of metal?", Speaker.AGENT)
    assert 0 <= first < ca.k
    before = labeler.n_embedded
    assert labeler.label("Honestly, is it made of metal?", Speaker.AGENT) == first
    assert labeler.n_embedded == before
    assert labeler.pairs([("Honestly, is it made of metal?", None)]) == [(first, None)]


def test_policy_agent_needs_a_labeler_for_history():
    with pytest.raises(ValidationError):
        PolicyAgent(PolicyParams.initial(["ask_hint"], window=2))


def test_uniform_policy_masks_to_legal_intents():
    env = EnvArgs("guess-16").make_env()
    actions = env.unwrapped.game.action_intents()
    agent = PolicyAgent(PolicyParams.initial(actions, window=0), seed=0)
    obs, _ = env.reset(seed=0)
    intent, info = agent.get_action(obs)
    assert intent in obs["legal_intents"]
    assert info.log_prob == pytest.approx(-np.log(len(actions)))
    assert info.context == () and not info.stats["known_context"]
    assert info.legal == tuple(obs["legal_intents"]) and agent.decisions == [info]


def test_policy_agent_plays_with_history(labeled_corpus):
    _, _, labeler = labeled_corpus
    env = EnvArgs("guess-16").make_env()
    actions = env.unwrapped.game.action_intents()
    agent = PolicyAgent(PolicyParams.initial(actions, window=2), labeler=labeler, seed=3)
    episode = rollout(env, agent, seed=3)
    assert episode.trajectory_of(Player.SOLO).horizon <= 8
    assert len(agent.decisions) == episode.trajectory_of(Player.SOLO).horizon
    assert all(info.legal == tuple(actions) for info in agent.decisions)
    obs = env.unwrapped.game.observation(Player.SOLO)
    assert len(agent.context(obs)) == min(2, len(obs["transcript"]))
