import numpy as np
import pytest

from helpers import guess_records
from intentpool.core.aggregate import assign_advantages, build_reward_table
from intentpool.core.embed import EmbedderConfig, embed_corpus
from intentpool.core.errors import ValidationError
from intentpool.core.hac import build_dendrogram, cut_dendrogram
from intentpool.core.projection import UtteranceLabeler
from intentpool.core.trajectory import Player, TrajectorySet
from intentpool.envs import GuessGame
from intentpool.experiments import EnvArgs, PolicyAgent, run_games
from intentpool.training import PolicyParams, build_policy_batch, train_offline
from intentpool.training.online import train_online


@pytest.fixture(scope="module")
def offline_phase():
    trajectory_set = TrajectorySet.from_records(guess_records(40, seed=11))
    cfg = EmbedderConfig(d=16)
    m = embed_corpus(cfg, trajectory_set)
    ca = cut_dendrogram(build_dendrogram(m), 8, m)
    return ca, build_reward_table(trajectory_set, ca, 0.9), cfg, trajectory_set


def _setup(offline_phase):
    ca, table, cfg, trajectory_set = offline_phase
    env = EnvArgs("guess-16").make_env()
    labeler = UtteranceLabeler(ca, trajectory_set.corpus, cfg)
    p = PolicyParams.initial(env.unwrapped.game.action_intents(), window=2)
    return env, labeler, table, p


def test_online_iterations_update_the_policy(offline_phase):
    env, labeler, table, p = _setup(offline_phase)
    result = train_online(p, env, labeler, table, iterations=2, batch_size=4, seed=5)
    assert len(result.reward_curve) == 2
    assert all(0.0 <= r <= 1.0 for r in result.reward_curve)
    assert result.params.step == 2
    assert result.table is table and result.refreshes == 0
    assert result.params.logits.shape[1] == len(p.actions)


def test_online_training_is_seeded(offline_phase):
    env, labeler, table, p = _setup(offline_phase)
    first = train_online(p, env, labeler, table, iterations=2, batch_size=3, seed=9)
    second = train_online(p, env, labeler, table, iterations=2, batch_size=3, seed=9)
    assert first.params.contexts == second.params.contexts
    np.testing.assert_array_equal(first.params.logits, second.params.logits)
    assert first.reward_curve == second.reward_curve


def test_table_refresh_uses_recent_games(offline_phase):
    env, labeler, table, p = _setup(offline_phase)
    result = train_online(p, env, labeler, table, iterations=3, batch_size=4, refresh_every=1, seed=0)
    assert result.refreshes == 3
    assert result.table is not table
    assert result.table.total_count <= 4 * 8
    assert (result.table.gamma, result.table.k, result.table.scope) == (table.gamma, table.k, table.scope)


def test_zero_iterations_return_the_input(offline_phase):
    env, labeler, table, p = _setup(offline_phase)
    result = train_online(p, env, labeler, table, iterations=0)
    assert result.params is p and result.reward_curve == []


def test_online_argument_checks(offline_phase):
    env, labeler, table, p = _setup(offline_phase)
    with pytest.raises(ValidationError):
        train_online(p, env, labeler, table, iterations=1, batch_size=0)
    with pytest.raises(ValidationError):
        train_online(p, env, labeler, table, iterations=1, refresh_every=0)


def _offline_checkpoint(seed, learning_rate):
    """200 uniform games, clustered at one cluster per intent, trained for 20 epochs."""
    trajectory_set = TrajectorySet.from_records(guess_records(200, seed=100 * seed))
    bank = GuessGame(seed=0, n_items=16).bank
    cfg = EmbedderConfig()
    m = embed_corpus(cfg, trajectory_set)
    ca = cut_dendrogram(build_dendrogram(m), len(bank.intents), m)
    table = build_reward_table(trajectory_set, ca, 0.9)
    advantages = assign_advantages(trajectory_set, ca, table)
    batch = build_policy_batch(trajectory_set, ca, advantages.aggregated, bank.intent_of, window=2)
    p = PolicyParams.initial(GuessGame(seed=0, n_items=16).action_intents(), window=2)
    offline = train_offline(p, batch, epochs=20, batch_size=32, learning_rate=learning_rate, seed=seed)
    return offline.params, UtteranceLabeler(ca, trajectory_set.corpus, cfg), table


def _mean_reward(params, labeler, env_args, n_games, seed):
    episodes = run_games(env_args, PolicyAgent(params, labeler, seed=seed), n_games, seed=seed)
    return float(np.mean([episode.trajectory_of(Player.SOLO).terminal_reward for episode in episodes]))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(3))
def test_online_without_refresh_does_not_degrade_on_the_offline_distribution(seed):
    params, labeler, table = _offline_checkpoint(seed, learning_rate=0.5)
    env = EnvArgs("guess-16", game_kwargs={"max_turns": 6}).make_env()
    result = train_online(params, env, labeler, table, iterations=10, batch_size=64, seed=10_000 + seed)
    assert result.table is table and result.refreshes == 0
    # 320 games per half
    assert np.mean(result.reward_curve[5:]) >= np.mean(result.reward_curve[:5]) - 0.12


@pytest.mark.slow
def test_online_training_beats_the_offline_checkpoint():
    env_args = EnvArgs("guess-16")
    wins = 0
    for seed in range(5):
        params, labeler, table = _offline_checkpoint(seed, learning_rate=5.0)
        env = env_args.make_env()
        online = train_online(
            params, env, labeler, table, 150, batch_size=32, refresh_every=10, learning_rate=5.0, seed=10_000 + seed
        )
        offline_reward = _mean_reward(params, labeler, env_args, 200, seed=50_000 + seed)
        online_reward = _mean_reward(online.params, labeler, env_args, 200, seed=50_000 + seed)
        wins += online_reward >= offline_reward
    assert wins >= 4
