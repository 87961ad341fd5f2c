import math

import pytest

from helpers import record
from intentpool.core.errors import IllegalActionError, UnknownIntentError, UnknownOpponentError, ValidationError
from intentpool.core.trajectory import Player, Task, TrajectorySet, validate_trajectory
from intentpool.envs import (
    BargainGame,
    GuessGame,
    NegotiationGame,
    bargain_payoffs,
    eval_average_final_reward,
    eval_win_rate_bargain,
    eval_win_rate_negotiation,
    negotiation_utilities,
    scripted_opponent,
)
from intentpool.envs.evaluate import evaluate_games, verify_outcome, write_eval_summary
from intentpool.envs.opponents import BinarySearchAgent, nearest_offer


def _play(game, agents):
    """Drive a game to the end, each seat acting through its agent."""
    for agent in agents.values():
        agent.reset()
    while not game.is_over:
        seat = game.current_seat()
        action, _ = agents[seat].get_action(game.observation(seat))
        game.act(seat, action)
    return game


# --------------------------------------------------------------------------- guessing


def test_attribute_oracle_is_total_and_bitwise():
    game = GuessGame(seed=0, n_items=16)
    assert len(game.attribute_intents) == 4
    for item in range(16):
        assert [game.attribute(item, b) for b in range(4)] == [bool(item >> b & 1) for b in range(4)]


@pytest.mark.parametrize("n_items", [16, 100, 157])
def test_binary_search_solves_within_log_turns(n_items):
    bound = math.ceil(math.log2(n_items)) + 1
    for seed in range(25):
        game = GuessGame(seed=seed, n_items=n_items, noise=0.3)
        _play(game, {Player.SOLO: BinarySearchAgent(game.attribute_intents)})
        assert game.outcome()["solved"]
        assert game.outcome()["turns"] <= bound
        (traj,) = game.trajectories(f"g{seed}")
        assert traj.terminal_reward == 1.0 and traj.horizon == game.turns
        assert validate_trajectory(traj) == []


def test_guess_game_runs_out_of_turns():
    game = GuessGame(seed=0, n_items=16, max_turns=3, target=5)
    for _ in range(3):
        game.act(Player.SOLO, "ask_hint")
    assert game.is_over and game.rewards() == {Player.SOLO: 0.0}
    assert [m.intent for m in game.transcript if m.sender == "oracle"] == ["answer_invalid"] * 3
    with pytest.raises(IllegalActionError):
        game.act(Player.SOLO, "ask_hint")


def test_wrong_guess_prunes_the_candidate():
    game = GuessGame(seed=0, n_items=16, target=3)
    game.act(Player.SOLO, f"guess:{game.items[0]}")
    assert game.items[0] not in game.observation(Player.SOLO)["candidates"]
    assert game.transcript[-1].intent == "answer_no"
    with pytest.raises(UnknownIntentError):
        game.act(Player.SOLO, "sing")


def test_guess_game_parameters():
    with pytest.raises(ValidationError):
        GuessGame(seed=0, n_items=16, n_attributes=3)
    with pytest.raises(ValidationError):
        GuessGame(seed=0, domain="planets")


# --------------------------------------------------------------------------- offer games


def test_even_split_accepted_at_first_round():
    game = BargainGame(seed=0, M=100, T=6, delta_a=0.95, delta_b=0.95)
    game.act(Player.BOB, "open")
    game.act(Player.ALICE, "offer_50")
    game.act(Player.BOB, "accept")
    outcome = game.outcome()
    assert outcome["deal"] and outcome["t_ev"] == 1
    assert outcome["p_A"] == pytest.approx(50.0) and outcome["p_B"] == pytest.approx(50.0)
    assert game.rewards() == {Player.ALICE: pytest.approx(0.5), Player.BOB: pytest.approx(0.5)}
    assert verify_outcome(Task.BARGAIN, outcome)


def test_seat_order_is_enforced():
    game = BargainGame(seed=0)
    with pytest.raises(IllegalActionError):
        game.act(Player.ALICE, "offer_50")
    game.act(Player.BOB, "open")
    with pytest.raises(IllegalActionError):
        game.act(Player.ALICE, "accept")


def test_fixed_threshold_pair_deals_immediately():
    game = _play(
        BargainGame(seed=0, M=100, T=6),
        {Player.ALICE: scripted_opponent("fixed_threshold"), Player.BOB: scripted_opponent("fixed_threshold")},
    )
    outcome = game.outcome()
    assert outcome["deal"] and outcome["t_ev"] == 1
    assert outcome["p_ev"] == pytest.approx(0.55)
    assert outcome["p_A"] == pytest.approx(55.0) and outcome["p_B"] == pytest.approx(45.0)


@pytest.mark.parametrize("game_class", [BargainGame, NegotiationGame])
def test_greedy_pair_never_deals(game_class):
    game = _play(
        game_class(seed=0, T=5), {Player.ALICE: scripted_opponent("greedy"), Player.BOB: scripted_opponent("greedy")}
    )
    outcome = game.outcome()
    assert not outcome["deal"]
    assert game.rewards() == {Player.ALICE: 0.0, Player.BOB: 0.0}
    assert game.round == 5
    assert verify_outcome(game.task, outcome)


def test_counter_in_final_round_ends_without_deal():
    game = BargainGame(seed=0, T=1)
    game.act(Player.BOB, "open")
    game.act(Player.ALICE, "offer_80")
    game.act(Player.BOB, "offer_60")
    assert game.is_over and game.outcome()["t_ev"] is None


def test_tit_for_tat_is_reproducible():
    def offers(seed):
        game = _play(
            NegotiationGame(seed=0, T=20),
            {Player.ALICE: scripted_opponent("tit_for_tat", seed=seed), Player.BOB: scripted_opponent("greedy")},
        )
        return [m.intent for m in game.transcript if m.sender == "alice"]

    assert offers(4) == offers(4)
    assert len(offers(4)) > 1


def test_unknown_opponent_style():
    with pytest.raises(UnknownOpponentError):
        scripted_opponent("stubborn")


def test_nearest_offer_prefers_larger_value_on_ties():
    assert nearest_offer({"low": 0.25, "high": 0.75}, 0.5) == "high"


def test_negotiation_price_ladder_and_utilities():
    game = NegotiationGame(seed=0, V_A=100, V_B=120)
    assert "price_109" in game.offer_levels()
    game.act(Player.BOB, "open")
    game.act(Player.ALICE, "price_120")
    game.act(Player.BOB, "price_109")
    game.act(Player.ALICE, "accept")
    outcome = game.outcome()
    assert (outcome["u_A"], outcome["u_B"]) == (9.0, 11.0)
    assert outcome["t_ev"] == 2
    assert eval_win_rate_negotiation([outcome], "bob") == 1.0
    assert eval_win_rate_negotiation([outcome], "alice") == 0.0
    assert verify_outcome(Task.NEGOTIATE, outcome)


def test_offer_game_trajectories_cover_both_seats():
    game = _play(
        BargainGame(seed=2, noise=0.3),
        {Player.ALICE: scripted_opponent("tit_for_tat"), Player.BOB: scripted_opponent("fixed_threshold")},
    )
    alice, bob = game.trajectories("b-1")
    assert (alice.player, bob.player) == (Player.ALICE, Player.BOB)
    assert game.bank.intent_of(bob.steps[0].action.text) == "open"
    rewards = game.rewards()
    assert (alice.terminal_reward, bob.terminal_reward) == (rewards[Player.ALICE], rewards[Player.BOB])


# --------------------------------------------------------------------------- evaluation formulas


def test_bargain_payoff_arithmetic():
    p_a, p_b = bargain_payoffs(2, 0.6, 0.95, 0.9, 1.0)
    assert p_a == pytest.approx(0.57)
    assert p_b == pytest.approx(0.36)
    assert bargain_payoffs(None, None, 0.9, 0.9) == (0.0, 0.0)
    with pytest.raises(ValidationError):
        bargain_payoffs(0, 0.5, 0.9, 0.9)
    with pytest.raises(ValidationError):
        bargain_payoffs(1, 1.5, 0.9, 0.9)


def test_negotiation_utilities():
    assert negotiation_utilities(109, 100, 120) == (9, 11)
    assert negotiation_utilities(None, 100, 120) == (0.0, 0.0)


def test_average_final_reward():
    def trajs(wins, n):
        return TrajectorySet.from_records(
            [record(f"g{i}", [("Is it red?", None)], 1.0 if i < wins else 0.0, "guess") for i in range(n)]
        ).trajectories

    assert eval_average_final_reward(trajs(200, 200)) == 1.0
    assert eval_average_final_reward(trajs(0, 200)) == 0.0
    assert eval_average_final_reward(trajs(57, 200)) == pytest.approx(0.285)
    with pytest.raises(ValidationError):
        eval_average_final_reward([])
    half = TrajectorySet.from_records([record("g", [("a", None)], 0.5, "custom")]).trajectories
    with pytest.raises(ValidationError):
        eval_average_final_reward(half)


def test_win_rates_are_strict():
    assert eval_win_rate_bargain([{"p_A": 0.6, "p_B": 0.4}] * 25, "alice") == 1.0
    ties = [{"p_A": 0.5, "p_B": 0.5}] * 25
    assert eval_win_rate_bargain(ties, "alice") == eval_win_rate_bargain(ties, Player.BOB) == 0.0
    no_deal = [{"u_A": 0.0, "u_B": 0.0}] * 25
    assert eval_win_rate_negotiation(no_deal, "alice") == eval_win_rate_negotiation(no_deal, "bob") == 0.0
    mixed = [{"u_A": 5.0, "u_B": 1.0}] * 13 + [{"u_A": 1.0, "u_B": 5.0}] * 12
    assert eval_win_rate_negotiation(mixed, "alice") == pytest.approx(0.52)
    with pytest.raises(ValidationError):
        eval_win_rate_bargain([{"p_A": 0.6}], "alice")
    with pytest.raises(ValidationError):
        eval_win_rate_bargain([{"p_A": 0.6, "p_B": 0.1}], "solo")


def test_evaluation_rows_and_summary(tmp_path):
    outcomes = [{"p_A": 60.0, "p_B": 40.0}, {"p_A": 30.0, "p_B": 70.0}]
    rows = evaluate_games(Task.BARGAIN, [], outcomes, "alice", policy="aggregated")
    assert [(r.metric, r.value, r.N, r.policy) for r in rows] == [
        ("win_rate", 0.5, 2, "aggregated"),
        ("mean_p_A", 45.0, 2, "aggregated"),
    ]
    frame = write_eval_summary(rows, tmp_path / "summary.csv")
    assert list(frame.columns) == ["policy", "task", "role", "metric", "value", "N"]
    assert (tmp_path / "summary.csv").read_text().splitlines()[0] == "policy,task,role,metric,value,N"
