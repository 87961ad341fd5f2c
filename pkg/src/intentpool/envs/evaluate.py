"""Payoff and utility formulas of the adversarial games and the evaluation metrics over played games."""

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd

from intentpool.core.errors import ValidationError
from intentpool.core.trajectory import Player, Task, Trajectory

logger = logging.getLogger(__name__)

_PAYOFF_KEYS = {Task.BARGAIN: ("p_A", "p_B"), Task.NEGOTIATE: ("u_A", "u_B")}


def bargain_payoffs(
    t_ev: Optional[int], p_ev: Optional[float], delta_a: float, delta_b: float, M: float = 1.0
) -> Tuple[float, float]:
    """Discounted payoffs (p_A, p_B); a missing t_ev means no deal and pays nothing."""
    if t_ev is None:
        return 0.0, 0.0
    if t_ev < 1:
        raise ValidationError(f"t_ev must be >= 1, got {t_ev}")
    if p_ev is None or not 0.0 <= p_ev <= 1.0:
        raise ValidationError(f"p_ev must lie in [0, 1], got {p_ev}")
    return delta_a ** (t_ev - 1) * p_ev * M, delta_b ** (t_ev - 1) * (1.0 - p_ev) * M


def negotiation_utilities(price: Optional[float], V_A: float, V_B: float) -> Tuple[float, float]:
    if price is None:
        return 0.0, 0.0
    return price - V_A, V_B - price


def verify_outcome(task: Task, outcome: Mapping) -> bool:
    """Recompute the stored payoffs or utilities from the logged deal terms."""
    if Task(task) == Task.BARGAIN:
        expected = bargain_payoffs(outcome["t_ev"], outcome["p_ev"], outcome["delta_a"], outcome["delta_b"], outcome["M"])
        return expected == (outcome["p_A"], outcome["p_B"])
    if Task(task) == Task.NEGOTIATE:
        expected = negotiation_utilities(outcome["price"], outcome["V_A"], outcome["V_B"])
        return expected == (outcome["u_A"], outcome["u_B"])
    raise ValidationError(f"task {task} has no payoff formula")


def eval_average_final_reward(trajectories: Sequence[Trajectory]) -> float:
    """Fraction of guess games ending with reward 1."""
    if not trajectories:
        raise ValidationError("average final reward needs at least one trajectory")
    rewards = [traj.terminal_reward for traj in trajectories]
    bad = [r for r in rewards if r not in (0.0, 1.0)]
    if bad:
        raise ValidationError(f"average final reward needs binary rewards, found {bad[:3]}")
    return sum(1 for r in rewards if r == 1.0) / len(rewards)


def _win_rate(task: Task, outcomes: Sequence[Mapping], role: Union[str, Player]) -> float:
    role = Player(role)
    if role not in (Player.ALICE, Player.BOB):
        raise ValidationError(f"win rate is defined for alice or bob, got {role.value}")
    if not outcomes:
        raise ValidationError("win rate needs at least one game")
    key_a, key_b = _PAYOFF_KEYS[task]
    wins = 0
    for i, outcome in enumerate(outcomes):
        a, b = outcome.get(key_a), outcome.get(key_b)
        if a is None or b is None:
            raise ValidationError(f"game {i} is missing {key_a if a is None else key_b}")
        if (a > b) if role == Player.ALICE else (b > a):
            wins += 1
    return wins / len(outcomes)


def eval_win_rate_bargain(outcomes: Sequence[Mapping], role: Union[str, Player]) -> float:
    """Fraction of games whose discounted payoff for `role` strictly exceeds the other's."""
    return _win_rate(Task.BARGAIN, outcomes, role)


def eval_win_rate_negotiation(outcomes: Sequence[Mapping], role: Union[str, Player]) -> float:
    return _win_rate(Task.NEGOTIATE, outcomes, role)


@dataclass(frozen=True)
class EvalRow:
    task: str
    role: str
    metric: str
    value: float
    N: int
    policy: str = "policy"


def write_eval_summary(rows: Iterable[EvalRow], path: Union[str, Path]) -> pd.DataFrame:
    frame = pd.DataFrame([asdict(row) for row in rows], columns=["policy", "task", "role", "metric", "value", "N"])
    frame.to_csv(path, index=False)
    return frame


def evaluate_games(
    task: Task, trajectories: Sequence[Trajectory], outcomes: Sequence[Mapping], role: str, policy: str = "policy"
) -> List[EvalRow]:
    """Evaluation rows for one batch of games played by `role` under the policy named `policy`."""
    task = Task(task)
    if task == Task.GUESS:
        value = eval_average_final_reward(trajectories)
        return [EvalRow(task.value, role, "average_final_reward", value, len(trajectories), policy)]
    rate = _win_rate(task, outcomes, role)
    key = _PAYOFF_KEYS[task][0 if Player(role) == Player.ALICE else 1]
    mean = sum(o[key] for o in outcomes) / len(outcomes)
    if not math.isfinite(mean):
        raise ValidationError(f"non-finite mean {key} over {len(outcomes)} games")
    return [
        EvalRow(task.value, role, "win_rate", rate, len(outcomes), policy),
        EvalRow(task.value, role, f"mean_{key}", mean, len(outcomes), policy),
    ]
