import dataclasses
from typing import Tuple

from intentpool.core.trajectory import Task
from intentpool.envs.evaluate import evaluate_games, write_eval_summary
from intentpool.envs.offers import ACCEPT_INTENT, OPEN_INTENT
from intentpool.envs.opponents import nearest_offer
from intentpool.experiments import AbstractAgentArgs, Agent, AgentInfo, EnvArgs, run_games


class ConcedingAgent(Agent):
    """Asks for a large share and concedes a little every round."""

    def __init__(self, start: float = 0.8, step: float = 0.1, floor: float = 0.45) -> None:
        super().__init__()
        self.start, self.step, self.floor = start, step, floor

    def get_action(self, obs: dict) -> Tuple[str, AgentInfo]:
        legal = obs["legal_intents"]
        if legal == [OPEN_INTENT]:
            return OPEN_INTENT, AgentInfo(intent=OPEN_INTENT)
        demand = max(self.floor, self.start - self.step * (obs["round"] - 1))
        pending = obs.get("pending_value")
        if pending is not None and ACCEPT_INTENT in legal and pending >= demand:
            return ACCEPT_INTENT, AgentInfo(intent=ACCEPT_INTENT)
        intent = nearest_offer(obs["offer_values"], demand)
        return intent, AgentInfo(intent=intent, extra_info={"demand": demand})


@dataclasses.dataclass
class ConcedingAgentArgs(AbstractAgentArgs):
    agent_name: str = "ConcedingAgent"
    start: float = 0.8

    def make_agent(self):
        return ConcedingAgent(start=self.start)


def run_custom_agent(n_games: int = 25):
    env_args = EnvArgs("bargain-3", seat="alice", opponent_style="tit_for_tat")
    agent = ConcedingAgentArgs().make_agent()
    episodes = run_games(env_args, agent, n_games)
    rows = evaluate_games(
        Task.BARGAIN,
        [ep.trajectory_of("alice") for ep in episodes],
        [ep.outcome for ep in episodes],
        role="alice",
        policy="conceding",
    )
    return write_eval_summary(rows, "conceding_eval.csv")


if __name__ == "__main__":
    print(run_custom_agent().to_string(index=False))
