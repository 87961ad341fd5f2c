from .agent import Agent, AgentInfo
from .loop import AbstractAgentArgs, EnvArgs, StepInfo, rollout, run_games
from .policy_agent import PolicyAgent
