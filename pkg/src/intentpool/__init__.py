from . import core, training
from .experiments import Agent, AgentInfo, AbstractAgentArgs, EnvArgs, rollout

__version__ = "0.1.0"
