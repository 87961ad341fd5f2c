import logging
from typing import List, Optional

import numpy as np

from intentpool.core.errors import ValidationError
from intentpool.core.projection import UtteranceLabeler
from intentpool.training.policy import PolicyParams, context_of

from .agent import Agent, AgentInfo

logger = logging.getLogger(__name__)


class PolicyAgent(Agent):
    """
    Plays a tabular softmax policy. The context of every decision is the projected window of
    the seat's own transcript; actions are masked to the legal intents the policy knows.
    `decisions` holds the AgentInfo of every action of the current game.
    """

    def __init__(
        self, params: PolicyParams, labeler: Optional[UtteranceLabeler] = None, seed: int = 0, greedy: bool = False
    ):
        if labeler is None and params.window > 0:
            raise ValidationError("a policy with a history window needs an utterance labeler")
        self.params = params
        self.labeler = labeler
        self.greedy = greedy
        self.reset(seed)

    def reset(self, seed: Optional[int] = None) -> None:
        if seed is not None:
            self.seed = seed
        self.random = np.random.default_rng(self.seed)
        self.decisions: List[AgentInfo] = []

    def context(self, obs: dict):
        if self.params.window == 0:
            return ()
        return context_of(self.labeler.pairs(obs["transcript"]), self.params.window)

    def get_action(self, obs: dict) -> tuple[str, AgentInfo]:
        context = self.context(obs)
        probs = self.params.probs(context, legal=obs["legal_intents"])
        if self.greedy:
            a = int(np.argmax(probs))
        else:
            a = int(self.random.choice(len(probs), p=probs))
        intent = self.params.actions[a]
        info = AgentInfo(
            intent=intent,
            log_prob=float(np.log(probs[a])),
            context=context,
            legal=tuple(obs["legal_intents"]),
            stats={"known_context": self.params.knows(context)},
        )
        self.decisions.append(info)
        return intent, info

