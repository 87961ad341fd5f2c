from typing import Dict, List, Optional, Sequence

from intentpool.core.errors import ValidationError
from intentpool.core.trajectory import Player, Task

from .evaluate import bargain_payoffs
from .offers import AlternatingOfferGame

# share of the pot the proposer keeps
DEFAULT_SHARE_LEVELS = (0.2, 0.3, 0.4, 0.45, 0.5, 0.55, 0.6, 0.7, 0.8)


class BargainGame(AlternatingOfferGame):
    """
    Alice and Bob divide M over at most T rounds of alternating proposals. A deal struck in
    round t_ev giving Alice the fraction p_ev pays Alice delta_a**(t_ev-1) * p_ev * M and Bob
    delta_b**(t_ev-1) * (1 - p_ev) * M; no deal pays both zero. Terminal rewards are the
    payoffs divided by M.
    """

    task = Task.BARGAIN

    def __init__(
        self,
        seed: int,
        M: float = 100.0,
        T: int = 6,
        delta_a: float = 0.95,
        delta_b: float = 0.95,
        levels: Sequence[float] = DEFAULT_SHARE_LEVELS,
        noise: float = 0.0,
    ):
        super().__init__(seed, T, noise)
        if M <= 0:
            raise ValidationError(f"M must be positive, got {M}")
        for name, delta in (("delta_a", delta_a), ("delta_b", delta_b)):
            if not 0 < delta <= 1:
                raise ValidationError(f"{name} must lie in (0, 1], got {delta}")
        if not levels or any(not 0 <= level <= 1 for level in levels):
            raise ValidationError(f"share levels must lie in [0, 1], got {list(levels)}")
        self.M = float(M)
        self.delta_a = float(delta_a)
        self.delta_b = float(delta_b)
        self._levels = {f"offer_{int(round(level * 100))}": float(level) for level in sorted(levels)}
        self.reset()

    @classmethod
    def get_game_kind(cls) -> str:
        return "bargain"

    def offer_levels(self) -> Dict[str, float]:
        return self._levels

    def offer_templates(self, level: float) -> List[str]:
        # only the proposer's share is spoken
        mine = f"{level * self.M:g}"
        return [
            f"I keep {mine} and you get the rest.",
            f"I propose {mine} for me, the rest for you.",
            f"My share is {mine}, the rest is yours.",
            f"Give me {mine} and keep the rest.",
        ]

    def value_of(self, seat: Player, proposer: Player, level: float) -> float:
        # rounded so complementary shares compare exactly against thresholds
        return level if seat == proposer else round(1.0 - level, 12)

    def reset(self) -> None:
        super().reset()
        self.t_ev: Optional[int] = None
        self.p_ev: Optional[float] = None

    def settle(self, proposer: Optional[Player], level: Optional[float], t_ev: Optional[int]) -> None:
        if proposer is None:
            self.t_ev, self.p_ev = None, None
            return
        self.t_ev = t_ev
        self.p_ev = self.value_of(Player.ALICE, proposer, level)

    def payoffs(self) -> Dict[Player, float]:
        p_a, p_b = bargain_payoffs(self.t_ev, self.p_ev, self.delta_a, self.delta_b, self.M)
        return {Player.ALICE: p_a, Player.BOB: p_b}

    def rewards(self) -> Dict[Player, float]:
        return {seat: payoff / self.M for seat, payoff in self.payoffs().items()}

    def outcome(self) -> dict:
        payoffs = self.payoffs()
        return {
            "deal": self.t_ev is not None,
            "t_ev": self.t_ev,
            "p_ev": self.p_ev,
            "M": self.M,
            "delta_a": self.delta_a,
            "delta_b": self.delta_b,
            "p_A": payoffs[Player.ALICE],
            "p_B": payoffs[Player.BOB],
        }
