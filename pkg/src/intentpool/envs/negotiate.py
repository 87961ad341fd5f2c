from typing import Dict, List, Optional, Sequence

from intentpool.core.errors import ValidationError
from intentpool.core.trajectory import Player, Task

from .evaluate import negotiation_utilities
from .offers import AlternatingOfferGame

# price positions between the seller's and the buyer's valuation
DEFAULT_PRICE_FRACTIONS = (0.0, 0.2, 0.35, 0.45, 0.5, 0.55, 0.65, 0.8, 1.0)


class NegotiationGame(AlternatingOfferGame):
    """
    Alice sells an item to Bob. Alice values it at V_A and Bob at V_B; a deal at price p gives
    utilities u_A = p - V_A and u_B = V_B - p, no deal gives (0, 0). Utilities are the terminal
    rewards. Offered prices are whole dollars spread between the two valuations.
    """

    task = Task.NEGOTIATE

    def __init__(
        self,
        seed: int,
        V: float = 100.0,
        V_A: float = 100.0,
        V_B: float = 120.0,
        T: int = 20,
        fractions: Sequence[float] = DEFAULT_PRICE_FRACTIONS,
        noise: float = 0.0,
    ):
        super().__init__(seed, T, noise)
        if V_B <= V_A:
            raise ValidationError(f"V_B must exceed V_A, got V_A={V_A}, V_B={V_B}")
        self.V = float(V)
        self.V_A = float(V_A)
        self.V_B = float(V_B)
        prices = sorted({int(round(V_A + f * (V_B - V_A))) for f in fractions})
        self._levels = {f"price_{p}": float(p) for p in prices}
        self.reset()

    @classmethod
    def get_game_kind(cls) -> str:
        return "negotiate"

    def offer_levels(self) -> Dict[str, float]:
        return self._levels

    def offer_templates(self, level: float) -> List[str]:
        price = f"${level:g}"
        return [
            f"I can do it for {price}.",
            f"My price is {price}.",
            f"How about {price}?",
            f"Let us settle at {price}.",
        ]

    def value_of(self, seat: Player, proposer: Player, level: float) -> float:
        surplus = self.V_B - self.V_A
        if seat == Player.ALICE:
            return (level - self.V_A) / surplus
        return (self.V_B - level) / surplus

    def reset(self) -> None:
        super().reset()
        self.price: Optional[float] = None
        self.t_ev: Optional[int] = None

    def settle(self, proposer: Optional[Player], level: Optional[float], t_ev: Optional[int]) -> None:
        self.price, self.t_ev = level, t_ev

    def utilities(self) -> Dict[Player, float]:
        u_a, u_b = negotiation_utilities(self.price, self.V_A, self.V_B)
        return {Player.ALICE: u_a, Player.BOB: u_b}

    def rewards(self) -> Dict[Player, float]:
        return self.utilities()

    def outcome(self) -> dict:
        utilities = self.utilities()
        return {
            "deal": self.price is not None,
            "t_ev": self.t_ev,
            "price": self.price,
            "V": self.V,
            "V_A": self.V_A,
            "V_B": self.V_B,
            "u_A": utilities[Player.ALICE],
            "u_B": utilities[Player.BOB],
        }
