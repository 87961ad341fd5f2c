"""
Finite MDPs whose actions fall into epsilon-bisimilar clusters, and the exact bias of
replacing Q^pi by its within-cluster policy-weighted mean in the policy gradient.

States stand for truncated histories; a state's policy row lives under the context
((s, -1),) of a window-1 `PolicyParams`.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from intentpool.core.errors import BisimulationError, ValidationError

from .policy import Context, PolicyParams, _softmax

logger = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-12
BISIMULATION_TOLERANCE = 1e-12
DEFAULT_EPSILONS = (0.01, 0.02, 0.05)


def state_context(s: int) -> Context:
    return ((int(s), -1),)


@dataclass(eq=False)
class TabularMDPSpec:
    """
    :param rewards: r(s, a), shape (S, A), values in [0, 1].
    :param transitions: P(s' | s, a), shape (S, A, S).
    :param gamma: discount in (0, 1).
    :param clusters: cluster id of every action.
    :param epsilon: certified bisimulation level of every cluster.
    :param initial: start-state distribution; uniform when omitted.
    """

    rewards: np.ndarray
    transitions: np.ndarray
    gamma: float
    clusters: Tuple[int, ...]
    epsilon: float
    initial: Optional[np.ndarray] = None

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.clusters = tuple(int(c) for c in self.clusters)
        S, A = self.rewards.shape
        if self.initial is None:
            self.initial = np.full(S, 1.0 / S)
        self.initial = np.asarray(self.initial, dtype=np.float64)
        self.validate()

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]

    @property
    def actions(self) -> Tuple[str, ...]:
        return tuple(f"a{j}" for j in range(self.n_actions))

    def cluster_members(self) -> Dict[int, List[int]]:
        members: Dict[int, List[int]] = {}
        for a, c in enumerate(self.clusters):
            members.setdefault(c, []).append(a)
        return members

    def validate(self) -> None:
        S, A = self.rewards.shape
        if self.transitions.shape != (S, A, S):
            raise ValidationError(f"transitions have shape {self.transitions.shape}, expected {(S, A, S)}")
        if len(self.clusters) != A:
            raise ValidationError(f"{A} actions but {len(self.clusters)} cluster ids")
        if not 0 < self.gamma < 1:
            raise ValidationError(f"tabular MDPs need gamma in (0, 1), got {self.gamma}")
        if self.epsilon < 0:
            raise ValidationError(f"epsilon must be non-negative, got {self.epsilon}")
        if np.any(self.rewards < 0) or np.any(self.rewards > 1):
            raise ValidationError("rewards must lie in [0, 1]")
        if np.any(self.transitions < 0):
            raise ValidationError("transition probabilities must be non-negative")
        row_error = np.abs(self.transitions.sum(axis=2) - 1.0)
        if np.any(row_error > ROW_TOLERANCE):
            s, a = np.unravel_index(int(np.argmax(row_error)), row_error.shape)
            raise ValidationError(f"transition row ({s}, {a}) sums to {self.transitions[s, a].sum():.15g}")
        if self.initial.shape != (S,) or abs(self.initial.sum() - 1.0) > ROW_TOLERANCE:
            raise ValidationError("initial distribution must be a probability vector over states")
        limit = self.epsilon + BISIMULATION_TOLERANCE
        for members in self.cluster_members().values():
            for i, a in enumerate(members):
                for b in members[i + 1 :]:
                    reward_gap = np.abs(self.rewards[:, a] - self.rewards[:, b])
                    tv = 0.5 * np.abs(self.transitions[:, a] - self.transitions[:, b]).sum(axis=1)
                    for s in range(S):
                        if reward_gap[s] > limit:
                            raise BisimulationError(
                                f"state {s}: rewards of actions {a} and {b} differ by {reward_gap[s]:.3g} > {self.epsilon}",
                                pair=(s, a, b),
                            )
                        if tv[s] > limit:
                            raise BisimulationError(
                                f"state {s}: transitions of actions {a} and {b} are {tv[s]:.3g} apart in TV > {self.epsilon}",
                                pair=(s, a, b),
                            )

    def policy(self, seed: int = 0, scale: float = 0.5) -> PolicyParams:
        """Random-logit policy with one context per state."""
        logits = np.random.default_rng(seed).normal(0.0, scale, size=(self.n_states, self.n_actions))
        contexts = tuple(state_context(s) for s in range(self.n_states))
        return PolicyParams(self.actions, contexts, logits, seed=seed, window=1)

    def policy_matrix(self, p: PolicyParams) -> np.ndarray:
        if tuple(p.actions) != self.actions:
            raise ValidationError("policy actions do not match the MDP's actions")
        return np.vstack([_softmax(p.logits[p.context_index(state_context(s))]) for s in range(self.n_states)])


def make_bisimilar_family(
    epsilon: float,
    n_states: int = 5,
    n_clusters: int = 2,
    actions_per_cluster: int = 2,
    gamma: float = 0.9,
    seed: int = 0,
) -> TabularMDPSpec:
    """
    One member of a seeded family: every cluster shares a base reward and kernel, and each
    action deviates from it by epsilon along a direction fixed by the seed. The same seed
    gives the same bases and directions for every epsilon, so epsilon = 0 duplicates actions.
    """
    if not 0 <= epsilon <= 0.4:
        raise ValidationError(f"family epsilon must lie in [0, 0.4], got {epsilon}")
    rng = np.random.default_rng(seed)
    base_rewards = rng.uniform(0.2, 0.8, size=(n_states, n_clusters))
    base_kernels = rng.dirichlet(np.ones(n_states), size=(n_states, n_clusters))
    n_actions = n_clusters * actions_per_cluster
    reward_dirs = rng.uniform(-0.5, 0.5, size=(n_states, n_actions))
    kernel_dirs = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))

    clusters = tuple(a // actions_per_cluster for a in range(n_actions))
    rewards = np.empty((n_states, n_actions))
    transitions = np.empty((n_states, n_actions, n_states))
    for a, c in enumerate(clusters):
        rewards[:, a] = base_rewards[:, c] + epsilon * reward_dirs[:, a]
        transitions[:, a] = (1.0 - epsilon) * base_kernels[:, c] + epsilon * kernel_dirs[:, a]
    return TabularMDPSpec(rewards, transitions, gamma, clusters, epsilon)


def evaluate_policy(spec: TabularMDPSpec, p: PolicyParams) -> Tuple[np.ndarray, np.ndarray]:
    """Exact (V^pi, Q^pi) by one linear solve."""
    pi = spec.policy_matrix(p)
    P_pi = np.einsum("sa,sat->st", pi, spec.transitions)
    r_pi = np.sum(pi * spec.rewards, axis=1)
    V = np.linalg.solve(np.eye(spec.n_states) - spec.gamma * P_pi, r_pi)
    Q = spec.rewards + spec.gamma * spec.transitions @ V
    return V, Q


def state_occupancy(spec: TabularMDPSpec, p: PolicyParams) -> np.ndarray:
    """Discounted state visitation d(s) = sum_t gamma^t Pr(s_t = s); sums to 1/(1 - gamma)."""
    pi = spec.policy_matrix(p)
    P_pi = np.einsum("sa,sat->st", pi, spec.transitions)
    return np.linalg.solve((np.eye(spec.n_states) - spec.gamma * P_pi).T, spec.initial)


def cluster_mean_q(spec: TabularMDPSpec, pi: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Q~(s, a): the pi-weighted mean of Q(s, .) over the cluster of a."""
    Q_tilde = np.empty_like(Q)
    for members in spec.cluster_members().values():
        weights = pi[:, members]
        pooled = np.sum(weights * Q[:, members], axis=1) / np.sum(weights, axis=1)
        Q_tilde[:, members] = pooled[:, None]
    return Q_tilde


@dataclass
class BiasReport:
    epsilon: float
    bias_norm: float
    q_spread: float
    bound: float
    bias: np.ndarray

    @property
    def within_bound(self) -> bool:
        return self.q_spread <= self.bound + 1e-9

    def to_json(self) -> dict:
        record = asdict(self)
        record.pop("bias")
        return dict(record, within_bound=self.within_bound)


def measure_gradient_bias(spec: TabularMDPSpec, p: PolicyParams) -> BiasReport:
    """
    Exact E[grad log pi(a|s) * (Q(s,a) - Q~(s,a))] under the discounted occupancy, over the
    flat parameter vector, together with the largest within-cluster Q gap and the
    2*epsilon/(1 - gamma) bound it must respect.
    """
    spec.validate()
    pi = spec.policy_matrix(p)
    _, Q = evaluate_policy(spec, p)
    d = state_occupancy(spec, p)
    delta = Q - cluster_mean_q(spec, pi, Q)

    A = spec.n_actions
    bias = np.zeros(p.n_params)
    for s in range(spec.n_states):
        weighted = pi[s] * delta[s]
        block = d[s] * (weighted - pi[s] * weighted.sum())
        i = p.context_index(state_context(s))
        bias[i * A : (i + 1) * A] = block

    q_spread = 0.0
    for members in spec.cluster_members().values():
        q_spread = max(q_spread, float(np.max(np.ptp(Q[:, members], axis=1))))
    report = BiasReport(
        epsilon=spec.epsilon,
        bias_norm=float(np.linalg.norm(bias)),
        q_spread=q_spread,
        bound=2.0 * spec.epsilon / (1.0 - spec.gamma),
        bias=bias,
    )
    if not report.within_bound:
        logger.warning(f"Within-cluster Q spread {q_spread:.6g} exceeds 2eps/(1-gamma) = {report.bound:.6g}")
    logger.debug(f"eps={spec.epsilon}: ||bias||={report.bias_norm:.6g}, Q spread {q_spread:.6g}")
    return report


@dataclass
class BiasScaling:
    reports: List[BiasReport]
    constant: float
    slope: float

    @property
    def linear(self) -> bool:
        return all(r.bias_norm <= self.constant * r.epsilon + 1e-15 for r in self.reports)

    def to_json(self) -> dict:
        return {
            "constant": self.constant,
            "slope": self.slope,
            "linear": self.linear,
            "reports": [r.to_json() for r in self.reports],
        }


def bias_scaling(
    epsilons: Sequence[float] = DEFAULT_EPSILONS, seed: int = 0, policy_seed: int = 0, **family_kwargs
) -> BiasScaling:
    """
    Bias reports across one family; `constant` is the smallest C with ||bias|| <= C*eps on
    every member and `slope` the log-log fit of ||bias|| against eps.
    """
    positive = [e for e in epsilons if e > 0]
    if len(positive) < 2:
        raise ValidationError(f"bias scaling needs at least two positive epsilons, got {list(epsilons)}")
    reports = []
    for epsilon in epsilons:
        spec = make_bisimilar_family(epsilon, seed=seed, **family_kwargs)
        reports.append(measure_gradient_bias(spec, spec.policy(policy_seed)))
    fitted = [r for r in reports if r.epsilon > 0]
    constant = max(r.bias_norm / r.epsilon for r in fitted)
    x = np.log([r.epsilon for r in fitted])
    y = np.log([max(r.bias_norm, 1e-300) for r in fitted])
    slope = float(np.polyfit(x, y, 1)[0])
    logger.info(f"Bias scaling over eps={list(epsilons)}: C={constant:.4g}, slope={slope:.3f}")
    return BiasScaling(reports, float(constant), slope)
