"""
Executable checks of the variance side of intention aggregation:

- the law-of-total-variance decomposition Var(A) = Var(A~) + E[Var(A | key)],
- the per-trajectory gradient covariance under A~ against A,
- the O(1/sqrt(N)) decay of the gradient estimation error on a clustered bandit.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Hashable, List, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from intentpool.core.aggregate import AdvantageSet
from intentpool.core.errors import DegenerateGeneratorError, ValidationError

from .batch import PolicyBatch, PolicyStep
from .policy import PolicyParams, _softmax
from .reinforce import estimate_policy_gradient

logger = logging.getLogger(__name__)

DEFAULT_N_GRID = (64, 256, 1024, 4096)


# --------------------------------------------------------------------------- advantage variance


@dataclass(frozen=True)
class VarianceReport:
    var_raw: float
    var_aggregated: float
    expected_conditional: float
    residual: float
    n_steps: int

    @property
    def ratio(self) -> float:
        return 1.0 if self.var_raw == 0 else self.var_aggregated / self.var_raw

    def to_json(self) -> dict:
        return dict(asdict(self), ratio=self.ratio)


def variance_decomposition(raw: Sequence[float], keys: Sequence[Hashable]) -> VarianceReport:
    """Population variances of A, of its key means A~, and the mean within-key variance."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0:
        raise ValidationError("variance report needs at least one step")
    if len(keys) != raw.size:
        raise ValidationError(f"{raw.size} advantages but {len(keys)} keys")
    index: Dict[Hashable, int] = {}
    groups = np.array([index.setdefault(key, len(index)) for key in keys], dtype=np.int64)
    counts = np.bincount(groups)
    means = np.bincount(groups, weights=raw) / counts
    aggregated = means[groups]
    within = np.bincount(groups, weights=(raw - aggregated) ** 2) / counts
    var_raw = float(np.var(raw))
    var_aggregated = float(np.var(aggregated))
    expected_conditional = float(np.sum(counts * within) / raw.size)
    residual = abs(var_raw - var_aggregated - expected_conditional)
    return VarianceReport(var_raw, var_aggregated, expected_conditional, residual, int(raw.size))


def advantage_variance_report(advset: AdvantageSet) -> VarianceReport:
    report = variance_decomposition(advset.flat_raw(), advset.flat_keys())
    logger.info(
        f"Var(A)={report.var_raw:.6g}, Var(A~)={report.var_aggregated:.6g}, "
        f"E[Var(A|key)]={report.expected_conditional:.6g}, residual={report.residual:.3g}"
    )
    return report


# --------------------------------------------------------------------------- gradient variance


@dataclass(frozen=True)
class GradientVarianceReport:
    trace_raw: float
    trace_aggregated: float
    n_trajectories: int

    @property
    def ratio(self) -> float:
        return 1.0 if self.trace_raw == 0 else self.trace_aggregated / self.trace_raw

    @property
    def reduced(self) -> bool:
        return self.trace_aggregated <= self.trace_raw * (1 + 1e-12) + 1e-15

    def to_json(self) -> dict:
        return dict(asdict(self), ratio=self.ratio, reduced=self.reduced)


def gradient_variance_report(p: PolicyParams, raw: PolicyBatch, aggregated: PolicyBatch) -> GradientVarianceReport:
    """
    Trace of the empirical covariance of per-trajectory gradient sums under raw and aggregated
    advantages. A corpus where aggregation does not reduce it is reported with a warning.
    """
    if raw.steps != aggregated.steps:
        raise ValidationError("raw and aggregated batches must cover the same steps")
    p = p.ensure_contexts(raw.contexts())
    report = GradientVarianceReport(
        estimate_policy_gradient(p, raw).covariance_trace(),
        estimate_policy_gradient(p, aggregated).covariance_trace(),
        raw.n_trajectories,
    )
    if not report.reduced:
        logger.warning(
            f"Aggregated advantages did not reduce gradient variance on this corpus: "
            f"{report.trace_aggregated:.6g} > {report.trace_raw:.6g}"
        )
    return report


# --------------------------------------------------------------------------- convergence


@dataclass
class BanditGenerator:
    """
    One-step bandit whose arms fall into clusters of equal mean reward. An arm pays 1 with its
    cluster's mean probability; the aggregated advantage of a pull is the empirical mean
    reward of its cluster in the same sample.
    """

    cluster_means: Sequence[float] = (0.2, 0.8)
    arms_per_cluster: int = 2

    def __post_init__(self):
        if self.arms_per_cluster < 1 or not self.cluster_means:
            raise ValidationError("bandit needs at least one cluster with one arm")
        if any(not 0.0 <= m <= 1.0 for m in self.cluster_means):
            raise ValidationError(f"cluster means must lie in [0, 1], got {list(self.cluster_means)}")

    @property
    def arms(self) -> Tuple[str, ...]:
        return tuple(f"arm_{i}" for i in range(len(self.cluster_means) * self.arms_per_cluster))

    @property
    def clusters(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.cluster_means)), self.arms_per_cluster)

    @property
    def arm_means(self) -> np.ndarray:
        return np.asarray(self.cluster_means, dtype=np.float64)[self.clusters]

    def policy(self, seed: int = 0, scale: float = 0.5) -> PolicyParams:
        logits = np.random.default_rng(seed).normal(0.0, scale, size=(1, len(self.arms)))
        return PolicyParams(self.arms, ((),), logits, seed=seed, window=0)

    def true_gradient(self, p: PolicyParams) -> np.ndarray:
        pi = _softmax(p.logits[0])
        mu = self.arm_means
        return pi * mu - pi * float(pi @ mu)

    def sample(self, p: PolicyParams, N: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(arm indices, raw rewards, cluster-mean rewards) for N pulls."""
        pi = _softmax(p.logits[0])
        arms = rng.choice(len(pi), size=N, p=pi)
        rewards = (rng.random(N) < self.arm_means[arms]).astype(np.float64)
        clusters = self.clusters[arms]
        sums = np.bincount(clusters, weights=rewards, minlength=len(self.cluster_means))
        counts = np.bincount(clusters, minlength=len(self.cluster_means))
        means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        return arms, rewards, means[clusters]

    def batches(self, p: PolicyParams, N: int, rng: np.random.Generator) -> Tuple[PolicyBatch, PolicyBatch]:
        arms, raw, aggregated = self.sample(p, N, rng)
        steps = tuple((PolicyStep((), self.arms[a]),) for a in arms)
        return (
            PolicyBatch(steps, tuple(np.array([r]) for r in raw)),
            PolicyBatch(steps, tuple(np.array([r]) for r in aggregated)),
        )

    def estimate(self, p: PolicyParams, arms: np.ndarray, advantages: np.ndarray) -> np.ndarray:
        """Closed form of the one-context REINFORCE estimate for single-step trajectories."""
        pi = _softmax(p.logits[0])
        N = arms.shape[0]
        return np.bincount(arms, weights=advantages, minlength=len(pi)) / N - pi * (advantages.sum() / N)


def measure_gradient_errors(
    generator: BanditGenerator,
    p: PolicyParams,
    n_grid: Sequence[int] = DEFAULT_N_GRID,
    replicates: int = 50,
    seed: int = 0,
) -> Dict[str, Dict[int, float]]:
    """Mean ||g_hat - g||_2 over replicates, per N, for raw and aggregated advantages."""
    g = generator.true_gradient(p)
    rng = np.random.default_rng(seed)
    errors: Dict[str, Dict[int, float]] = {"raw": {}, "aggregated": {}}
    for N in tqdm(n_grid, desc="Gradient error grid", disable=None):
        raw_errors, agg_errors = [], []
        for _ in range(replicates):
            arms, raw, aggregated = generator.sample(p, N, rng)
            raw_errors.append(np.linalg.norm(generator.estimate(p, arms, raw) - g))
            agg_errors.append(np.linalg.norm(generator.estimate(p, arms, aggregated) - g))
        errors["raw"][N] = float(np.mean(raw_errors))
        errors["aggregated"][N] = float(np.mean(agg_errors))
    return errors


def _loglog_slope(errors: Dict[int, float]) -> float:
    ns = np.array(sorted(errors), dtype=np.float64)
    ys = np.array([errors[int(n)] for n in ns])
    X = np.vstack([np.log(ns), np.ones_like(ns)]).T
    slope, _ = np.linalg.lstsq(X, np.log(ys), rcond=None)[0]
    return float(slope)


@dataclass
class SlopeReport:
    n_grid: List[int]
    errors_raw: Dict[int, float]
    errors_aggregated: Dict[int, float]
    slope_raw: float
    slope_aggregated: float
    replicates: int
    tolerance: float = 0.1

    @property
    def within_tolerance(self) -> bool:
        return abs(self.slope_raw + 0.5) <= self.tolerance

    @property
    def aggregated_dominates(self) -> bool:
        return all(self.errors_aggregated[n] <= self.errors_raw[n] for n in self.n_grid)

    def to_json(self) -> dict:
        return dict(asdict(self), within_tolerance=self.within_tolerance, aggregated_dominates=self.aggregated_dominates)


def convergence_slope_check(
    p: PolicyParams,
    generator: BanditGenerator,
    n_grid: Sequence[int] = DEFAULT_N_GRID,
    replicates: int = 50,
    seed: int = 0,
) -> SlopeReport:
    """Least-squares slope of log mean error against log N; theory predicts -1/2."""
    if len(n_grid) < 2:
        raise ValidationError(f"slope needs at least two sample sizes, got {list(n_grid)}")
    errors = measure_gradient_errors(generator, p, n_grid, replicates, seed)
    for mode, values in errors.items():
        if any(v <= 0 for v in values.values()):
            raise DegenerateGeneratorError(
                f"{mode} gradient estimates have zero error at some N; the generator has no variance", errors=errors
            )
    report = SlopeReport(
        list(n_grid),
        errors["raw"],
        errors["aggregated"],
        _loglog_slope(errors["raw"]),
        _loglog_slope(errors["aggregated"]),
        replicates,
    )
    logger.info(f"Convergence slope: raw {report.slope_raw:.3f}, aggregated {report.slope_aggregated:.3f}")
    return report
