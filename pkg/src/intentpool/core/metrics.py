"""Internal clustering-quality metrics and their normalized combination over a k-range."""

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist, squareform
from sklearn.metrics import silhouette_score as _sk_silhouette

from .embed import EmbeddingMatrix
from .errors import ClusterMetricError
from .hac import ClusterAssignment, Dendrogram, cut_dendrogram

logger = logging.getLogger(__name__)

# within-cluster dispersion below this fraction of the total counts as zero
_ZERO_DISPERSION = 1e-20


@dataclass(frozen=True)
class MetricReport:
    k: int
    silhouette: float
    chi: float
    dbi: float
    combined: float = float("nan")

    @property
    def inv_dbi(self) -> float:
        return math.inf if self.dbi == 0 else 1.0 / self.dbi


def _aligned(m: EmbeddingMatrix, ca: ClusterAssignment):
    X = m.data.astype(np.float64)
    labels = np.array([ca.labels[uid] for uid in m.uids], dtype=np.int64)
    return X, labels


def _centroids(X: np.ndarray, labels: np.ndarray, k: int):
    sizes = np.bincount(labels, minlength=k)
    centroids = np.zeros((k, X.shape[1]), dtype=np.float64)
    np.add.at(centroids, labels, X)
    return centroids / sizes[:, None], sizes


def silhouette_score(m: EmbeddingMatrix, ca: ClusterAssignment) -> float:
    if ca.k < 2:
        raise ClusterMetricError(f"silhouette needs k >= 2, got {ca.k}")
    X, labels = _aligned(m, ca)
    if ca.k == m.n:
        return 0.0
    distances = squareform(pdist(X, metric="euclidean"))
    return float(_sk_silhouette(distances, labels, metric="precomputed"))


def calinski_harabasz(m: EmbeddingMatrix, ca: ClusterAssignment) -> float:
    n, k = m.n, ca.k
    if not 2 <= k <= n - 1:
        raise ClusterMetricError(f"Calinski-Harabasz needs 2 <= k <= n-1 = {n - 1}, got {k}")
    X, labels = _aligned(m, ca)
    centroids, sizes = _centroids(X, labels, k)
    grand = X.mean(axis=0)
    between = float(np.sum(sizes * np.sum((centroids - grand) ** 2, axis=1)))
    within = float(np.sum((X - centroids[labels]) ** 2))
    if within <= _ZERO_DISPERSION * max(1.0, between + within):
        return math.inf
    return (between / within) * ((n - k) / (k - 1))


def davies_bouldin(m: EmbeddingMatrix, ca: ClusterAssignment) -> float:
    k = ca.k
    if k < 2:
        raise ClusterMetricError(f"Davies-Bouldin needs k >= 2, got {k}")
    X, labels = _aligned(m, ca)
    centroids, _ = _centroids(X, labels, k)
    spread = np.zeros(k, dtype=np.float64)
    for c in range(k):
        spread[c] = np.linalg.norm(X[labels == c] - centroids[c], axis=1).mean()
    separation = squareform(pdist(centroids, metric="euclidean"))
    for i in range(k):
        for j in range(i + 1, k):
            if separation[i, j] == 0:
                raise ClusterMetricError(f"clusters {i} and {j} have coincident centroids", pair=(i, j))
    np.fill_diagonal(separation, np.inf)
    ratios = (spread[:, None] + spread[None, :]) / separation
    return float(np.mean(ratios.max(axis=1)))


def metric_report(m: EmbeddingMatrix, ca: ClusterAssignment) -> MetricReport:
    return MetricReport(ca.k, silhouette_score(m, ca), calinski_harabasz(m, ca), davies_bouldin(m, ca))


def _normalize(values: Sequence[float]) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    infinite = np.isinf(values)
    out[infinite] = 1.0
    finite = values[~infinite]
    if finite.size == 0:
        return out
    low, high = finite.min(), finite.max()
    if high == low:
        out[~infinite] = 0.5
    else:
        out[~infinite] = (finite - low) / (high - low)
    return out


def combined_score(reports: Iterable[MetricReport]) -> Dict[int, float]:
    """Min-max normalize silhouette, CHI and 1/DBI across k and average them per k."""
    reports = list(reports)
    ks = [r.k for r in reports]
    if len(set(ks)) < 2 or len(set(ks)) != len(ks):
        raise ClusterMetricError(f"combined score needs >= 2 distinct k values, got {ks}")
    normalized = np.vstack(
        [
            _normalize([r.silhouette for r in reports]),
            _normalize([r.chi for r in reports]),
            _normalize([r.inv_dbi for r in reports]),
        ]
    )
    return {k: float(v) for k, v in zip(ks, normalized.mean(axis=0))}


def metric_sweep(m: EmbeddingMatrix, dg: Dendrogram, ks: Iterable[int]) -> List[MetricReport]:
    reports = [metric_report(m, cut_dendrogram(dg, k, m)) for k in ks]
    combined = combined_score(reports)
    return [MetricReport(r.k, r.silhouette, r.chi, r.dbi, combined[r.k]) for r in reports]


def metric_sweep_frame(reports: Sequence[MetricReport]) -> pd.DataFrame:
    rows = []
    for r in reports:
        row = asdict(r)
        row["inv_dbi"] = r.inv_dbi
        rows.append(row)
    return pd.DataFrame(rows, columns=["k", "silhouette", "chi", "dbi", "inv_dbi", "combined"])


def write_metric_sweep(reports: Sequence[MetricReport], path: Union[str, Path]) -> None:
    metric_sweep_frame(reports).to_csv(path, index=False)
