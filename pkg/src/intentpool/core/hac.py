"""
Average-linkage agglomerative clustering over an embedding matrix.

Leaves are matrix rows 0..n-1; merge i creates node n+i. Cluster-to-cluster distances
are maintained with Lance-Williams updates on a full distance matrix; the closest pair is
merged at every step, ties going to the lexicographically smallest (left, right) node-id
pair.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .constants import LINKAGE_TIE_TOLERANCE
from .embed import EmbeddingMatrix, read_float_block, write_float_block
from .errors import ValidationError
from .utils import atomic_write_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    node_id: int


@dataclass(frozen=True)
class Dendrogram:
    n: int
    merges: Tuple[Merge, ...]

    def __post_init__(self):
        if len(self.merges) != max(self.n - 1, 0):
            raise ValidationError(f"Dendrogram over {self.n} leaves needs {self.n - 1} merges, got {len(self.merges)}")
        used = set()
        for i, merge in enumerate(self.merges):
            if merge.node_id != self.n + i:
                raise ValidationError(f"merge {i} creates node {merge.node_id}, expected {self.n + i}")
            for node in (merge.left, merge.right):
                if node in used or node >= merge.node_id:
                    raise ValidationError(f"node {node} cannot be merged at step {i}")
                used.add(node)

    @property
    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges], dtype=np.float64)

    def pairs(self) -> List[Tuple[int, int]]:
        return [(m.left, m.right) for m in self.merges]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "merges": [{"left": m.left, "right": m.right, "height": m.height, "id": m.node_id} for m in self.merges],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Dendrogram":
        merges = tuple(Merge(int(m["left"]), int(m["right"]), float(m["height"]), int(m["id"])) for m in data["merges"])
        return cls(int(data["n"]), merges)


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    labels: Dict[int, int]
    centroids: np.ndarray
    sizes: Tuple[int, ...]
    uids: Tuple[int, ...] = field(default=(), compare=False)

    @property
    def d(self) -> int:
        return self.centroids.shape[1]

    def label_of(self, uid: int) -> int:
        return self.labels[uid]

    def row_labels(self) -> np.ndarray:
        """Labels aligned with the rows of the matrix the assignment was cut from."""
        return np.array([self.labels[uid] for uid in self.uids], dtype=np.int64)

    def __eq__(self, other):
        if not isinstance(other, ClusterAssignment):
            return NotImplemented
        return (
            self.k == other.k
            and self.labels == other.labels
            and self.sizes == other.sizes
            and np.array_equal(self.centroids, other.centroids)
        )


def _check_matrix(m: EmbeddingMatrix) -> None:
    if m.n < 2:
        raise ValidationError(f"HAC needs at least 2 points, got {m.n}")
    if not np.all(np.isfinite(m.data)):
        raise ValidationError("HAC input contains non-finite entries")


def build_dendrogram(m: EmbeddingMatrix) -> Dendrogram:
    _check_matrix(m)
    n = m.n
    X = m.data.astype(np.float64)
    D = squareform(pdist(X, metric="euclidean"))
    np.fill_diagonal(D, np.inf)

    node_of = np.arange(n, dtype=np.int64)  # slot -> current node id
    size = np.ones(n, dtype=np.float64)
    active = np.ones(n, dtype=bool)
    row_min = D.min(axis=1)
    row_arg = D.argmin(axis=1)

    merges = []
    last_height = 0.0
    for step in range(n - 1):
        dmin = row_min.min()
        threshold = dmin + LINKAGE_TIE_TOLERANCE * max(1.0, abs(dmin))
        best = None
        for a in np.flatnonzero(row_min <= threshold):
            for b in np.flatnonzero(D[a] <= threshold):
                pair = tuple(sorted((int(node_of[a]), int(node_of[b]))))
                if best is None or pair < best[0]:
                    best = (pair, min(a, b), max(a, b))
        (left, right), a, b = best
        height = float(D[a, b])
        if height < last_height - 1e-9 * max(1.0, last_height):
            raise AssertionError(f"average-linkage heights decreased at merge {step}: {height} < {last_height}")
        height = max(height, last_height)
        last_height = height
        merges.append(Merge(left, right, height, n + step))

        # Lance-Williams average linkage, merged cluster kept in slot a
        merged = (size[a] * D[a] + size[b] * D[b]) / (size[a] + size[b])
        D[a, :] = merged
        D[:, a] = merged
        D[b, :] = np.inf
        D[:, b] = np.inf
        D[a, a] = np.inf
        size[a] += size[b]
        active[b] = False
        node_of[a] = n + step
        row_min[b] = np.inf

        stale = active & ((row_arg == a) | (row_arg == b))
        stale[a] = True
        for k in np.flatnonzero(stale):
            row_arg[k] = int(np.argmin(D[k]))
            row_min[k] = D[k, row_arg[k]]
        fresh = active & ~stale & (D[:, a] < row_min)
        row_min[fresh] = D[fresh, a]
        row_arg[fresh] = a

    logger.debug(f"Built dendrogram over {n} points, top height {last_height:.4f}")
    return Dendrogram(n, tuple(merges))


def cut_labels(dg: Dendrogram, k: int) -> np.ndarray:
    """Per-leaf labels for a k-cluster cut, ordered by ascending minimum member leaf."""
    if not 1 <= k <= dg.n:
        raise ValidationError(f"k must lie in [1, {dg.n}], got {k}")
    parent = list(range(2 * dg.n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for merge in dg.merges[: dg.n - k]:
        parent[find(merge.left)] = merge.node_id
        parent[find(merge.right)] = merge.node_id
    roots = [find(leaf) for leaf in range(dg.n)]
    first_seen: Dict[int, int] = {}
    labels = np.empty(dg.n, dtype=np.int64)
    for leaf, root in enumerate(roots):
        labels[leaf] = first_seen.setdefault(root, len(first_seen))
    return labels


def cut_dendrogram(dg: Dendrogram, k: int, m: EmbeddingMatrix) -> ClusterAssignment:
    if m.n != dg.n:
        raise ValidationError(f"Matrix has {m.n} rows, dendrogram {dg.n} leaves")
    leaf_labels = cut_labels(dg, k)
    # relabel by ascending minimum member uid
    order = np.argsort(np.array(m.uids, dtype=np.int64), kind="stable")
    remap: Dict[int, int] = {}
    for row in order:
        remap.setdefault(int(leaf_labels[row]), len(remap))
    row_labels = np.array([remap[int(lab)] for lab in leaf_labels], dtype=np.int64)

    X = m.data.astype(np.float64)
    sizes = np.bincount(row_labels, minlength=k)
    centroids = np.zeros((k, m.d), dtype=np.float64)
    np.add.at(centroids, row_labels, X)
    centroids /= sizes[:, None]
    labels = {uid: int(lab) for uid, lab in zip(m.uids, row_labels)}
    return ClusterAssignment(k, labels, centroids, tuple(int(s) for s in sizes), tuple(m.uids))


def nearest_centroid_assign(ca: ClusterAssignment, v: np.ndarray) -> int:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (ca.d,):
        raise ValidationError(f"Vector has shape {v.shape}, centroids have dimension {ca.d}")
    distances = np.linalg.norm(ca.centroids - v, axis=1)
    return int(np.argmin(distances))


# --------------------------------------------------------------------------- files


def save_dendrogram(dg: Dendrogram, path: Union[str, Path]) -> None:
    atomic_write_text(path, json.dumps(dg.to_json()))


def load_dendrogram(path: Union[str, Path]) -> Dendrogram:
    with open(path, "r", encoding="utf-8") as f:
        return Dendrogram.from_json(json.load(f))


def save_assignment(ca: ClusterAssignment, path: Union[str, Path]) -> None:
    path = Path(path)
    block = path.with_name(path.stem + ".centroids.f64")
    checksum = write_float_block(ca.centroids, block, "<f8")
    record = {
        "k": ca.k,
        "d": ca.d,
        "uids": list(ca.uids),
        "labels": {str(uid): label for uid, label in sorted(ca.labels.items())},
        "sizes": list(ca.sizes),
        "centroids": {"file": block.name, "dtype": "<f8", "checksum": checksum},
    }
    atomic_write_text(path, json.dumps(record))


def load_assignment(path: Union[str, Path]) -> ClusterAssignment:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        record = json.load(f)
    block = record["centroids"]
    centroids = read_float_block(path.with_name(block["file"]), (record["k"], record["d"]), block["checksum"], "<f8")
    labels = {int(uid): int(label) for uid, label in record["labels"].items()}
    return ClusterAssignment(record["k"], labels, centroids, tuple(record["sizes"]), tuple(record["uids"]))
