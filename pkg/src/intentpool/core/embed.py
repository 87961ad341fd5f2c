"""
Utterance embeddings: a deterministic character n-gram hash featurizer, an
OpenAI-compatible remote client, a persistent content-addressed cache, and the
matrix file format (JSON sidecar + raw little-endian float32 block).
"""

import hashlib
import json
import logging
import threading
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import openai
import regex
from tenacity import RetryError, retry, retry_if_exception_type, stop_after_attempt, wait_exponential
from tqdm import tqdm

from .constants import (
    EMBED_BATCH_SIZE,
    EMBED_DIM,
    EMBED_MODEL,
    EMBED_NGRAM_RANGE,
    EMBED_NUMBER_HASHES,
    EMBED_NUMBER_WEIGHT,
    EMBED_RETRY_ATTEMPTS,
    EMBED_RETRY_INITIAL_WAIT,
)
from .errors import ConfigError, EmbeddingServiceError, MatrixChecksumError, MatrixFormatError, ValidationError
from .trajectory import TrajectorySet
from .utils import atomic_write_bytes, atomic_write_text, canonical_json, sha256_bytes, sha256_text

logger = logging.getLogger(__name__)

TRANSIENT_ERRORS = (
    openai.APIConnectionError,
    openai.APITimeoutError,
    openai.RateLimitError,
    openai.InternalServerError,
    ConnectionError,
    TimeoutError,
)


class EmbedderKind(str, Enum):
    HASH = "hash_featurizer"
    REMOTE = "remote_service"

    @classmethod
    def parse(cls, value: Union[str, "EmbedderKind"]) -> "EmbedderKind":
        aliases = {"hash": cls.HASH, "remote": cls.REMOTE}
        if isinstance(value, str) and value in aliases:
            return aliases[value]
        return cls(value)


@dataclass
class EmbedderConfig:
    kind: EmbedderKind = EmbedderKind.HASH
    d: int = EMBED_DIM
    normalize: bool = True
    ngram_range: Tuple[int, int] = EMBED_NGRAM_RANGE
    number_weight: float = EMBED_NUMBER_WEIGHT
    seed: int = 0
    endpoint: Optional[str] = None
    api_key: Optional[str] = field(default=None, repr=False)
    model: str = EMBED_MODEL
    batch_size: int = EMBED_BATCH_SIZE

    def __post_init__(self):
        try:
            self.kind = EmbedderKind.parse(self.kind)
        except ValueError:
            raise ConfigError(f"Unknown embedder kind {self.kind!r}") from None
        self.ngram_range = tuple(self.ngram_range)
        if self.d < 2:
            raise ConfigError(f"Embedding dimension must be >= 2, got {self.d}")
        if len(self.ngram_range) != 2 or not 1 <= self.ngram_range[0] <= self.ngram_range[1]:
            raise ConfigError(f"Invalid ngram_range {self.ngram_range}")
        if self.number_weight < 0:
            raise ConfigError(f"number_weight must be non-negative, got {self.number_weight}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")

    def validate_remote(self) -> None:
        if self.kind == EmbedderKind.REMOTE and not self.endpoint:
            raise ConfigError("Remote embedder requires an endpoint (config or INTENTPOOL_EMBED_ENDPOINT)")

    def fingerprint(self) -> str:
        """Hash of everything that shapes the vectors; credentials and transport are left out."""
        payload = {"kind": self.kind.value, "d": self.d, "normalize": self.normalize}
        if self.kind == EmbedderKind.HASH:
            payload.update(ngram_range=list(self.ngram_range), number_weight=self.number_weight, seed=self.seed)
        else:
            payload.update(model=self.model)
        return sha256_text(canonical_json(payload))

    def to_json(self) -> dict:
        data = asdict(self)
        data["kind"] = self.kind.value
        data["ngram_range"] = list(self.ngram_range)
        data.pop("api_key")
        return data


@dataclass(frozen=True)
class EmbeddingMatrix:
    data: np.ndarray
    uids: Tuple[int, ...]
    uid_index: Dict[int, int] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise MatrixFormatError(f"Embedding matrix must be 2-D, got shape {data.shape}")
        if data.shape[0] != len(self.uids):
            raise MatrixFormatError(f"{data.shape[0]} rows but {len(self.uids)} uids")
        if not np.all(np.isfinite(data)):
            raise MatrixFormatError("Embedding matrix contains non-finite entries")
        index = {int(uid): row for row, uid in enumerate(self.uids)}
        if len(index) != len(self.uids):
            raise MatrixFormatError("Embedding matrix uids are not unique")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "uids", tuple(int(u) for u in self.uids))
        object.__setattr__(self, "uid_index", index)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def row(self, uid: int) -> np.ndarray:
        return self.data[self.uid_index[uid]]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return self.uids == other.uids and np.array_equal(self.data, other.data)


# --------------------------------------------------------------------------- hash featurizer


_NUMBER_TOKEN = regex.compile(r"\d+(?:\.\d+)?")


@lru_cache(maxsize=1 << 18)
def _gram_hash(gram: str, seed: int) -> int:
    digest = hashlib.blake2b(f"{seed}\x1f{gram}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _char_ngrams(text: str, ngram_range: Tuple[int, int]) -> List[str]:
    padded = f" {' '.join(text.lower().split())} "
    grams = []
    low, high = ngram_range
    for n in range(low, high + 1):
        grams.extend(padded[i : i + n] for i in range(len(padded) - n + 1))
    # shorter than the smallest n-gram: the whole padded string stands in
    return grams or [padded]


def _signed_buckets(keys: Sequence[str], cfg: EmbedderConfig) -> np.ndarray:
    vector = np.zeros(cfg.d, dtype=np.float64)
    for key in keys:
        h = _gram_hash(key, cfg.seed)
        vector[h % cfg.d] += 1.0 if (h >> 63) & 1 else -1.0
    return vector


def hash_featurize(text: str, cfg: EmbedderConfig) -> np.ndarray:
    """
    Signed hashing of character n-grams. Whole number tokens ("60", "109") are hashed
    again as units so that utterances differing only in a quantity stay apart.
    """
    vector = _signed_buckets(_char_ngrams(text, cfg.ngram_range), cfg)
    numbers = _NUMBER_TOKEN.findall(text)
    if numbers and cfg.number_weight > 0:
        keys = [f"#{j}:{token}" for token in numbers for j in range(EMBED_NUMBER_HASHES)]
        extra = _signed_buckets(keys, cfg)
        extra_norm = np.linalg.norm(extra)
        if extra_norm > 0:
            vector += cfg.number_weight * np.linalg.norm(vector) * extra / extra_norm
    if cfg.normalize:
        norm = np.linalg.norm(vector)
        if norm > 0:
            vector /= norm
    return vector.astype(np.float32)


# --------------------------------------------------------------------------- remote client


def _field(item, name):
    return item[name] if isinstance(item, dict) else getattr(item, name)


class RemoteEmbedder:
    """Client for an OpenAI-compatible `/embeddings` endpoint."""

    def __init__(self, cfg: EmbedderConfig, client=None):
        self.cfg = cfg
        if client is None:
            cfg.validate_remote()
            client = openai.OpenAI(base_url=cfg.endpoint, api_key=cfg.api_key or "unset", max_retries=0)
        self.client = client

    @retry(
        wait=wait_exponential(multiplier=EMBED_RETRY_INITIAL_WAIT, max=4),
        stop=stop_after_attempt(EMBED_RETRY_ATTEMPTS),
        retry=retry_if_exception_type(TRANSIENT_ERRORS),
    )
    def _create(self, batch: List[str]):
        return self.client.embeddings.create(model=self.cfg.model, input=batch)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.cfg.d), dtype=np.float32)
        for start in range(0, len(texts), self.cfg.batch_size):
            batch = list(texts[start : start + self.cfg.batch_size])
            try:
                response = self._create(batch)
            except RetryError as e:
                raise EmbeddingServiceError(
                    f"Embedding service unreachable after {EMBED_RETRY_ATTEMPTS} attempts: {e.last_attempt.exception()}"
                ) from e
            except openai.OpenAIError as e:
                raise EmbeddingServiceError(f"Embedding service rejected the request: {e}") from e
            data = sorted(_field(response, "data"), key=lambda item: _field(item, "index"))
            if len(data) != len(batch):
                raise EmbeddingServiceError(f"Requested {len(batch)} embeddings, service returned {len(data)}")
            for offset, item in enumerate(data):
                vector = np.asarray(_field(item, "embedding"), dtype=np.float64)
                if vector.shape != (self.cfg.d,):
                    raise EmbeddingServiceError(
                        f"Service returned dimension {vector.shape[-1] if vector.ndim else 0}, expected {self.cfg.d}"
                    )
                if self.cfg.normalize:
                    norm = np.linalg.norm(vector)
                    if norm > 0:
                        vector = vector / norm
                out[start + offset] = vector
        return out


def embed_texts(cfg: EmbedderConfig, texts: Sequence[str], client=None) -> np.ndarray:
    """Embed `texts` into an (len(texts), d) float32 array, preserving input order."""
    if len(texts) == 0:
        raise ValidationError("embed_texts requires at least one text")
    if cfg.kind == EmbedderKind.HASH:
        return np.stack([hash_featurize(text, cfg) for text in texts])
    return RemoteEmbedder(cfg, client=client).embed(texts)


# --------------------------------------------------------------------------- cache


class EmbeddingCache:
    """
    Persistent text -> vector cache keyed by sha256(cfg fingerprint, text).

    The file is a JSON object {"entries": {...}, "checksum": ...}; a checksum mismatch or
    unreadable file is logged and the cache starts empty. Writes are serialized and atomic.
    """

    _write_lock = threading.Lock()

    def __init__(self, path: Optional[Union[str, Path]]):
        self.path = Path(path) if path is not None else None
        self.entries: Dict[str, List[float]] = {}
        self.hits = 0
        self.misses = 0
        self.rebuilt = False
        if self.path is not None and self.path.exists():
            self._load()

    @staticmethod
    def key(text: str, fingerprint: str) -> str:
        return sha256_text(f"{fingerprint}\x00{text}")

    def _load(self) -> None:
        try:
            payload = json.loads(self.path.read_text(encoding="utf-8"))
            entries = payload["entries"]
            if sha256_text(canonical_json(entries)) != payload["checksum"]:
                raise ValueError("checksum mismatch")
        except (OSError, ValueError, KeyError, TypeError) as e:
            logger.warning(f"Embedding cache {self.path} is corrupt ({e}); rebuilding")
            self.rebuilt = True
            return
        self.entries = entries

    def get(self, text: str, fingerprint: str) -> Optional[np.ndarray]:
        vector = self.entries.get(self.key(text, fingerprint))
        if vector is None:
            self.misses += 1
            return None
        self.hits += 1
        return np.asarray(vector, dtype=np.float32)

    def put(self, text: str, fingerprint: str, vector: np.ndarray) -> None:
        self.entries[self.key(text, fingerprint)] = [float(x) for x in np.asarray(vector, dtype=np.float32)]

    def save(self) -> None:
        if self.path is None:
            return
        with self._write_lock:
            payload = {"entries": self.entries, "checksum": sha256_text(canonical_json(self.entries))}
            atomic_write_text(self.path, json.dumps(payload, sort_keys=True))


def embed_corpus(
    cfg: EmbedderConfig,
    trajectory_set: TrajectorySet,
    cache_path: Optional[Union[str, Path]] = None,
    client=None,
) -> EmbeddingMatrix:
    """Embed every corpus utterance, each distinct text exactly once, consulting the cache first."""
    fingerprint = cfg.fingerprint()
    cache = EmbeddingCache(cache_path)

    distinct: Dict[str, Optional[np.ndarray]] = {}
    for utterance in trajectory_set.corpus:
        if utterance.text not in distinct:
            distinct[utterance.text] = cache.get(utterance.text, fingerprint)
    missing = [text for text, vector in distinct.items() if vector is None]
    logger.info(
        f"Embedding corpus: {len(trajectory_set.corpus)} utterances, {len(distinct)} distinct texts, "
        f"{len(missing)} cache misses"
    )
    if missing:
        vectors = embed_texts(cfg, missing, client=client)
        for text, vector in zip(missing, vectors):
            distinct[text] = vector
            cache.put(text, fingerprint, vector)
        cache.save()

    if not trajectory_set.corpus:
        return EmbeddingMatrix(np.zeros((0, cfg.d), dtype=np.float32), ())
    rows = [distinct[u.text] for u in tqdm(trajectory_set.corpus, desc="Assembling embeddings", disable=None)]
    return EmbeddingMatrix(np.stack(rows), tuple(u.uid for u in trajectory_set.corpus))


# --------------------------------------------------------------------------- binary blocks


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def write_float_block(array: np.ndarray, path: Union[str, Path], dtype: str = "<f4") -> str:
    """Write a row-major little-endian block and return its sha256."""
    data = np.ascontiguousarray(array, dtype=np.dtype(dtype)).tobytes(order="C")
    atomic_write_bytes(path, data)
    return sha256_bytes(data)


def read_float_block(path: Union[str, Path], shape: Tuple[int, ...], checksum: str, dtype: str = "<f4") -> np.ndarray:
    data = Path(path).read_bytes()
    expected = int(np.prod(shape)) * np.dtype(dtype).itemsize
    if len(data) != expected:
        raise MatrixFormatError(f"{path}: data length {len(data)} bytes, header implies {expected}")
    if sha256_bytes(data) != checksum:
        raise MatrixChecksumError(f"{path}: checksum mismatch")
    return np.frombuffer(data, dtype=np.dtype(dtype)).reshape(shape).copy()


def save_matrix(m: EmbeddingMatrix, path: Union[str, Path]) -> None:
    path = Path(path)
    checksum = write_float_block(m.data, path, "<f4")
    meta = {"n": m.n, "d": m.d, "uids": list(m.uids), "checksum": checksum, "dtype": "<f4"}
    atomic_write_text(_sidecar(path), json.dumps(meta))
    logger.debug(f"Saved {m.n}x{m.d} embedding matrix to {path}")


def load_matrix(path: Union[str, Path]) -> EmbeddingMatrix:
    path = Path(path)
    try:
        meta = json.loads(_sidecar(path).read_text(encoding="utf-8"))
        n, d, uids, checksum = meta["n"], meta["d"], meta["uids"], meta["checksum"]
    except (OSError, ValueError, KeyError) as e:
        raise MatrixFormatError(f"{path}: unreadable matrix header ({e})") from None
    if len(uids) != n:
        raise MatrixFormatError(f"{path}: header lists {len(uids)} uids for {n} rows")
    data = read_float_block(path, (n, d), checksum, "<f4")
    return EmbeddingMatrix(data.astype(np.float32), tuple(uids))
