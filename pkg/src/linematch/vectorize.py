"""Tf-idf feature vectors over character and word n-grams.

Descriptions become L2-normalized sparse vectors. Two backends share the
same weighting: an exact vocabulary (gram -> dense index) and a hashed
space for dimension control when the exact vocabulary would be huge.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .textprep import Description


@dataclass(frozen=True)
class VectorizerConfig:
    analyzer: str = "char+word"  # char | word | char+word
    char_range: tuple[int, int] = (2, 5)
    word_range: tuple[int, int] = (1, 2)

    def __post_init__(self) -> None:
        if self.analyzer not in ("char", "word", "char+word"):
            raise ValueError(f"unknown analyzer {self.analyzer!r}")
        for lo, hi in (self.char_range, self.word_range):
            if lo < 1 or hi < lo:
                raise ValueError("invalid n-gram range")


# Fuzzy retrieval uses bigrams+trigrams only, distinct from the ranker's
# full char 2-5 + word-gram space.
FUZZY_CONFIG = VectorizerConfig(analyzer="char", char_range=(2, 3))


@dataclass(frozen=True)
class SparseVector:
    """Sorted sparse vector: strictly increasing indices, finite weights."""

    indices: np.ndarray  # int64, strictly increasing, all < dim
    values: np.ndarray  # float64
    dim: int

    @classmethod
    def from_pairs(cls, pairs: dict[int, float], dim: int) -> "SparseVector":
        items = sorted((i, v) for i, v in pairs.items() if v != 0.0)
        idx = np.array([i for i, _ in items], dtype=np.int64)
        val = np.array([v for _, v in items], dtype=np.float64)
        return cls(idx, val, dim)

    @classmethod
    def zero(cls, dim: int) -> "SparseVector":
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64), dim)

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.values):
            raise ValueError("indices/values length mismatch")
        if len(self.indices) > 0:
            if self.indices[0] < 0 or self.indices[-1] >= self.dim:
                raise ValueError("index out of range")
            if np.any(np.diff(self.indices) <= 0):
                raise ValueError("indices must be strictly increasing")
            if not np.all(np.isfinite(self.values)):
                raise ValueError("weights must be finite")

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def is_zero(self) -> bool:
        return len(self.indices) == 0

    def norm_sq(self) -> float:
        return float(np.dot(self.values, self.values))

    def norm(self) -> float:
        return float(np.sqrt(self.norm_sq()))

    def dot(self, other: "SparseVector") -> float:
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        if self.is_zero() or other.is_zero():
            return 0.0
        common, ia, ib = np.intersect1d(
            self.indices, other.indices, assume_unique=True, return_indices=True
        )
        if len(common) == 0:
            return 0.0
        return float(np.dot(self.values[ia], other.values[ib]))

    def scaled(self, alpha: float) -> "SparseVector":
        return SparseVector(self.indices, self.values * alpha, self.dim)

    def minus(self, other: "SparseVector") -> "SparseVector":
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        acc: dict[int, float] = {}
        for i, v in zip(self.indices.tolist(), self.values.tolist()):
            acc[i] = v
        for i, v in zip(other.indices.tolist(), other.values.tolist()):
            acc[i] = acc.get(i, 0.0) - v
        return SparseVector.from_pairs(acc, self.dim)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim, dtype=np.float64)
        if len(self.indices):
            dense[self.indices] = self.values
        return dense


def _doc_text(desc: Description | str) -> str:
    return desc if isinstance(desc, str) else desc.normalized_text


def _grams(text: str, config: VectorizerConfig) -> dict[str, int]:
    """Gram -> term frequency. Char grams keyed 'c:', word grams 'w:'."""
    counts: dict[str, int] = {}
    if config.analyzer in ("char", "char+word"):
        lo, hi = config.char_range
        for n in range(lo, hi + 1):
            for i in range(len(text) - n + 1):
                key = "c:" + text[i : i + n]
                counts[key] = counts.get(key, 0) + 1
    if config.analyzer in ("word", "char+word"):
        words = text.split()
        lo, hi = config.word_range
        for n in range(lo, hi + 1):
            for i in range(len(words) - n + 1):
                key = "w:" + " ".join(words[i : i + n])
                counts[key] = counts.get(key, 0) + 1
    return counts


def _idf(n_documents: int, df: float) -> float:
    # Smoothed idf; stays positive and defined for df in [0, N].
    return math.log((1.0 + n_documents) / (1.0 + df)) + 1.0


@dataclass
class Vocabulary:
    """Exact gram vocabulary with document frequencies. Immutable after fit."""

    index: dict[str, int]
    document_frequency: np.ndarray  # int64, len == dim
    n_documents: int
    config: VectorizerConfig

    @property
    def dim(self) -> int:
        return len(self.index)

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "kind": "vocabulary",
            "analyzer": self.config.analyzer,
            "char_range": list(self.config.char_range),
            "word_range": list(self.config.word_range),
            "n_documents": self.n_documents,
            "index": self.index,
            "document_frequency": self.document_frequency.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        if data.get("v") != 1 or data.get("kind") != "vocabulary":
            raise ValueError("unsupported vocabulary snapshot")
        config = VectorizerConfig(
            analyzer=data["analyzer"],
            char_range=tuple(data["char_range"]),
            word_range=tuple(data["word_range"]),
        )
        return cls(
            index=dict(data["index"]),
            document_frequency=np.array(data["document_frequency"], dtype=np.int64),
            n_documents=int(data["n_documents"]),
            config=config,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_vocabulary(
    corpus: Sequence[Description | str],
    config: VectorizerConfig = VectorizerConfig(),
) -> Vocabulary:
    """Fit the exact vocabulary over a corpus; indices assigned in sorted gram order."""
    if not corpus:
        raise ValueError("cannot fit vocabulary on an empty corpus")
    df: dict[str, int] = {}
    for doc in corpus:
        for gram in _grams(_doc_text(doc), config):
            df[gram] = df.get(gram, 0) + 1
    grams = sorted(df)
    index = {g: i for i, g in enumerate(grams)}
    df_arr = np.array([df[g] for g in grams], dtype=np.int64)
    return Vocabulary(index, df_arr, len(corpus), config)


def transform(desc: Description | str, vocab: Vocabulary) -> SparseVector:
    """Tf-idf transform: weight = tf * idf, L2-normalized. Unseen grams drop."""
    counts = _grams(_doc_text(desc), vocab.config)
    pairs: dict[int, float] = {}
    for gram, tf in counts.items():
        idx = vocab.index.get(gram)
        if idx is None:
            continue
        pairs[idx] = tf * _idf(vocab.n_documents, float(vocab.document_frequency[idx]))
    vec = SparseVector.from_pairs(pairs, vocab.dim)
    norm = vec.norm()
    if norm == 0.0:
        return vec
    return vec.scaled(1.0 / norm)


def cosine(a: SparseVector, b: SparseVector) -> float:
    """Cosine similarity; 0 if either vector is zero."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    na, nb = a.norm(), b.norm()
    if na == 0.0 or nb == 0.0:
        return 0.0
    return a.dot(b) / (na * nb)


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


@dataclass
class HashedVocabulary:
    """Hashed feature space with per-index document frequencies.

    Gram indices come from a stable 64-bit FNV-1a hash folded to D
    (power of two); the hash's top bit decides the sign. Document
    frequencies are counted per hashed index at fit time so hashed
    vectors keep the same tf-idf weighting as the exact transform.
    """

    dim: int
    document_frequency: np.ndarray
    n_documents: int
    config: VectorizerConfig
    _cache: dict[str, tuple[int, float]] = field(default_factory=dict, repr=False)

    def slot(self, gram: str) -> tuple[int, float]:
        hit = self._cache.get(gram)
        if hit is None:
            h = fnv1a64(gram.encode("utf-8"))
            sign = -1.0 if (h >> 63) & 1 else 1.0
            hit = (h & (self.dim - 1), sign)
            self._cache[gram] = hit
        return hit

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "kind": "hashed_vocabulary",
            "dim": self.dim,
            "analyzer": self.config.analyzer,
            "char_range": list(self.config.char_range),
            "word_range": list(self.config.word_range),
            "n_documents": self.n_documents,
            "document_frequency": self.document_frequency.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HashedVocabulary":
        if data.get("v") != 1 or data.get("kind") != "hashed_vocabulary":
            raise ValueError("unsupported hashed vocabulary snapshot")
        config = VectorizerConfig(
            analyzer=data["analyzer"],
            char_range=tuple(data["char_range"]),
            word_range=tuple(data["word_range"]),
        )
        return cls(
            dim=int(data["dim"]),
            document_frequency=np.array(data["document_frequency"], dtype=np.int64),
            n_documents=int(data["n_documents"]),
            config=config,
        )


def fit_hashed(
    corpus: Sequence[Description | str],
    dim: int,
    config: VectorizerConfig = VectorizerConfig(),
) -> HashedVocabulary:
    if dim < 2 or dim & (dim - 1) != 0:
        raise ValueError("hashed dimension must be a power of two >= 2")
    if not corpus:
        raise ValueError("cannot fit hashed space on an empty corpus")
    hashed = HashedVocabulary(
        dim=dim,
        document_frequency=np.zeros(dim, dtype=np.int64),
        n_documents=len(corpus),
        config=config,
    )
    for doc in corpus:
        touched = {hashed.slot(g)[0] for g in _grams(_doc_text(doc), config)}
        for idx in touched:
            hashed.document_frequency[idx] += 1
    return hashed


def hash_transform(desc: Description | str, hashed: HashedVocabulary) -> SparseVector:
    """Hashed tf-idf transform; deterministic across processes and machines."""
    counts = _grams(_doc_text(desc), hashed.config)
    acc: dict[int, float] = {}
    for gram, tf in counts.items():
        idx, sign = hashed.slot(gram)
        acc[idx] = acc.get(idx, 0.0) + sign * tf
    pairs = {
        idx: val * _idf(hashed.n_documents, float(hashed.document_frequency[idx]))
        for idx, val in acc.items()
        if val != 0.0
    }
    vec = SparseVector.from_pairs(pairs, hashed.dim)
    norm = vec.norm()
    if norm == 0.0:
        return vec
    return vec.scaled(1.0 / norm)
