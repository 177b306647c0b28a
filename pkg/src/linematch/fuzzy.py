"""Fuzzy candidate retrieval over a purchase-order pool.

Queries are matched against pool entries by tf-idf cosine over character
bigrams and trigrams, behind a noun-phrase gate: a candidate whose head
nouns share nothing with the query is out, whatever its score. An
inverted index keeps scoring proportional to overlapping features.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .textprep import Description, head_nouns, noun_phrase_gate
from .vectorize import (
    FUZZY_CONFIG,
    SparseVector,
    Vocabulary,
    fit_vocabulary,
    transform,
)


class PoolExhaustedError(LookupError):
    """No further alternate candidate is available."""


@dataclass(frozen=True)
class RankedCandidate:
    description: Description
    score: float
    rank: int  # 0-based position in the ranking


@dataclass
class CandidatePool:
    """Fitted retrieval pool: vocabulary, vectors, and inverted index."""

    descriptions: list[Description]
    vocabulary: Vocabulary
    vectors: list[SparseVector]
    # feature index -> [(position in descriptions, weight), ...]
    postings: dict[int, list[tuple[int, float]]] = field(repr=False)
    by_id: dict[str, int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.descriptions)

    def vector_for(self, desc_id: str) -> SparseVector:
        return self.vectors[self.by_id[desc_id]]

    def description_for(self, desc_id: str) -> Description:
        return self.descriptions[self.by_id[desc_id]]


def build_pool(descriptions: list[Description]) -> CandidatePool:
    if not descriptions:
        raise ValueError("cannot build a pool from zero descriptions")
    ids = [d.id for d in descriptions]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate description ids in pool")
    vocab = fit_vocabulary(descriptions, FUZZY_CONFIG)
    vectors = [transform(d, vocab) for d in descriptions]
    postings: dict[int, list[tuple[int, float]]] = {}
    for pos, vec in enumerate(vectors):
        for idx, val in zip(vec.indices.tolist(), vec.values.tolist()):
            postings.setdefault(idx, []).append((pos, val))
    by_id = {d.id: pos for pos, d in enumerate(descriptions)}
    return CandidatePool(descriptions, vocab, vectors, postings, by_id)


def _scores(pool: CandidatePool, query_vec: SparseVector) -> dict[int, float]:
    """Accumulate dot products via the inverted index (vectors are unit norm)."""
    acc: dict[int, float] = {}
    for idx, qval in zip(query_vec.indices.tolist(), query_vec.values.tolist()):
        for pos, weight in pool.postings.get(idx, ()):
            acc[pos] = acc.get(pos, 0.0) + qval * weight
    return acc


def rank_candidates(query: Description, pool: CandidatePool) -> list[RankedCandidate]:
    """Every candidate, best gated score first.

    The gate runs before ranking: a candidate whose head nouns share
    nothing with the query keeps score 0, whatever its cosine, so gate
    failures sink below every positive hit. Ties break on ascending
    description id so rankings are reproducible.
    """
    query_vec = transform(query, pool.vocabulary)
    acc = _scores(pool, query_vec)
    rows = []
    for pos, desc in enumerate(pool.descriptions):
        gated = acc.get(pos, 0.0) if noun_phrase_gate(query, desc) else 0.0
        rows.append((pos, gated))
    rows.sort(key=lambda pair: (-pair[1], pool.descriptions[pair[0]].id))
    return [
        RankedCandidate(pool.descriptions[pos], score, rank)
        for rank, (pos, score) in enumerate(rows)
    ]


def top_k(query: Description, pool: CandidatePool, k: int) -> list[RankedCandidate]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return rank_candidates(query, pool)[:k]


def best_match(query: Description, pool: CandidatePool) -> RankedCandidate | None:
    ranked = rank_candidates(query, pool)
    return ranked[0] if ranked else None


def next_alternate(
    query: Description,
    pool: CandidatePool,
    rejected_ids: set[str],
    policy: str = "second_best",
    seed: int | None = None,
) -> RankedCandidate:
    """Pick a replacement candidate after rejections.

    second_best walks the ranking in order; uniform_random draws among
    the remaining gate-passing candidates with a seeded generator.
    """
    if policy not in ("second_best", "uniform_random"):
        raise ValueError(f"unknown alternate policy {policy!r}")
    remaining = [
        c for c in rank_candidates(query, pool) if c.description.id not in rejected_ids
    ]
    if not remaining:
        raise PoolExhaustedError(
            f"no candidates left for query {query.id!r} after {len(rejected_ids)} rejections"
        )
    if policy == "second_best":
        return remaining[0]
    rng = random.Random(seed)
    return rng.choice(remaining)
