"""Evaluation protocol: triple precision, learning curves, encoder table.

Precision counts a triple as correct only when the preferred candidate
strictly outscores the rejected one; ties are misses. Online learning
is summarized as a curve of test precision at sample-count checkpoints,
averaged over seeded permutations of the training stream, next to an
untrained cosine baseline. A fresh model scores by plain dot product,
so on unit-length vectors its checkpoint-0 precision and the cosine
baseline are the same number, not merely close.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .corpus import TripleStrings
from .ranker import BilinearRanker, Triple
from .vectorize import (
    SparseVector,
    VectorizerConfig,
    cosine,
    fit_hashed,
    fit_vocabulary,
    hash_transform,
    transform,
)

Scorer = Callable[[SparseVector, SparseVector], float]


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class PrecisionReport:
    n_triples: int
    n_correct: int
    margins: tuple[float, ...]  # preferred score minus rejected score

    @property
    def precision(self) -> float:
        return self.n_correct / self.n_triples

    def recount(self) -> int:
        return sum(1 for m in self.margins if m > 0.0)


def precision(scorer: Scorer, triples: Sequence[Triple]) -> PrecisionReport:
    """Strict-inequality precision: a tie is a miss."""
    if not triples:
        raise EvalError("no triples to evaluate")
    margins = []
    correct = 0
    for t in triples:
        m = scorer(t.query, t.preferred) - scorer(t.query, t.rejected)
        margins.append(m)
        if m > 0.0:
            correct += 1
    return PrecisionReport(len(triples), correct, tuple(margins))


def cosine_scorer(a: SparseVector, b: SparseVector) -> float:
    return cosine(a, b)


def model_scorer(model: BilinearRanker) -> Scorer:
    return model.score


# -- encoders ---------------------------------------------------------------


@dataclass(frozen=True)
class FittedEncoder:
    name: str
    dim: int
    encode: Callable[[str], SparseVector]


EncoderFactory = Callable[[Sequence[str]], FittedEncoder]


def exact_tfidf_encoder(
    config: VectorizerConfig = VectorizerConfig(),
) -> EncoderFactory:
    def fit(texts: Sequence[str]) -> FittedEncoder:
        vocab = fit_vocabulary(texts, config)
        return FittedEncoder(
            "tfidf-exact", vocab.dim, lambda s: transform(s, vocab)
        )

    return fit


def hashed_tfidf_encoder(
    dim: int, config: VectorizerConfig = VectorizerConfig()
) -> EncoderFactory:
    def fit(texts: Sequence[str]) -> FittedEncoder:
        hashed = fit_hashed(texts, dim, config)
        return FittedEncoder(
            f"tfidf-hashed-{dim}", dim, lambda s: hash_transform(s, hashed)
        )

    return fit


def encode_triples(
    triples: Sequence[TripleStrings], encoder: FittedEncoder
) -> list[Triple]:
    cache: dict[str, SparseVector] = {}

    def enc(text: str) -> SparseVector:
        vec = cache.get(text)
        if vec is None:
            vec = encoder.encode(text)
            cache[text] = vec
        return vec

    return [
        Triple(enc(t.query), enc(t.preferred), enc(t.rejected)) for t in triples
    ]


# -- learning curves ---------------------------------------------------------


def _mean(values: Sequence[float]) -> float:
    # identical inputs short-circuit so "all permutations agree" survives
    # as exact equality instead of picking up division noise
    if min(values) == max(values):
        return values[0]
    return math.fsum(values) / len(values)


def _std(values: Sequence[float]) -> float:
    if min(values) == max(values):
        return 0.0
    mu = _mean(values)
    return math.sqrt(math.fsum((v - mu) ** 2 for v in values) / len(values))


def default_checkpoints(n_train: int, n_points: int = 10) -> tuple[int, ...]:
    """0 plus n_points evenly spaced counts ending at n_train."""
    if n_train < 1:
        raise EvalError("need at least one training triple")
    points = {0}
    for i in range(1, n_points + 1):
        points.add(round(i * n_train / n_points))
    return tuple(sorted(points))


@dataclass(frozen=True)
class LearningCurve:
    checkpoints: tuple[int, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]
    per_permutation: tuple[tuple[float, ...], ...]  # [perm][checkpoint]
    cosine_baseline: float
    n_permutations: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "kind": "learning_curve",
            "checkpoints": list(self.checkpoints),
            "mean_precision": list(self.means),
            "std_precision": list(self.stds),
            "cosine_baseline": self.cosine_baseline,
            "n_permutations": self.n_permutations,
            "seed": self.seed,
        }

    def to_text(self) -> str:
        lines = [
            f"{'samples':>10}  {'mean':>8}  {'std':>8}",
        ]
        for c, m, s in zip(self.checkpoints, self.means, self.stds):
            lines.append(f"{c:>10}  {m:>8.4f}  {s:>8.4f}")
        lines.append(f"cosine baseline: {self.cosine_baseline:.4f}")
        lines.append(
            f"permutations: {self.n_permutations}  seed: {self.seed}"
        )
        return "\n".join(lines)


def learning_curve(
    model_factory: Callable[[], BilinearRanker],
    train_triples: Sequence[Triple],
    test_triples: Sequence[Triple],
    n_permutations: int = 20,
    checkpoints: Sequence[int] | None = None,
    seed: int = 0,
) -> LearningCurve:
    """Mean test precision at each checkpoint over seeded permutations.

    Checkpoint 0 is the untrained model; its precision is identical in
    every permutation and equals the cosine baseline on unit vectors.
    """
    if not train_triples:
        raise EvalError("no training triples")
    if checkpoints is None:
        checkpoints = default_checkpoints(len(train_triples))
    checkpoints = tuple(sorted(set(int(c) for c in checkpoints)))
    if checkpoints[0] < 0 or checkpoints[-1] > len(train_triples):
        raise EvalError("checkpoints must lie within [0, n_train]")

    baseline = precision(cosine_scorer, test_triples).precision
    per_perm: list[tuple[float, ...]] = []
    for perm in range(n_permutations):
        order = list(train_triples)
        random.Random(f"{seed}:{perm}").shuffle(order)
        model = model_factory()
        scores: list[float] = []
        consumed = 0
        for cp in checkpoints:
            while consumed < cp:
                model.update(order[consumed])
                consumed += 1
            scores.append(precision(model.score, test_triples).precision)
        per_perm.append(tuple(scores))

    means = tuple(_mean([p[i] for p in per_perm]) for i in range(len(checkpoints)))
    stds = tuple(_std([p[i] for p in per_perm]) for i in range(len(checkpoints)))
    return LearningCurve(
        checkpoints=checkpoints,
        means=means,
        stds=stds,
        per_permutation=tuple(per_perm),
        cosine_baseline=baseline,
        n_permutations=n_permutations,
        seed=seed,
    )


# -- encoder comparison -------------------------------------------------------

_REPORT_NOTE = (
    "Reference context: on short noisy product descriptions, character-level "
    "tf-idf features are a strong representation and commonly beat pretrained "
    "sentence embeddings; numbers below are for this run's data only."
)


@dataclass(frozen=True)
class EncodingComparison:
    datasets: tuple[str, ...]
    encoders: tuple[str, ...]
    mean_precision: Mapping[str, Mapping[str, float]]  # dataset -> encoder -> value
    std_precision: Mapping[str, Mapping[str, float]]
    n_permutations: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "kind": "encoding_comparison",
            "note": _REPORT_NOTE,
            "datasets": list(self.datasets),
            "encoders": list(self.encoders),
            "mean_precision": {
                d: dict(vals) for d, vals in self.mean_precision.items()
            },
            "std_precision": {
                d: dict(vals) for d, vals in self.std_precision.items()
            },
            "n_permutations": self.n_permutations,
            "seed": self.seed,
        }

    def to_text(self) -> str:
        width = max(12, *(len(e) for e in self.encoders))
        name_w = max(8, *(len(d) for d in self.datasets))
        header = " ".join(
            [f"{'dataset':<{name_w}}"] + [f"{e:>{width}}" for e in self.encoders]
        )
        lines = [_REPORT_NOTE, "", header, "-" * len(header)]
        for d in self.datasets:
            row = [f"{d:<{name_w}}"]
            for e in self.encoders:
                row.append(f"{self.mean_precision[d][e]:>{width}.4f}")
            lines.append(" ".join(row))
        return "\n".join(lines)

    def save_json(self, path) -> None:
        from pathlib import Path

        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=2), encoding="utf-8"
        )


def compare_encodings(
    datasets: Mapping[str, tuple[Sequence[TripleStrings], Sequence[TripleStrings]]],
    encoder_factories: Mapping[str, EncoderFactory],
    aggressiveness: float = 0.1,
    n_permutations: int = 20,
    seed: int = 0,
) -> EncodingComparison:
    """Final-checkpoint mean test precision per dataset and encoder.

    Each encoder is fitted on the dataset's training texts only; the
    same permutation seeds drive every encoder so columns are
    comparable.
    """
    if not datasets:
        raise EvalError("no datasets")
    if not encoder_factories:
        raise EvalError("no encoders")
    means: dict[str, dict[str, float]] = {}
    stds: dict[str, dict[str, float]] = {}
    for ds_name, (train_strs, test_strs) in datasets.items():
        means[ds_name] = {}
        stds[ds_name] = {}
        train_texts = sorted(
            {s for t in train_strs for s in (t.query, t.preferred, t.rejected)}
        )
        for enc_name, factory in encoder_factories.items():
            encoder = factory(train_texts)
            train = encode_triples(train_strs, encoder)
            test = encode_triples(test_strs, encoder)
            curve = learning_curve(
                lambda: BilinearRanker(encoder.dim, aggressiveness),
                train,
                test,
                n_permutations=n_permutations,
                checkpoints=(len(train),),
                seed=seed,
            )
            means[ds_name][enc_name] = curve.means[-1]
            stds[ds_name][enc_name] = curve.stds[-1]
    return EncodingComparison(
        datasets=tuple(datasets),
        encoders=tuple(encoder_factories),
        mean_precision=means,
        std_precision=stds,
        n_permutations=n_permutations,
        seed=seed,
    )
