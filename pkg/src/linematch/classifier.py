"""Online similar/dissimilar classification of description pairs.

Complements the ranker for workflows that yield absolute yes/no labels
instead of relative preferences. A pair (u, v) maps to a symmetric
feature vector (elementwise |u - v| stacked on elementwise u * v) and a
linear model over that space is trained with margin-capped online
updates, starting from all-zero weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .vectorize import SparseVector


def pair_features(u: SparseVector, v: SparseVector) -> SparseVector:
    """Symmetric pair encoding: [ |u-v| , u*v ], dimension 2 * u.dim."""
    if u.dim != v.dim:
        raise ValueError(f"dimension mismatch: {u.dim} vs {v.dim}")
    d = u.dim
    uv: dict[int, float] = dict(zip(u.indices.tolist(), u.values.tolist()))
    pairs: dict[int, float] = {}
    for i, val in zip(v.indices.tolist(), v.values.tolist()):
        prev = uv.pop(i, 0.0)
        gap = abs(prev - val)
        if gap != 0.0:
            pairs[i] = gap
        prod = prev * val
        if prod != 0.0:
            pairs[d + i] = prod
    for i, val in uv.items():  # indices only u touches
        pairs[i] = abs(val)
    return SparseVector.from_pairs(pairs, 2 * d)


@dataclass
class PairClassifier:
    """Margin-capped online linear classifier over pair features.

    Labels are +1 (same item) and -1 (different). A brand-new model
    scores every pair 0.0 and therefore answers -1: pairs are assumed
    different until evidence arrives.
    """

    dim: int  # dimension of the input vectors, not of the pair features
    aggressiveness: float = 0.1
    weights: dict[int, float] = field(default_factory=dict)
    steps: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.aggressiveness <= 0:
            raise ValueError("aggressiveness must be positive")

    def decision_value(self, u: SparseVector, v: SparseVector) -> float:
        phi = pair_features(u, v)
        return self._dot(phi)

    def classify(self, u: SparseVector, v: SparseVector) -> int:
        """+1 when the model is strictly positive; ties score as -1."""
        return 1 if self.decision_value(u, v) > 0.0 else -1

    def update_pair(self, u: SparseVector, v: SparseVector, label: int) -> float:
        """One online step; returns the step size taken (0 when passive)."""
        if label not in (-1, 1):
            raise ValueError(f"label must be +1 or -1, got {label!r}")
        phi = pair_features(u, v)
        self.steps += 1
        loss = max(0.0, 1.0 - label * self._dot(phi))
        if loss == 0.0:
            return 0.0
        norm_sq = phi.norm_sq()
        if norm_sq == 0.0:
            return 0.0
        tau = min(self.aggressiveness, loss / norm_sq)
        for i, val in zip(phi.indices.tolist(), phi.values.tolist()):
            new = self.weights.get(i, 0.0) + tau * label * val
            if new == 0.0:
                self.weights.pop(i, None)
            else:
                self.weights[i] = new
        return tau

    def _dot(self, phi: SparseVector) -> float:
        return sum(
            self.weights.get(i, 0.0) * val
            for i, val in zip(phi.indices.tolist(), phi.values.tolist())
        )

    # -- persistence ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "kind": "pair_classifier",
            "dim": self.dim,
            "aggressiveness": self.aggressiveness,
            "steps": self.steps,
            "weights": [[i, self.weights[i]] for i in sorted(self.weights)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PairClassifier":
        if data.get("v") != 1 or data.get("kind") != "pair_classifier":
            raise ValueError("unsupported classifier snapshot")
        model = cls(
            dim=int(data["dim"]),
            aggressiveness=float(data["aggressiveness"]),
        )
        model.steps = int(data["steps"])
        model.weights = {int(i): float(w) for i, w in data["weights"]}
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "PairClassifier":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
