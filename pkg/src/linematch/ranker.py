"""Online bilinear similarity learning from relative-preference triples.

The model scores a pair of vectors as a'Wb, starting from W = identity
(plain dot product). Each training triple (query, preferred, rejected)
demands the preferred candidate outscore the rejected one by a unit
margin; violations trigger a closed-form rank-one correction whose step
size is capped by the aggressiveness parameter. Updates only ever touch
rows and columns where the involved vectors are nonzero.

Two interchangeable backends carry W: a dense matrix for moderate
dimensions, and an implicit form (identity plus the list of rank-one
corrections) that never materializes W and so scales to hashed or very
wide feature spaces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .vectorize import SparseVector

# Above this width a dense W (dim*dim float64) stops being reasonable
# and the implicit backend takes over under backend="auto".
DENSE_DIM_LIMIT = 4096


@dataclass(frozen=True)
class Triple:
    """One relative judgment: preferred should outscore rejected for query."""

    query: SparseVector
    preferred: SparseVector
    rejected: SparseVector
    provenance: str = ""

    def __post_init__(self) -> None:
        if not (self.query.dim == self.preferred.dim == self.rejected.dim):
            raise ValueError("triple vectors must share one dimension")


@dataclass(frozen=True)
class UpdateRecord:
    step: int
    loss: float
    tau: float
    skipped: bool = False  # degenerate triple, no correction possible


class _DenseBackend:
    def __init__(self, dim: int) -> None:
        self.dim = dim
        self.W = np.eye(dim, dtype=np.float64)

    def score(self, a: SparseVector, b: SparseVector) -> float:
        if a.is_zero() or b.is_zero():
            return 0.0
        block = self.W[np.ix_(a.indices, b.indices)]
        return float(a.values @ block @ b.values)

    def apply(self, tau: float, s: SparseVector, diff: SparseVector) -> None:
        self.W[np.ix_(s.indices, diff.indices)] += tau * np.outer(s.values, diff.values)


class _ImplicitBackend:
    """Identity plus rank-one corrections; W itself never exists.

    a'Wb = a.b + sum_t tau_t (a.s_t)(diff_t.b). Terms are kept sparse
    (the serialization format); for moderate dims a dense row cache
    turns scoring into two matrix-vector products.
    """

    def __init__(self, dim: int) -> None:
        self.dim = dim
        self.terms: list[tuple[float, SparseVector, SparseVector]] = []
        self._cache_rows = dim <= DENSE_DIM_LIMIT
        if self._cache_rows:
            cap = 16
            self._tau = np.zeros(cap, dtype=np.float64)
            self._S = np.zeros((cap, dim), dtype=np.float64)
            self._D = np.zeros((cap, dim), dtype=np.float64)

    def score(self, a: SparseVector, b: SparseVector) -> float:
        total = a.dot(b)
        n = len(self.terms)
        if n == 0:
            return total
        if self._cache_rows:
            left = self._S[:n] @ a.to_dense()
            right = self._D[:n] @ b.to_dense()
            return total + float(np.dot(self._tau[:n], left * right))
        for tau, s, diff in self.terms:
            l = a.dot(s)
            if l == 0.0:
                continue
            r = diff.dot(b)
            if r == 0.0:
                continue
            total += tau * l * r
        return total

    def apply(self, tau: float, s: SparseVector, diff: SparseVector) -> None:
        n = len(self.terms)
        self.terms.append((tau, s, diff))
        if self._cache_rows:
            if n >= len(self._tau):
                cap = len(self._tau) * 2
                self._tau = np.resize(self._tau, cap)
                self._tau[n:] = 0.0
                for name in ("_S", "_D"):
                    old = getattr(self, name)
                    grown = np.zeros((cap, self.dim), dtype=np.float64)
                    grown[:n] = old[:n]
                    setattr(self, name, grown)
            self._tau[n] = tau
            self._S[n] = s.to_dense()
            self._D[n] = diff.to_dense()


class BilinearRanker:
    """Passive-aggressive learner over triples of sparse vectors."""

    def __init__(
        self,
        dim: int,
        aggressiveness: float = 0.1,
        backend: str = "auto",
        learning_rate: float | None = None,
    ) -> None:
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if aggressiveness <= 0:
            raise ValueError("aggressiveness must be positive")
        if backend == "auto":
            backend = "dense" if dim <= DENSE_DIM_LIMIT else "implicit"
        if backend == "dense":
            if dim > DENSE_DIM_LIMIT:
                raise ValueError(
                    f"dense backend capped at dim {DENSE_DIM_LIMIT}, got {dim}"
                )
            self._backend: _DenseBackend | _ImplicitBackend = _DenseBackend(dim)
        elif backend == "implicit":
            self._backend = _ImplicitBackend(dim)
        else:
            raise ValueError(f"unknown backend {backend!r}")
        self.dim = dim
        self.aggressiveness = float(aggressiveness)
        # accepted for config compatibility; the clamped update rule is
        # parameterized by aggressiveness alone
        self.learning_rate = learning_rate
        self.backend = backend
        self.steps = 0

    def score(self, a: SparseVector, b: SparseVector) -> float:
        if a.dim != self.dim or b.dim != self.dim:
            raise ValueError("vector dimension does not match model")
        return self._backend.score(a, b)

    def margin(self, triple: Triple) -> float:
        return self.score(triple.query, triple.preferred) - self.score(
            triple.query, triple.rejected
        )

    def hinge_loss(self, triple: Triple) -> float:
        return max(0.0, 1.0 - self.margin(triple))

    def update(self, triple: Triple) -> UpdateRecord:
        """One online step. Passive when the margin already holds."""
        if triple.query.dim != self.dim:
            raise ValueError("triple dimension does not match model")
        self.steps += 1
        step = self.steps
        loss = self.hinge_loss(triple)
        if loss == 0.0:
            return UpdateRecord(step, 0.0, 0.0)
        diff = triple.preferred.minus(triple.rejected)
        norm_sq = triple.query.norm_sq() * diff.norm_sq()
        if norm_sq == 0.0:
            # zero query or identical candidates: no rank-one step exists
            return UpdateRecord(step, loss, 0.0, skipped=True)
        tau = min(self.aggressiveness, loss / norm_sq)
        self._backend.apply(tau, triple.query, diff)
        return UpdateRecord(step, loss, tau)

    def train_stream(self, triples) -> list[UpdateRecord]:
        return [self.update(t) for t in triples]

    # -- persistence ----------------------------------------------------

    def to_dict(self) -> dict:
        data = {
            "v": 1,
            "kind": "bilinear_ranker",
            "backend": self.backend if self.backend != "auto" else (
                "dense" if isinstance(self._backend, _DenseBackend) else "implicit"
            ),
            "dim": self.dim,
            "aggressiveness": self.aggressiveness,
            "steps": self.steps,
        }
        if isinstance(self._backend, _DenseBackend):
            delta = self._backend.W - np.eye(self.dim)
            rows, cols = np.nonzero(delta)
            data["delta"] = [
                [int(i), int(j), float(delta[i, j])] for i, j in zip(rows, cols)
            ]
        else:
            data["terms"] = [
                {
                    "tau": tau,
                    "s_idx": s.indices.tolist(),
                    "s_val": s.values.tolist(),
                    "d_idx": d.indices.tolist(),
                    "d_val": d.values.tolist(),
                }
                for tau, s, d in self._backend.terms
            ]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "BilinearRanker":
        if data.get("v") != 1 or data.get("kind") != "bilinear_ranker":
            raise ValueError("unsupported ranker snapshot")
        model = cls(
            dim=int(data["dim"]),
            aggressiveness=float(data["aggressiveness"]),
            backend=data["backend"],
        )
        model.steps = int(data["steps"])
        if data["backend"] == "dense":
            for i, j, val in data["delta"]:
                model._backend.W[int(i), int(j)] += val
        else:
            dim = model.dim
            for term in data["terms"]:
                s = SparseVector(
                    np.array(term["s_idx"], dtype=np.int64),
                    np.array(term["s_val"], dtype=np.float64),
                    dim,
                )
                d = SparseVector(
                    np.array(term["d_idx"], dtype=np.int64),
                    np.array(term["d_val"], dtype=np.float64),
                    dim,
                )
                model._backend.apply(float(term["tau"]), s, d)
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "BilinearRanker":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
