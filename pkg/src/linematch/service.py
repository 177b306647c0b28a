"""Feedback-loop orchestration: serve matches, ingest votes, learn online.

The append-only event log is the source of truth. Model state (ranker +
classifier) is a pure fold over that log given the candidate pool, so a
crash recovers as: load latest snapshot, replay the tail. Every event
carries the query text it was about; nothing needed for replay lives
only in memory.

Concurrency: any number of readers may call serve_next against the
published state; submit_feedback holds the single writer lock, appends
to the log (fsync) and only then applies the update and bumps the
snapshot version.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .classifier import PairClassifier
from .fuzzy import CandidatePool, PoolExhaustedError, rank_candidates
from .ranker import BilinearRanker, Triple
from .textprep import Description, Lexicon, RawDescription, prepare
from .vectorize import SparseVector, transform

EVENT_KINDS = (
    "accept",
    "reject",
    "prefer_alternate",
    "label_similar",
    "label_dissimilar",
)
# Kinds that change a model and therefore bump the snapshot version.
MODEL_UPDATE_KINDS = ("prefer_alternate", "label_similar", "label_dissimilar")


class FeedbackError(ValueError):
    """Bad feedback event (unknown reference, missing field, bad kind)."""


class OrderingError(FeedbackError):
    """Event id is neither new nor a known duplicate: it travels backwards."""


class CorruptLogError(ValueError):
    """Event log unreadable; message carries the position."""


@dataclass(frozen=True)
class FeedbackEvent:
    event_id: int
    kind: str
    query_id: str
    query_text: str
    candidate_id: str
    alternate_id: str | None = None
    agent_id: str = ""
    ts: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise FeedbackError(f"unknown feedback kind {self.kind!r}")
        if self.event_id < 1:
            raise FeedbackError("event_id must be >= 1")
        if self.kind == "prefer_alternate" and not self.alternate_id:
            raise FeedbackError("prefer_alternate requires alternate_id")
        if not self.query_text:
            raise FeedbackError("query_text must be non-empty")

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "event_id": self.event_id,
            "kind": self.kind,
            "query_id": self.query_id,
            "query_text": self.query_text,
            "candidate_id": self.candidate_id,
            "alternate_id": self.alternate_id,
            "agent_id": self.agent_id,
            "ts": self.ts,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FeedbackEvent":
        if data.get("v") != 1:
            raise FeedbackError("unsupported event payload version")
        return cls(
            event_id=int(data["event_id"]),
            kind=str(data["kind"]),
            query_id=str(data["query_id"]),
            query_text=str(data["query_text"]),
            candidate_id=str(data["candidate_id"]),
            alternate_id=data.get("alternate_id") or None,
            agent_id=str(data.get("agent_id") or ""),
            ts=float(data.get("ts") or 0.0),
        )


def _canonical(data: Mapping) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


class EventLog:
    """Append-only JSONL event log with fsync on every append."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("a", encoding="utf-8")

    def append(self, event: FeedbackEvent) -> None:
        self._fh.write(_canonical(event.to_dict()) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()

    @staticmethod
    def read_all(path: str | Path) -> list[FeedbackEvent]:
        path = Path(path)
        if not path.exists():
            return []
        events: list[FeedbackEvent] = []
        last_id = 0
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    event = FeedbackEvent.from_dict(json.loads(line))
                except (json.JSONDecodeError, FeedbackError, KeyError) as exc:
                    raise CorruptLogError(f"{path}:{lineno}: {exc}") from exc
                if event.event_id <= last_id:
                    raise CorruptLogError(
                        f"{path}:{lineno}: event id {event.event_id} not increasing"
                    )
                last_id = event.event_id
                events.append(event)
        return events


@dataclass(frozen=True)
class CandidateView:
    id: str
    text: str
    score: float
    rank: int


@dataclass(frozen=True)
class QueryResponse:
    query_id: str
    query_text: str
    best: CandidateView
    alternates: tuple[CandidateView, ...]
    gate_passed: bool
    pool_version: str
    snapshot_version: int

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "query_id": self.query_id,
            "query_text": self.query_text,
            "best": vars(self.best) | {},
            "alternates": [vars(a) | {} for a in self.alternates],
            "gate_passed": self.gate_passed,
            "pool_version": self.pool_version,
            "snapshot_version": self.snapshot_version,
        }


@dataclass(frozen=True)
class FeedbackResult:
    example_kind: str  # none | triple | pair
    snapshot_version: int
    duplicate: bool = False


def pool_fingerprint(pool: CandidatePool) -> str:
    payload = _canonical(
        [[d.id, d.normalized_text] for d in pool.descriptions]
    ).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:12]


@dataclass
class _Metrics:
    events_total: int = 0
    accepts: int = 0
    rejects: int = 0
    ranker_seen: int = 0
    ranker_correct: int = 0
    classifier_seen: int = 0
    classifier_correct: int = 0

    def to_dict(self) -> dict:
        def rate(c: int, n: int) -> float:
            return c / n if n else 0.0

        return {
            "events_total": self.events_total,
            "accepts": self.accepts,
            "rejects": self.rejects,
            "ranker": {
                "seen": self.ranker_seen,
                "correct": self.ranker_correct,
                "precision": rate(self.ranker_correct, self.ranker_seen),
            },
            "classifier": {
                "seen": self.classifier_seen,
                "correct": self.classifier_correct,
                "precision": rate(self.classifier_correct, self.classifier_seen),
            },
        }


class MatchService:
    """Live matching loop over an immutable candidate pool."""

    def __init__(
        self,
        pool: CandidatePool,
        lexicon: Lexicon,
        aggressiveness: float = 0.1,
        k: int = 5,
        log_path: str | Path | None = None,
        accept_trains_classifier: bool = False,
    ) -> None:
        if len(pool) == 0:
            raise ValueError("empty candidate pool")
        self.pool = pool
        self.lexicon = lexicon
        self.k = k
        self.accept_trains_classifier = accept_trains_classifier
        self.pool_version = pool_fingerprint(pool)
        dim = pool.vocabulary.dim
        self.ranker = BilinearRanker(dim, aggressiveness)
        self.classifier = PairClassifier(dim, aggressiveness)
        self.snapshot_version = 0
        self.metrics = _Metrics()
        self._log = EventLog(log_path) if log_path is not None else None
        self._seen_ids: set[int] = set()
        self._max_event_id = 0
        self._served: dict[str, QueryResponse] = {}
        self._query_counter = 0
        self._write_lock = threading.Lock()
        self._snapshots: dict[int, str] = {0: self._snapshot_json()}

    # -- serving ---------------------------------------------------------

    def _prepare_query(self, text: str, query_id: str) -> Description:
        raw = RawDescription(id=query_id, text=text, source="invoice")
        return prepare(raw, self.lexicon)

    def serve_next(self, text: str) -> QueryResponse:
        """Best fuzzy candidate plus alternates for the reject path.

        When the noun-phrase gate rejects every candidate, the id-order
        head of the pool is served with score 0 and the gate flag down.
        """
        with self._write_lock:
            self._query_counter += 1
            query_id = f"q{self._query_counter}"
        desc = self._prepare_query(text, query_id)
        ranked = rank_candidates(desc, self.pool)
        gate_passed = ranked[0].score > 0.0
        views = [
            CandidateView(
                id=c.description.id,
                text=c.description.original_text,
                score=c.score,
                rank=c.rank,
            )
            for c in ranked[: self.k]
        ]
        response = QueryResponse(
            query_id=query_id,
            query_text=text,
            best=views[0],
            alternates=tuple(views[1:]),
            gate_passed=gate_passed,
            pool_version=self.pool_version,
            snapshot_version=self.snapshot_version,
        )
        self._served[query_id] = response
        return response

    # -- feedback ----------------------------------------------------------

    def next_event_id(self) -> int:
        return self._max_event_id + 1

    def submit_feedback(self, event: FeedbackEvent) -> FeedbackResult:
        with self._write_lock:
            if event.event_id in self._seen_ids:
                return FeedbackResult("none", self.snapshot_version, duplicate=True)
            if event.event_id <= self._max_event_id:
                raise OrderingError(
                    f"event id {event.event_id} is behind the log head "
                    f"{self._max_event_id} and is not a known duplicate"
                )
            if event.query_id and event.query_id in self._served:
                served_text = self._served[event.query_id].query_text
                if served_text != event.query_text:
                    raise FeedbackError(
                        f"query text mismatch for {event.query_id!r}"
                    )
            elif event.query_id:
                raise FeedbackError(f"unknown query {event.query_id!r}")
            self._resolve(event)  # validate candidate references up front
            if self._log is not None:
                self._log.append(event)
            result = self._apply(event)
            return result

    def _resolve(self, event: FeedbackEvent) -> None:
        if event.candidate_id not in self.pool.by_id:
            raise FeedbackError(f"unknown candidate {event.candidate_id!r}")
        if event.alternate_id and event.alternate_id not in self.pool.by_id:
            raise FeedbackError(f"unknown alternate {event.alternate_id!r}")

    def _query_vector(self, event: FeedbackEvent) -> SparseVector:
        desc = self._prepare_query(event.query_text, f"replay:{event.event_id}")
        return transform(desc, self.pool.vocabulary)

    def _apply(self, event: FeedbackEvent) -> FeedbackResult:
        """Fold one event into the models. Pure given pool + event."""
        self._seen_ids.add(event.event_id)
        self._max_event_id = event.event_id
        self.metrics.events_total += 1
        example_kind = "none"

        if event.kind == "accept":
            self.metrics.accepts += 1
            if self.accept_trains_classifier:
                q = self._query_vector(event)
                c = self.pool.vector_for(event.candidate_id)
                if self.classifier.classify(q, c) == 1:
                    self.metrics.classifier_correct += 1
                self.metrics.classifier_seen += 1
                self.classifier.update_pair(q, c, 1)
                example_kind = "pair"
                self._bump_snapshot()
        elif event.kind == "reject":
            self.metrics.rejects += 1
        elif event.kind == "prefer_alternate":
            q = self._query_vector(event)
            preferred = self.pool.vector_for(event.alternate_id)
            rejected = self.pool.vector_for(event.candidate_id)
            if self.ranker.score(q, preferred) > self.ranker.score(q, rejected):
                self.metrics.ranker_correct += 1
            self.metrics.ranker_seen += 1
            self.ranker.update(Triple(q, preferred, rejected))
            example_kind = "triple"
            self._bump_snapshot()
        else:  # label_similar / label_dissimilar
            label = 1 if event.kind == "label_similar" else -1
            q = self._query_vector(event)
            c = self.pool.vector_for(event.candidate_id)
            if self.classifier.classify(q, c) == label:
                self.metrics.classifier_correct += 1
            self.metrics.classifier_seen += 1
            self.classifier.update_pair(q, c, label)
            example_kind = "pair"
            self._bump_snapshot()

        return FeedbackResult(example_kind, self.snapshot_version)

    def _bump_snapshot(self) -> None:
        self.snapshot_version += 1
        self._snapshots[self.snapshot_version] = self._snapshot_json()

    # -- snapshots and replay ---------------------------------------------

    def _snapshot_json(self) -> str:
        return _canonical(
            {
                "v": 1,
                "kind": "service_snapshot",
                "version": self.snapshot_version,
                "last_event_id": self._max_event_id,
                "pool_version": self.pool_version,
                "ranker": self.ranker.to_dict(),
                "classifier": self.classifier.to_dict(),
                "metrics": self.metrics.to_dict(),
            }
        )

    def snapshot_bytes(self, version: int | None = None) -> bytes:
        if version is None:
            version = self.snapshot_version
        try:
            return self._snapshots[version].encode("utf-8")
        except KeyError:
            raise LookupError(f"no snapshot for version {version}")

    def metrics_dict(self) -> dict:
        return {
            "v": 1,
            "snapshot_version": self.snapshot_version,
            "pool_version": self.pool_version,
            **self.metrics.to_dict(),
        }

    @classmethod
    def replay(
        cls,
        pool: CandidatePool,
        lexicon: Lexicon,
        events: Iterable[FeedbackEvent],
        aggressiveness: float = 0.1,
        k: int = 5,
        log_path: str | Path | None = None,
        accept_trains_classifier: bool = False,
    ) -> "MatchService":
        """Rebuild a service purely from its pool and event history."""
        service = cls(
            pool,
            lexicon,
            aggressiveness=aggressiveness,
            k=k,
            log_path=log_path,
            accept_trains_classifier=accept_trains_classifier,
        )
        service.replay_tail(events)
        return service

    def replay_tail(self, events: Iterable[FeedbackEvent]) -> None:
        """Fold already-logged events on top of the current state.

        This is the crash-recovery path: the served-query correlation
        check does not apply to history, only id ordering does. Nothing
        is re-appended to the log.
        """
        for event in events:
            if event.event_id <= self._max_event_id:
                raise CorruptLogError(
                    f"replay: event id {event.event_id} after "
                    f"{self._max_event_id}"
                )
            self._resolve(event)
            self._apply(event)

    def close(self) -> None:
        if self._log is not None:
            self._log.close()


@dataclass
class SimulatedAgent:
    """Scripted reviewer for UI-free end-to-end runs.

    Knows which candidate a triple generator designated as preferred,
    accepts when the service already serves it, otherwise votes for it
    as the alternate.
    """

    service: MatchService
    agent_id: str = "sim"
    clock: float = 0.0

    def decide(self, query_text: str, preferred_id: str) -> FeedbackResult:
        response = self.service.serve_next(query_text)
        self.clock += 1.0
        if response.best.id == preferred_id:
            kind, candidate, alternate = "accept", preferred_id, None
        else:
            kind, candidate, alternate = (
                "prefer_alternate",
                response.best.id,
                preferred_id,
            )
        event = FeedbackEvent(
            event_id=self.service.next_event_id(),
            kind=kind,
            query_id=response.query_id,
            query_text=query_text,
            candidate_id=candidate,
            alternate_id=alternate,
            agent_id=self.agent_id,
            ts=self.clock,
        )
        return self.service.submit_feedback(event)
