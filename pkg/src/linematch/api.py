"""HTTP surface over a MatchService.

Five endpoints, JSON in and out, every payload stamped "v": 1:

    GET  /pool/version
    POST /query        {"v": 1, "text": "..."}
    POST /feedback     {"v": 1, "event": {...}}
    GET  /model/metrics
    GET  /snapshot/{version}

The server owns no model logic; it validates shapes, translates errors
to status codes and delegates. CORS is open so a browser UI served from
another origin can talk to it.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from .service import FeedbackError, FeedbackEvent, MatchService, OrderingError


class QueryBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    v: int = 1
    text: str


class FeedbackBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    v: int = 1
    event: dict


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"v": 1, "error": message}, status_code=status)


def create_app(service: MatchService) -> FastAPI:
    app = FastAPI(title="linematch")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/pool/version")
    def pool_version() -> dict:
        return {"v": 1, "pool_version": service.pool_version}

    @app.post("/query")
    def query(body: QueryBody):
        if body.v != 1:
            return _error(400, "unsupported payload version")
        if not body.text.strip():
            return _error(400, "empty query text")
        return service.serve_next(body.text).to_dict()

    @app.post("/feedback")
    def feedback(body: FeedbackBody):
        if body.v != 1:
            return _error(400, "unsupported payload version")
        try:
            event = FeedbackEvent.from_dict(body.event)
        except (FeedbackError, KeyError, TypeError, ValueError) as exc:
            return _error(400, f"bad event: {exc}")
        try:
            result = service.submit_feedback(event)
        except OrderingError as exc:
            return _error(409, str(exc))
        except FeedbackError as exc:
            return _error(400, str(exc))
        return {
            "v": 1,
            "example_kind": result.example_kind,
            "snapshot_version": result.snapshot_version,
            "duplicate": result.duplicate,
        }

    @app.get("/model/metrics")
    def metrics() -> dict:
        return service.metrics_dict()

    @app.get("/snapshot/{version}")
    def snapshot(version: int):
        try:
            payload = service.snapshot_bytes(version)
        except LookupError:
            return _error(404, f"no snapshot for version {version}")
        return Response(content=payload, media_type="application/json")

    return app
