"""HTTP boundary: sessions, queries, image upload, follow-up answers,
evaluation reports and traces, as JSON over HTTP.

Requests for one session serialize on a per-session lock; different sessions
proceed concurrently. Error bodies are ``{"code": ..., "message": ...}`` with
codes from a closed set (invalid_body, unknown_session, invalid_query,
payload_too_large, all_agents_failed, unknown_followup, already_answered,
no_report, not_found).
"""

from __future__ import annotations

import base64
import binascii
import json
import threading
import uuid
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .agents import AllAgentsFailed, TurnPipeline, UnknownFollowup
from .domain import DomainError, ImageAttachment, SessionState, UnsupportedMedia, validate_query

MAX_IMAGE_BYTES = 5 * 1024 * 1024


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class ImageBody(BaseModel):
    bytes: str
    media_type: str
    caption: Optional[str] = None


class SessionCreateBody(BaseModel):
    user_id: str = ""


class QueryBody(BaseModel):
    text: str = ""
    image: Optional[ImageBody] = None


class FollowupBody(BaseModel):
    answer: str = ""


class ServiceState:
    """Shared read-mostly state plus the per-session locks."""

    def __init__(
        self,
        pipeline: TurnPipeline,
        report_dir: Path | str = "reports",
        trace_dir: Optional[Path | str] = None,
    ):
        self.pipeline = pipeline
        self.report_dir = Path(report_dir)
        self.trace_dir = Path(trace_dir) if trace_dir else None
        self.sessions: dict[str, SessionState] = {}
        self.answered: set[tuple[str, str]] = set()
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def new_session(self, user_id: str) -> SessionState:
        session = SessionState(session_id=uuid.uuid4().hex, user_id=user_id)
        with self._guard:
            self.sessions[session.session_id] = session
            self._locks[session.session_id] = threading.Lock()
        return session

    def session(self, session_id: str) -> SessionState:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}") from None

    def lock(self, session_id: str) -> threading.Lock:
        with self._guard:
            return self._locks[session_id]


def _decode_image(body: ImageBody) -> ImageAttachment:
    try:
        payload = base64.b64decode(body.bytes, validate=True)
    except (binascii.Error, ValueError) as e:
        raise ApiError(422, "invalid_query", f"image is not valid base64: {e}") from e
    if len(payload) > MAX_IMAGE_BYTES:
        raise ApiError(413, "payload_too_large", f"image exceeds {MAX_IMAGE_BYTES} bytes")
    try:
        return ImageAttachment(bytes=payload, media_type=body.media_type, caption=body.caption)
    except (UnsupportedMedia, DomainError) as e:
        raise ApiError(422, "invalid_query", str(e)) from e


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="agentrec", version="0.1.0")

    @app.exception_handler(ApiError)
    async def api_error_handler(_: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionCreateBody):
        if not body.user_id.strip():
            raise ApiError(400, "invalid_body", "user_id must be non-empty")
        session = state.new_session(body.user_id.strip())
        # An empty profile makes the user visible to personalization at once.
        state.pipeline.ensure_profile(session.user_id)
        return {"session_id": session.session_id}

    @app.post("/sessions/{session_id}/query")
    def post_query(session_id: str, body: QueryBody):
        session = state.session(session_id)
        image = _decode_image(body.image) if body.image else None
        try:
            query = validate_query(
                body.text,
                image,
                session_id=session_id,
                timestamp=state.pipeline.clock.now(),
            )
        except DomainError as e:
            raise ApiError(422, "invalid_query", str(e)) from e
        with state.lock(session_id):
            try:
                turn = state.pipeline.run_turn(session, query)
            except AllAgentsFailed as e:
                raise ApiError(502, "all_agents_failed", str(e)) from e
            return _turn_response(session, turn)

    @app.post("/sessions/{session_id}/followups/{question_id}")
    def post_followup(session_id: str, question_id: str, body: FollowupBody):
        session = state.session(session_id)
        if not body.answer.strip():
            raise ApiError(422, "invalid_query", "answer must be non-empty")
        with state.lock(session_id):
            if (session_id, question_id) in state.answered:
                raise ApiError(409, "already_answered", f"followup {question_id!r} was already answered")
            try:
                turn = state.pipeline.answer_followup(session, question_id, body.answer.strip())
            except UnknownFollowup as e:
                raise ApiError(404, "unknown_followup", str(e)) from e
            state.answered.add((session_id, question_id))
            return _turn_response(session, turn)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return state.session(session_id).to_dict()

    @app.get("/reports")
    def get_reports():
        path = state.report_dir / "latest.json"
        if not path.exists():
            raise ApiError(404, "no_report", "no evaluation report has been generated yet")
        return json.loads(path.read_text(encoding="utf-8"))

    @app.get("/traces/{trace_id}")
    def get_trace(trace_id: str):
        if state.trace_dir is None:
            raise ApiError(404, "not_found", "tracing is disabled")
        path = state.trace_dir / f"{trace_id}.json"
        if not path.exists() or path.parent != state.trace_dir:
            raise ApiError(404, "not_found", f"no trace {trace_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))

    return app


def _turn_response(session: SessionState, turn) -> dict:
    doc = turn.to_dict()
    doc["pending_followups"] = [q.to_dict() for q in session.pending_followups]
    return doc
