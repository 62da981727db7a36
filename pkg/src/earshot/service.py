"""HTTP service exposing live agent sessions.

Wraps the core loop behind three endpoints — create a session, stream its
events as server-sent events, and list the registered tools — plus static
hosting of the built web console. Sessions run on background threads; the
event stream replays the per-session buffer so reconnects lose nothing.
"""

from __future__ import annotations

import json
import tempfile
import uuid
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .agent import AudioTask
from .config import AppConfig, require_backend
from .events import SessionBroker, SessionState


class SessionCreateRequest(BaseModel):
    audio: Union[str, list[str]] = Field(description="audio reference or list of references")
    question: str
    choices: Optional[list[str]] = None
    seed: int = 0
    task_id: Optional[str] = None


class SessionCreated(BaseModel):
    session_id: str


class SessionSummary(BaseModel):
    session_id: str
    status: str
    answer: Optional[str] = None
    tool_call_count: Optional[int] = None


class ToolInfo(BaseModel):
    name: str
    kind: str
    description: str


class ToolListing(BaseModel):
    tools: list[ToolInfo]


def _sse_frame(event) -> str:
    body = {
        "session_id": event.session_id,
        "sequence": event.sequence,
        "event_kind": event.event_kind,
        "payload": event.payload,
    }
    return f"id: {event.sequence}\nevent: {event.event_kind}\ndata: {json.dumps(body)}\n\n"


def create_app(
    config: AppConfig,
    *,
    retention: int = 100,
    ui_dir: Optional[str | Path] = None,
) -> FastAPI:
    app = FastAPI(title="earshot", version="0.1.0")
    broker = SessionBroker(retention=retention)
    backend = require_backend(config)
    upload_dir = Path(tempfile.mkdtemp(prefix="earshot-uploads-"))
    app.state.broker = broker

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def _start(audio_refs: list[str], question: str, choices, seed: int, task_id: Optional[str]) -> str:
        task = AudioTask(
            id=task_id or f"session-{uuid.uuid4().hex[:8]}",
            audio_refs=audio_refs,
            question=question,
            choices=choices,
        )
        return broker.create(
            task,
            backend,
            config.registry,
            budget=config.budget,
            seed=seed,
            audio_root=config.audio_root,
        )

    @app.post("/sessions", response_model=SessionCreated)
    def create_session(body: SessionCreateRequest):
        audio_refs = [body.audio] if isinstance(body.audio, str) else list(body.audio)
        try:
            session_id = _start(audio_refs, body.question, body.choices, body.seed, body.task_id)
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        return SessionCreated(session_id=session_id)

    @app.post("/sessions/upload", response_model=SessionCreated)
    def create_session_upload(
        file: UploadFile = File(...),
        question: str = Form(...),
        choices: Optional[str] = Form(None),
        seed: int = Form(0),
    ):
        suffix = Path(file.filename or "upload.wav").suffix or ".wav"
        target = upload_dir / f"{uuid.uuid4().hex}{suffix}"
        target.write_bytes(file.file.read())
        parsed_choices = json.loads(choices) if choices else None
        try:
            session_id = _start([str(target)], question, parsed_choices, seed, None)
        except (ValueError, json.JSONDecodeError) as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        return SessionCreated(session_id=session_id)

    def _lookup(session_id: str) -> Optional[SessionState]:
        return broker.get(session_id)

    @app.get("/sessions/{session_id}", response_model=SessionSummary)
    def session_summary(session_id: str):
        state = _lookup(session_id)
        if state is None:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        trace = state.trace
        return SessionSummary(
            session_id=session_id,
            status=state.status(),
            answer=trace.answer if trace else None,
            tool_call_count=trace.tool_call_count if trace else None,
        )

    @app.get("/sessions/{session_id}/events")
    def session_events(session_id: str, request: Request, after: int = 0):
        state = _lookup(session_id)
        if state is None:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        last_event_id = request.headers.get("last-event-id")
        if last_event_id and last_event_id.isdigit():
            after = max(after, int(last_event_id))

        def frames():
            for event in broker.stream(state, after=after):
                yield _sse_frame(event)

        return StreamingResponse(frames(), media_type="text/event-stream")

    @app.get("/tools", response_model=ToolListing)
    def list_tools():
        return ToolListing(
            tools=[
                ToolInfo(name=spec.name, kind=spec.kind.value, description=spec.description)
                for spec in config.registry
            ]
        )

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
