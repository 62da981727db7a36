"""Per-session event buffers backing the live trace stream.

Each session owns an append-only list of sequenced events with many
concurrent readers. Readers replay the buffer from any point and then
follow live until the terminal event, so reconnecting to a finished
session replays its full trace. Completed sessions are retained up to a
bounded count, then dropped.
"""

from __future__ import annotations

import threading
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional

from .adapters import ToolRegistry
from .agent import AudioTask, SessionTrace, run_session
from .backends import AgentBackend

EVENT_KINDS = (
    "session_started",
    "assistant_text",
    "tool_call_started",
    "tool_result",
    "answer",
    "session_ended",
)


@dataclass
class SessionEvent:
    session_id: str
    sequence: int
    event_kind: str
    payload: dict[str, Any]


@dataclass
class SessionState:
    session_id: str
    task: AudioTask
    events: list[SessionEvent] = field(default_factory=list)
    done: bool = False
    trace: Optional[SessionTrace] = None
    cond: threading.Condition = field(default_factory=threading.Condition)

    def status(self) -> str:
        if not self.done:
            return "running"
        return self.trace.outcome.value if self.trace else "agent_error"


class SessionBroker:
    """Owns session lifecycles: spawns the agent loop on a thread per
    session, sequences its events, and serves replayable streams."""

    def __init__(self, retention: int = 100):
        self.retention = retention
        self._sessions: "OrderedDict[str, SessionState]" = OrderedDict()
        self._completed: list[str] = []
        self._lock = threading.Lock()

    def create(
        self,
        task: AudioTask,
        backend: AgentBackend,
        registry: ToolRegistry,
        budget: int = 20,
        seed: int = 0,
        audio_root=None,
    ) -> str:
        session_id = uuid.uuid4().hex[:12]
        state = SessionState(session_id=session_id, task=task)
        with self._lock:
            self._sessions[session_id] = state
        thread = threading.Thread(
            target=self._run,
            args=(state, backend, registry, budget, seed, audio_root),
            daemon=True,
        )
        thread.start()
        return session_id

    def _append(self, state: SessionState, kind: str, payload: dict[str, Any]) -> None:
        with state.cond:
            state.events.append(
                SessionEvent(
                    session_id=state.session_id,
                    sequence=len(state.events) + 1,
                    event_kind=kind,
                    payload=payload,
                )
            )
            state.cond.notify_all()

    def _run(self, state: SessionState, backend, registry, budget, seed, audio_root) -> None:
        try:
            trace = run_session(
                state.task,
                backend,
                registry,
                budget=budget,
                seed=seed,
                audio_root=audio_root,
                on_event=lambda kind, payload: self._append(state, kind, payload),
            )
            state.trace = trace
        except Exception as exc:  # defensive: the stream must always terminate
            self._append(state, "session_ended", {"outcome": "agent_error", "error": str(exc)})
        finally:
            with state.cond:
                state.done = True
                state.cond.notify_all()
            self._retire(state.session_id)

    def _retire(self, session_id: str) -> None:
        with self._lock:
            self._completed.append(session_id)
            while len(self._completed) > self.retention:
                oldest = self._completed.pop(0)
                self._sessions.pop(oldest, None)

    def get(self, session_id: str) -> Optional[SessionState]:
        with self._lock:
            return self._sessions.get(session_id)

    def stream(self, state: SessionState, after: int = 0) -> Iterator[SessionEvent]:
        """Yield events with sequence > after, following live until the
        session is done and fully drained."""
        index = 0
        with state.cond:
            while index < len(state.events) and state.events[index].sequence <= after:
                index += 1
        while True:
            with state.cond:
                while index >= len(state.events) and not state.done:
                    state.cond.wait(timeout=0.2)
                if index >= len(state.events):
                    return
                event = state.events[index]
            index += 1
            yield event
