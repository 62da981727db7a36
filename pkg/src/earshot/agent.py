"""The central orchestration loop.

A text-only reasoning model never hears audio: it receives the question,
answer choices, and audio file references, then gathers evidence by
requesting tool invocations through structured tags until it commits to an
answer or runs out of its tool-call budget.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Optional

from .adapters import AdapterError, ToolKind, ToolRegistry, ToolResult, ToolSpec, invoke
from .backends import AgentBackend, BackendError
from .tagparse import ToolCallRequest, parse_turn, render_tool_call

DEFAULT_BUDGET = 20

# Sent verbatim as the opening of every session's system message.
SYSTEM_PROMPT_HEADER = (
    "You are an expert audio analyst with access to specialized tools. "
    "Answer the question given. "
    "Put the answer between <answer> and </answer> tags. "
    "If the question is multiple choice, there is always just one choice correct. "
    "If the tool says it can't listen to audio, try invoking the tool again. "
    "Use as many different tools as needed to answer the question, even using the "
    "same tool multiple times if needed. "
    "If initial tool outputs are conflicting or ambiguous, do not guess; instead, "
    "you must generate specific, follow-up tool calls to isolate the point of "
    "disagreement and gather more detailed evidence. "
    "The following tools are available:"
)

BUDGET_NUDGE = "You have no tool calls remaining. Provide your final answer now."
IDLE_NUDGE = (
    "Your last reply contained neither a <tool_call> block nor an <answer> block. "
    "Request a tool or provide your final answer between <answer> and </answer> tags."
)

# Consecutive no-op turns tolerated (each gets one nudge) before the session
# is written off as an agent error.
MAX_IDLE_TURNS = 2

_EXAMPLE_PROMPTS = {
    ToolKind.CHAT_AUDIO: "What is happening in this audio?",
    ToolKind.TRANSCRIPTION: "Transcribe this audio.",
    ToolKind.WEB_SEARCH: "What species of owl is most common in Europe?",
    ToolKind.MOCK: "Describe this audio.",
}


class Outcome(str, Enum):
    ANSWERED = "answered"
    BUDGET_EXHAUSTED = "budget_exhausted"
    AGENT_ERROR = "agent_error"


@dataclass
class AudioTask:
    """One question instance: audio reference(s), question text, optional
    answer choices, gold answer, category tags."""

    id: str
    audio_refs: list[str]
    question: str
    choices: Optional[list[str]] = None
    gold: Optional[str] = None
    categories: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.audio_refs:
            raise ValueError(f"task {self.id!r} needs at least one audio reference")
        if self.choices is not None:
            if len(self.choices) < 2:
                raise ValueError(f"task {self.id!r} needs at least two choices")
            if self.gold is not None and self.choices.count(self.gold) != 1:
                raise ValueError(f"task {self.id!r} gold answer must equal exactly one choice")


@dataclass
class TurnRecord:
    role: str  # system | user | assistant | tool
    content: str
    tool_call: Optional[ToolCallRequest] = None
    tool_result: Optional[ToolResult] = None


@dataclass
class SessionTrace:
    task_id: str
    turns: list[TurnRecord]
    tool_call_count: int
    outcome: Outcome
    answer: Optional[str]
    seed: int
    wall_time: float


EventCallback = Callable[[str, dict[str, Any]], None]


def _tool_block(spec: ToolSpec) -> str:
    example = render_tool_call(
        ToolCallRequest(
            tool_name=spec.name,
            audio_refs=[] if spec.kind is ToolKind.WEB_SEARCH else ["/path/to/audio.wav"],
            prompt=_EXAMPLE_PROMPTS[spec.kind],
        )
    )
    return f"### {spec.name} ({spec.kind.value})\n{spec.description}\nExample:\n{example}"


_FORMAT_SPEC = (
    "Tool calls are written between <tool_call> and </tool_call> tags. The body must "
    'be a single JSON object with keys "tool" (the tool name), "audio" (one audio '
    'path, or a list of paths; omit it for tools that take no audio), and "prompt" '
    "(the instruction for the tool). You may emit several tool_call blocks in one "
    "reply; they run in order, and each tool's output is returned to you before "
    "your next reply."
)


def build_system_prompt(registry: ToolRegistry) -> str:
    """Verbatim analyst framing followed by one documentation block per
    registered tool and the tag-body format specification."""
    parts = [SYSTEM_PROMPT_HEADER]
    if len(registry) == 0:
        parts.append("(none — no tools are registered; answer directly from the question and choices)")
        return "\n\n".join(parts)
    parts.extend(_tool_block(spec) for spec in registry)
    parts.append(_FORMAT_SPEC)
    return "\n\n".join(parts)


def choice_label(index: int) -> str:
    return chr(ord("a") + index) if index < 26 else str(index + 1)


def compose_user_message(task: AudioTask) -> str:
    lines = [f"Question: {task.question}"]
    if task.choices:
        lines.append("")
        lines.append("Choices:")
        for i, choice in enumerate(task.choices):
            lines.append(f"({choice_label(i)}) {choice}")
    lines.append("")
    lines.append("Audio files:")
    for ref in task.audio_refs:
        lines.append(f"- {ref}")
    return "\n".join(lines)


def _tool_message(result: ToolResult) -> str:
    if result.error:
        return f"[tool {result.tool_name} error] {result.error}"
    return result.text


def _result_payload(call: ToolCallRequest, result: ToolResult) -> dict[str, Any]:
    return {
        "tool_name": result.tool_name,
        "prompt": call.prompt,
        "audio_refs": list(call.audio_refs),
        "text": result.text,
        "latency": result.latency,
        "attempts": result.attempts,
        "refusal": result.refusal,
        "error": result.error,
    }


def run_session(
    task: AudioTask,
    backend: AgentBackend,
    registry: ToolRegistry,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    *,
    audio_root: Optional[str | Path] = None,
    sampling: Optional[dict[str, Any]] = None,
    on_event: Optional[EventCallback] = None,
) -> SessionTrace:
    """Run one agent session to completion.

    The loop sends the question, executes parsed tool calls in order
    (skipping any beyond the remaining budget), feeds each result back, and
    terminates on an answer, on a backend failure, or — once the budget is
    spent — after one final tool-free nudge. A turn carrying both tool calls
    and an answer keeps gathering evidence: the tool calls win.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    started = time.monotonic()
    emit = on_event or (lambda kind, payload: None)
    emit("session_started", {"task_id": task.id, "seed": seed, "budget": budget})

    turns: list[TurnRecord] = [
        TurnRecord("system", build_system_prompt(registry)),
        TurnRecord("user", compose_user_message(task)),
    ]
    used = 0
    idle_streak = 0

    def messages() -> list[dict[str, str]]:
        return [{"role": t.role, "content": t.content} for t in turns]

    def finish(outcome: Outcome, answer: Optional[str]) -> SessionTrace:
        if answer is not None:
            emit("answer", {"text": answer})
        emit("session_ended", {"outcome": outcome.value, "tool_call_count": used})
        return SessionTrace(
            task_id=task.id,
            turns=turns,
            tool_call_count=used,
            outcome=outcome,
            answer=answer,
            seed=seed,
            wall_time=time.monotonic() - started,
        )

    def complete_turn() -> Optional[str]:
        try:
            text = backend.complete(messages(), seed=seed, sampling=sampling)
        except BackendError as exc:
            # Preserve the failure in the partial trace for audit.
            turns.append(TurnRecord("system", f"[backend error] {exc}"))
            return None
        turns.append(TurnRecord("assistant", text))
        emit("assistant_text", {"text": text})
        return text

    while True:
        text = complete_turn()
        if text is None:
            return finish(Outcome.AGENT_ERROR, None)
        parsed = parse_turn(text)

        if parsed.tool_calls:
            idle_streak = 0
            for call in parsed.tool_calls:
                if used >= budget:
                    break  # calls beyond the remaining budget are not executed
                emit(
                    "tool_call_started",
                    {"tool_name": call.tool_name, "audio_refs": list(call.audio_refs), "prompt": call.prompt},
                )
                try:
                    result = invoke(registry, call, audio_root=audio_root)
                except AdapterError as exc:
                    result = ToolResult(tool_name=call.tool_name, text="", attempts=1, error=str(exc))
                turns.append(TurnRecord("tool", _tool_message(result), tool_call=call, tool_result=result))
                emit("tool_result", _result_payload(call, result))
                used += 1
            if used >= budget:
                # Budget spent: one tool-free nudge, then accept only an answer.
                turns.append(TurnRecord("user", BUDGET_NUDGE))
                final = complete_turn()
                if final is None:
                    return finish(Outcome.AGENT_ERROR, None)
                final_parsed = parse_turn(final)
                if final_parsed.answer is not None:
                    return finish(Outcome.ANSWERED, final_parsed.answer)
                return finish(Outcome.BUDGET_EXHAUSTED, None)
            continue

        if parsed.answer is not None:
            return finish(Outcome.ANSWERED, parsed.answer)

        idle_streak += 1
        if idle_streak > MAX_IDLE_TURNS:
            return finish(Outcome.AGENT_ERROR, None)
        turns.append(TurnRecord("user", IDLE_NUDGE))


def answer_of(trace: SessionTrace) -> Optional[str]:
    return trace.answer


def trace_fingerprint(trace: SessionTrace) -> tuple:
    """Hashable digest of everything deterministic in a trace: excludes
    wall_time and per-call latencies, which vary run to run."""
    turn_digest = []
    for t in trace.turns:
        result = t.tool_result
        turn_digest.append(
            (
                t.role,
                t.content,
                (t.tool_call.tool_name, tuple(t.tool_call.audio_refs), t.tool_call.prompt)
                if t.tool_call
                else None,
                (result.tool_name, result.text, result.attempts, result.refusal, result.error)
                if result
                else None,
            )
        )
    return (
        trace.task_id,
        tuple(turn_digest),
        trace.tool_call_count,
        trace.outcome.value,
        trace.answer,
        trace.seed,
    )
