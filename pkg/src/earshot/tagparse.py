"""Structured-tag protocol between the reasoning agent and the framework.

The agent requests tool invocations by emitting ``<tool_call>`` blocks whose
body is a flat JSON object with keys ``tool``, ``audio`` (a path string or a
list of paths) and ``prompt``, and commits to a final answer with
``<answer>...</answer>``. Model output is unreliable, so parsing is total:
malformed fragments are skipped and reported as diagnostics, never raised.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

TOOL_CALL_OPEN = "<tool_call>"
TOOL_CALL_CLOSE = "</tool_call>"
ANSWER_OPEN = "<answer>"
ANSWER_CLOSE = "</answer>"


@dataclass
class ToolCallRequest:
    """One requested tool invocation decoded from a ``<tool_call>`` block.

    ``span`` holds the (start, end) character offsets of the originating tag
    pair when the request came out of the parser; it is excluded from
    equality so round-trip comparisons work on the semantic triple.
    """

    tool_name: str
    audio_refs: list[str]
    prompt: str
    span: Optional[tuple[int, int]] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.tool_name:
            raise ValueError("tool_name must be non-empty")
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass
class ParsedTurn:
    """Everything extracted from one assistant turn.

    ``answer`` is the content of the last well-formed answer pair, or None.
    ``free_text`` is the turn with all well-formed tag spans removed.
    ``diagnostics`` records malformed fragments (unclosed tags, undecodable
    bodies, missing keys); it never causes a failure.
    """

    tool_calls: list[ToolCallRequest] = field(default_factory=list)
    answer: Optional[str] = None
    free_text: str = ""
    diagnostics: list[str] = field(default_factory=list)


def _scan_pairs(text: str, open_tag: str, close_tag: str) -> tuple[list[tuple[int, int, str]], list[int]]:
    """Left-to-right scan for ``open_tag``...``close_tag`` pairs.

    Returns (pairs, unclosed) where each pair is (start, end, body) with
    ``start``/``end`` spanning the full tag pair, and ``unclosed`` holds the
    offsets of open tags with no later close tag.
    """
    pairs: list[tuple[int, int, str]] = []
    unclosed: list[int] = []
    pos = 0
    while True:
        start = text.find(open_tag, pos)
        if start == -1:
            break
        body_start = start + len(open_tag)
        close = text.find(close_tag, body_start)
        if close == -1:
            unclosed.append(start)
            break
        end = close + len(close_tag)
        pairs.append((start, end, text[body_start:close]))
        pos = end
    return pairs, unclosed


def _decode_body(body: str, offset: int, diagnostics: list[str]) -> Optional[ToolCallRequest]:
    """Decode one tool_call body; on any defect record a diagnostic and return None."""
    try:
        payload = json.loads(body)
    except (json.JSONDecodeError, ValueError) as exc:
        diagnostics.append(f"undecodable tool_call body at offset {offset}: {exc}")
        return None
    if not isinstance(payload, dict):
        diagnostics.append(f"tool_call body at offset {offset} is not a JSON object")
        return None

    tool = payload.get("tool")
    if not isinstance(tool, str) or not tool:
        diagnostics.append(f"tool_call body at offset {offset} missing required key 'tool'")
        return None
    prompt = payload.get("prompt")
    if not isinstance(prompt, str) or not prompt:
        diagnostics.append(f"tool_call body at offset {offset} missing required key 'prompt'")
        return None

    audio_raw: Any = payload.get("audio", [])
    if isinstance(audio_raw, str):
        audio_refs = [audio_raw]
    elif isinstance(audio_raw, list):
        if not all(isinstance(ref, str) for ref in audio_raw):
            diagnostics.append(f"tool_call body at offset {offset} has non-string 'audio' entries")
            return None
        audio_refs = list(audio_raw)
    else:
        diagnostics.append(f"tool_call body at offset {offset} has invalid 'audio' value")
        return None

    return ToolCallRequest(tool_name=tool, audio_refs=audio_refs, prompt=prompt)


def _remove_spans(text: str, spans: list[tuple[int, int]]) -> str:
    if not spans:
        return text
    merged: list[list[int]] = []
    for start, end in sorted(spans):
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    out: list[str] = []
    pos = 0
    for start, end in merged:
        out.append(text[pos:start])
        pos = end
    out.append(text[pos:])
    return "".join(out)


def parse_turn(text: str) -> ParsedTurn:
    """Extract tool calls and the final answer from arbitrary model output.

    Never raises: every malformed fragment becomes a diagnostic. Tool calls
    are returned in source order; when several answer pairs exist, the last
    one wins.
    """
    diagnostics: list[str] = []

    call_pairs, call_unclosed = _scan_pairs(text, TOOL_CALL_OPEN, TOOL_CALL_CLOSE)
    for offset in call_unclosed:
        diagnostics.append(f"unclosed {TOOL_CALL_OPEN} tag at offset {offset}")

    tool_calls: list[ToolCallRequest] = []
    spans: list[tuple[int, int]] = []
    for start, end, body in call_pairs:
        request = _decode_body(body, start, diagnostics)
        if request is not None:
            request.span = (start, end)
            tool_calls.append(request)
        spans.append((start, end))

    answer_pairs, answer_unclosed = _scan_pairs(text, ANSWER_OPEN, ANSWER_CLOSE)
    for offset in answer_unclosed:
        diagnostics.append(f"unclosed {ANSWER_OPEN} tag at offset {offset}")
    answer: Optional[str] = None
    if answer_pairs:
        answer = answer_pairs[-1][2].strip()
        spans.extend((start, end) for start, end, _ in answer_pairs)

    return ParsedTurn(
        tool_calls=tool_calls,
        answer=answer,
        free_text=_remove_spans(text, spans),
        diagnostics=diagnostics,
    )


def render_tool_call(req: ToolCallRequest) -> str:
    """Canonical serialization of a request; inverse of parse_turn.

    ``audio`` is encoded as a bare string for single-audio calls and a list
    otherwise. Every ``<`` inside the body is emitted as the JSON escape
    ``\\u003c`` so a prompt containing tag text cannot terminate the block
    early; json.loads restores the original characters.
    """
    body: dict[str, Any] = {"tool": req.tool_name}
    if len(req.audio_refs) == 1:
        body["audio"] = req.audio_refs[0]
    elif req.audio_refs:
        body["audio"] = list(req.audio_refs)
    body["prompt"] = req.prompt
    encoded = json.dumps(body, ensure_ascii=False).replace("<", "\\u003c")
    return f"{TOOL_CALL_OPEN}{encoded}{TOOL_CALL_CLOSE}"
