"""Uniform invocation layer over heterogeneous audio-tool endpoints.

Every tool, whether a remote chat-with-audio model, a speech-to-text
endpoint, a web-search API, or a deterministic scripted mock, is invoked
through the same contract: a :class:`~earshot.tagparse.ToolCallRequest` in,
a :class:`ToolResult` out. Adapters retry on transport failure and on
detected refusals ("I can't listen to audio...") up to a per-tool bound.
"""

from __future__ import annotations

import base64
import fnmatch
import os
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Optional

import httpx
import yaml

from .tagparse import ToolCallRequest

_NAME_RE = re.compile(r"^[a-z0-9_]+$")

DEFAULT_TIMEOUT = 120.0
DEFAULT_MAX_RETRIES = 2

# Case-insensitive substrings that mark a successful HTTP exchange whose text
# is unusable because the tool declined the audio. Curly apostrophes are
# normalized before matching.
DEFAULT_REFUSAL_PATTERNS: tuple[str, ...] = (
    "can't listen",
    "cannot listen",
    "can not listen",
    "unable to process audio",
    "unable to listen",
    "i cannot hear",
)

_AUDIO_FORMATS = {".wav": "wav", ".mp3": "mp3", ".flac": "flac", ".ogg": "ogg", ".m4a": "m4a", ".webm": "webm"}


class ConfigError(Exception):
    """Base for tool-config loading failures."""


class ConfigNotFoundError(ConfigError):
    pass


class ConfigSchemaError(ConfigError):
    def __init__(self, message: str, *, fieldname: Optional[str] = None, line: Optional[int] = None):
        detail = message
        if fieldname is not None:
            detail += f" (field: {fieldname}"
            detail += f", line {line})" if line is not None else ")"
        elif line is not None:
            detail += f" (line {line})"
        super().__init__(detail)
        self.fieldname = fieldname
        self.line = line


class DuplicateToolError(ConfigError):
    pass


class AdapterError(Exception):
    """Base for invocation failures that the session loop surfaces to the agent."""


class UnknownToolError(AdapterError):
    pass


class AudioUnreadableError(AdapterError):
    pass


class MissingCredentialError(AdapterError):
    pass


class ToolKind(str, Enum):
    CHAT_AUDIO = "chat_audio"
    TRANSCRIPTION = "transcription"
    WEB_SEARCH = "web_search"
    MOCK = "mock"


@dataclass
class MockRule:
    """One row of a mock script: glob constraints -> scripted outcome.

    ``attempt`` is 1-based; None matches any attempt. Exactly one of ``text``
    and ``error`` is set; ``error`` simulates a transport failure so retry
    paths can be exercised deterministically.
    """

    tool: str = "*"
    audio: str = "*"
    prompt: str = "*"
    attempt: Optional[int] = None
    text: Optional[str] = None
    error: Optional[str] = None


@dataclass
class ToolSpec:
    name: str
    kind: ToolKind
    description: str
    endpoint: Optional[str] = None
    model_id: Optional[str] = None
    auth_env: Optional[str] = None
    timeout: float = DEFAULT_TIMEOUT
    max_retries: int = DEFAULT_MAX_RETRIES
    script: Optional[str] = None
    mock_rules: Optional[list[MockRule]] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not _NAME_RE.match(self.name):
            raise ValueError(f"tool name {self.name!r} must match [a-z0-9_]+")
        if not self.description:
            raise ValueError(f"tool {self.name!r} needs a non-empty description")
        if self.timeout <= 0:
            raise ValueError(f"tool {self.name!r} timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError(f"tool {self.name!r} max_retries must be >= 0")


@dataclass
class ToolResult:
    tool_name: str
    text: str
    latency: float = 0.0
    attempts: int = 1
    refusal: bool = False
    error: Optional[str] = None


class ToolRegistry:
    """Immutable, ordered collection of validated ToolSpecs. Lookup is
    case-sensitive exact match."""

    def __init__(self, specs: Iterable[ToolSpec] = ()):
        self._specs: dict[str, ToolSpec] = {}
        for spec in specs:
            if spec.name in self._specs:
                raise DuplicateToolError(f"duplicate tool name: {spec.name!r}")
            self._specs[spec.name] = spec

    def __len__(self) -> int:
        return len(self._specs)

    def __iter__(self):
        return iter(self._specs.values())

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def names(self) -> list[str]:
        return list(self._specs)

    def get(self, name: str) -> ToolSpec:
        try:
            return self._specs[name]
        except KeyError:
            raise UnknownToolError(f"unknown tool: {name!r}") from None

    def restricted(self, names: Iterable[str]) -> "ToolRegistry":
        """New registry containing only the named tools, in registry order."""
        wanted = set(names)
        missing = wanted - set(self._specs)
        if missing:
            raise UnknownToolError(f"unknown tools: {sorted(missing)}")
        return ToolRegistry(spec for spec in self if spec.name in wanted)


def _tools_entry_lines(config_text: str) -> list[Optional[int]]:
    """Best-effort 1-based start line of each entry under the top-level
    ``tools`` key, for error reporting."""
    try:
        root = yaml.compose(config_text)
    except yaml.YAMLError:
        return []
    if root is None or not isinstance(root, yaml.MappingNode):
        return []
    for key_node, value_node in root.value:
        if getattr(key_node, "value", None) == "tools" and isinstance(value_node, yaml.SequenceNode):
            return [item.start_mark.line + 1 for item in value_node.value]
    return []


def _load_mock_rules(script_path: Path) -> list[MockRule]:
    if not script_path.is_file():
        raise ConfigSchemaError(f"mock script not found: {script_path}")
    raw = yaml.safe_load(script_path.read_text())
    if not isinstance(raw, dict) or not isinstance(raw.get("responses"), list):
        raise ConfigSchemaError(f"mock script {script_path} must have a top-level 'responses' list")
    rules: list[MockRule] = []
    for i, row in enumerate(raw["responses"]):
        if not isinstance(row, dict):
            raise ConfigSchemaError(f"mock script {script_path} row {i} is not a mapping")
        if ("text" in row) == ("error" in row):
            raise ConfigSchemaError(
                f"mock script {script_path} row {i} needs exactly one of 'text' or 'error'"
            )
        rules.append(
            MockRule(
                tool=str(row.get("tool", "*")),
                audio=str(row.get("audio", "*")),
                prompt=str(row.get("prompt", "*")),
                attempt=int(row["attempt"]) if "attempt" in row else None,
                text=str(row["text"]) if "text" in row else None,
                error=str(row["error"]) if "error" in row else None,
            )
        )
    return rules


def _spec_from_entry(entry: Any, index: int, line: Optional[int], base_dir: Path) -> ToolSpec:
    where = f"tools[{index}]"
    if not isinstance(entry, dict):
        raise ConfigSchemaError("tool entry is not a mapping", fieldname=where, line=line)

    def need(key: str) -> Any:
        if key not in entry or entry[key] in (None, ""):
            raise ConfigSchemaError("missing required field", fieldname=f"{where}.{key}", line=line)
        return entry[key]

    name = str(need("name"))
    kind_raw = str(need("kind"))
    try:
        kind = ToolKind(kind_raw)
    except ValueError:
        raise ConfigSchemaError(
            f"unknown kind {kind_raw!r} (expected one of {[k.value for k in ToolKind]})",
            fieldname=f"{where}.kind",
            line=line,
        ) from None
    description = str(need("description"))

    script = entry.get("script")
    endpoint = entry.get("endpoint")
    if kind is ToolKind.MOCK:
        if not script:
            raise ConfigSchemaError("mock tools need a 'script' file", fieldname=f"{where}.script", line=line)
    elif not endpoint:
        raise ConfigSchemaError(
            f"{kind.value} tools need an 'endpoint'", fieldname=f"{where}.endpoint", line=line
        )
    if kind in (ToolKind.CHAT_AUDIO, ToolKind.TRANSCRIPTION) and not entry.get("model_id"):
        raise ConfigSchemaError(
            f"{kind.value} tools need a 'model_id'", fieldname=f"{where}.model_id", line=line
        )

    mock_rules = None
    if script:
        script = str((base_dir / script).resolve()) if not os.path.isabs(str(script)) else str(script)
        mock_rules = _load_mock_rules(Path(script))

    try:
        return ToolSpec(
            name=name,
            kind=kind,
            description=description,
            endpoint=str(endpoint) if endpoint else None,
            model_id=str(entry["model_id"]) if entry.get("model_id") else None,
            auth_env=str(entry["auth_env"]) if entry.get("auth_env") else None,
            timeout=float(entry.get("timeout", DEFAULT_TIMEOUT)),
            max_retries=int(entry.get("max_retries", DEFAULT_MAX_RETRIES)),
            script=script,
            mock_rules=mock_rules,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigSchemaError(str(exc), fieldname=where, line=line) from None


def load_registry(config_path: str | Path) -> ToolRegistry:
    """Load and validate the ``tools`` array of a YAML config file.

    Mock entries reference a script file (resolved relative to the config)
    instead of an endpoint; scripts are parsed eagerly so defects surface at
    load time. Duplicate names and schema violations raise with the
    offending field and, when recoverable, the source line.
    """
    path = Path(config_path)
    if not path.is_file():
        raise ConfigNotFoundError(f"config file not found: {path}")
    text = path.read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigSchemaError(f"invalid YAML: {exc}", line=mark.line + 1 if mark else None) from None
    if not isinstance(raw, dict) or "tools" not in raw:
        raise ConfigSchemaError("config must be a mapping with a top-level 'tools' array")
    entries = raw["tools"] or []
    if not isinstance(entries, list):
        raise ConfigSchemaError("'tools' must be an array", fieldname="tools")

    lines = _tools_entry_lines(text)
    specs: list[ToolSpec] = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        line = lines[i] if i < len(lines) else None
        spec = _spec_from_entry(entry, i, line, path.parent)
        if spec.name in seen:
            raise DuplicateToolError(f"duplicate tool name {spec.name!r} (tools[{i}], line {line})")
        seen.add(spec.name)
        specs.append(spec)
    return ToolRegistry(specs)


def detect_refusal(text: str, patterns: Iterable[str] = DEFAULT_REFUSAL_PATTERNS) -> bool:
    """True iff the text matches any refusal pattern (case-insensitive substring)."""
    if not text:
        return False
    normalized = text.lower().replace("’", "'")
    return any(p.lower() in normalized for p in patterns)


class _MockTransportFailure(Exception):
    """Scripted stand-in for a transport failure; retried like a real one."""


def _match_mock(spec: ToolSpec, call: ToolCallRequest, attempt: int) -> str:
    refs = call.audio_refs or [""]
    for rule in spec.mock_rules or []:
        if rule.attempt is not None and rule.attempt != attempt:
            continue
        if not fnmatch.fnmatchcase(spec.name, rule.tool):
            continue
        if not any(fnmatch.fnmatchcase(ref, rule.audio) for ref in refs):
            continue
        if not fnmatch.fnmatchcase(call.prompt, rule.prompt):
            continue
        if rule.error is not None:
            raise _MockTransportFailure(rule.error)
        return rule.text or ""
    raise _MockScriptMiss(
        f"no scripted response for tool={spec.name!r} audio={call.audio_refs!r} prompt={call.prompt!r}"
    )


class _MockScriptMiss(Exception):
    pass


_client: Optional[httpx.Client] = None


def _shared_client() -> httpx.Client:
    global _client
    if _client is None:
        _client = httpx.Client()
    return _client


def _auth_headers(spec: ToolSpec) -> dict[str, str]:
    if not spec.auth_env:
        return {}
    value = os.environ.get(spec.auth_env)
    if not value:
        raise MissingCredentialError(
            f"tool {spec.name!r} needs credential in environment variable {spec.auth_env}"
        )
    return {"Authorization": f"Bearer {value}"}


def _read_audio(ref: str, audio_root: Optional[Path]) -> tuple[bytes, str]:
    path = Path(ref)
    if not path.is_absolute() and audio_root is not None:
        path = audio_root / path
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise AudioUnreadableError(f"cannot read audio file {ref!r}: {exc}") from None
    return data, _AUDIO_FORMATS.get(path.suffix.lower(), "wav")


class _TransportFailure(Exception):
    pass


def _message_content_text(content: Any) -> str:
    if isinstance(content, str):
        return content
    if isinstance(content, list):
        return "".join(part.get("text", "") for part in content if isinstance(part, dict))
    return ""


def _dispatch_chat_audio(spec: ToolSpec, call: ToolCallRequest, audio_root: Optional[Path]) -> str:
    parts: list[dict[str, Any]] = [{"type": "text", "text": call.prompt}]
    for ref in call.audio_refs:
        data, fmt = _read_audio(ref, audio_root)
        parts.append(
            {
                "type": "input_audio",
                "input_audio": {"data": base64.b64encode(data).decode("ascii"), "format": fmt},
            }
        )
    payload = {"model": spec.model_id, "messages": [{"role": "user", "content": parts}]}
    try:
        resp = _shared_client().post(
            f"{spec.endpoint.rstrip('/')}/chat/completions",
            json=payload,
            headers=_auth_headers(spec),
            timeout=spec.timeout,
        )
    except httpx.HTTPError as exc:
        raise _TransportFailure(str(exc)) from None
    return _extract_chat_text(resp)


def _extract_chat_text(resp: httpx.Response) -> str:
    if resp.status_code >= 500:
        raise _TransportFailure(f"server error {resp.status_code}")
    if resp.status_code >= 400:
        raise AdapterError(f"endpoint rejected request: {resp.status_code} {resp.text[:200]}")
    try:
        return _message_content_text(resp.json()["choices"][0]["message"]["content"])
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise _TransportFailure(f"malformed chat response: {exc}") from None


def _dispatch_transcription(spec: ToolSpec, call: ToolCallRequest, audio_root: Optional[Path]) -> str:
    if len(call.audio_refs) != 1:
        # Surfaced as tool-message text so the agent can re-plan per-file calls.
        raise AdapterError(
            f"tool {spec.name!r} transcribes exactly one audio file per call; "
            f"got {len(call.audio_refs)} references. Invoke it once per file."
        )
    data, fmt = _read_audio(call.audio_refs[0], audio_root)
    try:
        resp = _shared_client().post(
            f"{spec.endpoint.rstrip('/')}/audio/transcriptions",
            files={"file": (f"audio.{fmt}", data)},
            data={"model": spec.model_id},
            headers=_auth_headers(spec),
            timeout=spec.timeout,
        )
    except httpx.HTTPError as exc:
        raise _TransportFailure(str(exc)) from None
    if resp.status_code >= 500:
        raise _TransportFailure(f"server error {resp.status_code}")
    if resp.status_code >= 400:
        raise AdapterError(f"endpoint rejected request: {resp.status_code} {resp.text[:200]}")
    try:
        return str(resp.json()["text"])
    except (KeyError, TypeError, ValueError) as exc:
        raise _TransportFailure(f"malformed transcription response: {exc}") from None


def _dispatch_web_search(spec: ToolSpec, call: ToolCallRequest) -> str:
    try:
        resp = _shared_client().post(
            f"{spec.endpoint.rstrip('/')}/search",
            json={"query": call.prompt, "max_results": 5},
            headers=_auth_headers(spec),
            timeout=spec.timeout,
        )
    except httpx.HTTPError as exc:
        raise _TransportFailure(str(exc)) from None
    if resp.status_code >= 500:
        raise _TransportFailure(f"server error {resp.status_code}")
    if resp.status_code >= 400:
        raise AdapterError(f"endpoint rejected request: {resp.status_code} {resp.text[:200]}")
    try:
        body = resp.json()
    except ValueError:
        return resp.text
    results = body.get("results") if isinstance(body, dict) else None
    if isinstance(results, list):
        snippets = []
        for item in results:
            if isinstance(item, dict):
                title = item.get("title", "")
                snippet = item.get("snippet", item.get("content", ""))
                snippets.append(f"{title}: {snippet}".strip(": "))
        return "\n".join(snippets)
    return resp.text


def _dispatch(spec: ToolSpec, call: ToolCallRequest, attempt: int, audio_root: Optional[Path]) -> str:
    if spec.kind is ToolKind.MOCK:
        try:
            return _match_mock(spec, call, attempt)
        except _MockTransportFailure as exc:
            raise _TransportFailure(str(exc)) from None
    if spec.kind is ToolKind.CHAT_AUDIO:
        return _dispatch_chat_audio(spec, call, audio_root)
    if spec.kind is ToolKind.TRANSCRIPTION:
        return _dispatch_transcription(spec, call, audio_root)
    if spec.kind is ToolKind.WEB_SEARCH:
        return _dispatch_web_search(spec, call)
    raise AdapterError(f"unsupported tool kind: {spec.kind}")


def invoke(
    registry: ToolRegistry,
    call: ToolCallRequest,
    *,
    audio_root: Optional[str | Path] = None,
    refusal_patterns: Iterable[str] = DEFAULT_REFUSAL_PATTERNS,
) -> ToolResult:
    """Execute one tool call, retrying on transport failures and refusals.

    Raises UnknownToolError / AudioUnreadableError / MissingCredentialError
    for defects retries cannot fix; exhausted transport retries come back as
    a ToolResult with ``error`` set so the caller can keep the session alive.
    ``attempts`` counts every dispatch, refusal-triggered retries included,
    and never exceeds max_retries + 1.
    """
    spec = registry.get(call.tool_name)
    root = Path(audio_root) if audio_root is not None else None
    max_attempts = spec.max_retries + 1
    started = time.monotonic()

    attempts = 0
    last_failure: Optional[str] = None
    while attempts < max_attempts:
        attempts += 1
        try:
            text = _dispatch(spec, call, attempts, root)
        except _TransportFailure as exc:
            last_failure = str(exc)
            continue
        except _MockScriptMiss as exc:
            return ToolResult(
                tool_name=spec.name,
                text="",
                latency=time.monotonic() - started,
                attempts=attempts,
                error=str(exc),
            )
        # Successful exchanges must carry text; an empty body is treated as a
        # transport fault so it gets retried rather than breaking invariants.
        if not text.strip():
            last_failure = "empty response body"
            continue
        refused = detect_refusal(text, refusal_patterns)
        if refused and attempts < max_attempts:
            continue
        return ToolResult(
            tool_name=spec.name,
            text=text,
            latency=time.monotonic() - started,
            attempts=attempts,
            refusal=refused,
        )
    return ToolResult(
        tool_name=spec.name,
        text="",
        latency=time.monotonic() - started,
        attempts=attempts,
        error=f"all {max_attempts} attempts failed; last failure: {last_failure}",
    )
