"""Reasoning-model backends for the session loop.

The loop only needs ``complete(messages, seed, sampling) -> str``. Two
implementations ship here: an HTTP chat-completions client for real
endpoints, and a deterministic scripted backend driven by glob rules so
whole sessions and benchmarks run offline, bit-identically, with zero
credentials.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Protocol

import httpx
import yaml

from .adapters import ConfigSchemaError


class BackendError(Exception):
    """The backend failed irrecoverably (transport failure after retries)."""


class AgentBackend(Protocol):
    def complete(
        self, messages: list[dict[str, str]], seed: int = 0, sampling: Optional[dict[str, Any]] = None
    ) -> str:
        """Return the assistant's reply for the given conversation."""
        ...


DEFAULT_FALLBACK = "I have no further action."

_AUDIO_LINE_RE = re.compile(r"^- (.+)$", re.MULTILINE)


@dataclass
class ScriptRule:
    """One scripted reply: optional constraints -> response text.

    ``match`` is a glob tested against the conversation joined with
    newlines, ``turn`` the 1-based index of the assistant turn about to be
    produced, ``seed`` an exact seed filter. First matching rule wins.
    """

    text: str
    match: str = "*"
    turn: Optional[int] = None
    seed: Optional[int] = None


def _extract_audio_refs(messages: list[dict[str, str]]) -> list[str]:
    """Pull the audio reference list out of the first user message, which the
    session loop renders as an 'Audio files:' block of '- <ref>' lines."""
    for message in messages:
        if message.get("role") == "user":
            content = message.get("content", "")
            block = content.split("Audio files:", 1)
            if len(block) == 2:
                return _AUDIO_LINE_RE.findall(block[1])
            return []
    return []


class ScriptedBackend:
    """Deterministic rule-table backend for tests and mock mode.

    Response text supports two placeholders resolved from the task's audio
    list: ``{audio}`` (first reference) and ``{audio_list}`` (JSON array of
    all references).
    """

    def __init__(self, rules: list[ScriptRule], fallback: str = DEFAULT_FALLBACK):
        self.rules = list(rules)
        self.fallback = fallback

    def complete(
        self, messages: list[dict[str, str]], seed: int = 0, sampling: Optional[dict[str, Any]] = None
    ) -> str:
        import fnmatch

        turn = 1 + sum(1 for m in messages if m.get("role") == "assistant")
        convo = "\n".join(m.get("content", "") for m in messages)
        text = self.fallback
        for rule in self.rules:
            if rule.turn is not None and rule.turn != turn:
                continue
            if rule.seed is not None and rule.seed != seed:
                continue
            if not fnmatch.fnmatchcase(convo, rule.match):
                continue
            text = rule.text
            break
        refs = _extract_audio_refs(messages)
        if "{audio}" in text:
            text = text.replace("{audio}", refs[0] if refs else "")
        if "{audio_list}" in text:
            text = text.replace("{audio_list}", json.dumps(refs))
        return text


def load_backend_script(path: str | Path) -> ScriptedBackend:
    """Load a scripted backend from YAML.

    Schema (same format family as the mock tool script): a ``responses``
    list of {match, turn, seed, text} rules, and/or a ``turns`` list
    shorthand expanded to turn-indexed rules. ``repeat: last`` appends a
    catch-all repeating the final ``turns`` entry, which is how adversarial
    never-answering agents are scripted.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigSchemaError(f"backend script not found: {p}")
    raw = yaml.safe_load(p.read_text())
    if not isinstance(raw, dict):
        raise ConfigSchemaError(f"backend script {p} must be a mapping")
    rules: list[ScriptRule] = []
    for i, row in enumerate(raw.get("responses") or []):
        if not isinstance(row, dict) or "text" not in row:
            raise ConfigSchemaError(f"backend script {p} responses[{i}] needs a 'text' field")
        rules.append(
            ScriptRule(
                text=str(row["text"]),
                match=str(row.get("match", "*")),
                turn=int(row["turn"]) if "turn" in row else None,
                seed=int(row["seed"]) if "seed" in row else None,
            )
        )
    turns = raw.get("turns") or []
    for i, text in enumerate(turns):
        rules.append(ScriptRule(text=str(text), turn=i + 1))
    if turns and raw.get("repeat") == "last":
        rules.append(ScriptRule(text=str(turns[-1])))
    fallback = str(raw.get("fallback", DEFAULT_FALLBACK))
    return ScriptedBackend(rules, fallback=fallback)


class HttpBackend:
    """Chat-completions client for the reasoning model.

    Trace 'tool' turns are delivered as user messages with a
    "Tool result from <name>:" preamble; the tag protocol is plain text, so
    no native function-calling plumbing is involved. ``seed`` is forwarded
    in the request for endpoints that honor it; real endpoints are
    best-effort deterministic only.
    """

    def __init__(
        self,
        endpoint: str,
        model_id: str,
        auth_env: Optional[str] = None,
        temperature: float = 1.0,
        timeout: float = 120.0,
        max_retries: int = 2,
        sampling: Optional[dict[str, Any]] = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model_id = model_id
        self.auth_env = auth_env
        self.temperature = temperature
        self.timeout = timeout
        self.max_retries = max_retries
        self.sampling = dict(sampling or {})
        self._client = httpx.Client(timeout=timeout)

    def _headers(self) -> dict[str, str]:
        if not self.auth_env:
            return {}
        value = os.environ.get(self.auth_env)
        if not value:
            raise BackendError(f"agent backend needs credential in environment variable {self.auth_env}")
        return {"Authorization": f"Bearer {value}"}

    def _wire_messages(self, messages: list[dict[str, str]]) -> list[dict[str, str]]:
        wire = []
        for m in messages:
            if m["role"] == "tool":
                wire.append({"role": "user", "content": m["content"]})
            else:
                wire.append({"role": m["role"], "content": m["content"]})
        return wire

    def complete(
        self, messages: list[dict[str, str]], seed: int = 0, sampling: Optional[dict[str, Any]] = None
    ) -> str:
        payload: dict[str, Any] = {
            "model": self.model_id,
            "messages": self._wire_messages(messages),
            "temperature": self.temperature,
            "seed": seed,
        }
        payload.update(self.sampling)
        if sampling:
            payload.update(sampling)
        headers = self._headers()

        last_failure: Optional[str] = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(0.5 * attempt)
            try:
                resp = self._client.post(f"{self.endpoint}/chat/completions", json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_failure = str(exc)
                continue
            if resp.status_code >= 500:
                last_failure = f"server error {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise BackendError(f"agent endpoint rejected request: {resp.status_code} {resp.text[:200]}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                last_failure = f"malformed response: {exc}"
                continue
            if isinstance(content, list):
                content = "".join(part.get("text", "") for part in content if isinstance(part, dict))
            return str(content)
        raise BackendError(f"agent backend failed after {self.max_retries + 1} attempts: {last_failure}")
