"""Shared fixtures: deterministic mock tools, scripted agents, and a
generator for the fully scripted benchmark setup used across bench, CLI,
and acceptance tests."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from earshot.adapters import MockRule, ToolKind, ToolRegistry, ToolSpec
from earshot.backends import ScriptRule, ScriptedBackend
from earshot.tagparse import ToolCallRequest, render_tool_call

CHOICES = ["rain", "thunder", "wind", "birds"]
CATEGORIES = ["sound", "music", "speech"]


def mock_tool(name: str = "listener", rules: list[MockRule] | None = None, **kwargs) -> ToolSpec:
    return ToolSpec(
        name=name,
        kind=ToolKind.MOCK,
        description=kwargs.pop("description", f"Deterministic scripted tool '{name}' for tests."),
        mock_rules=rules if rules is not None else [MockRule(text="scripted response")],
        **kwargs,
    )


def tool_call_text(tool: str, audio: str | list[str], prompt: str, lead: str = "") -> str:
    refs = [audio] if isinstance(audio, str) else list(audio)
    return lead + render_tool_call(ToolCallRequest(tool_name=tool, audio_refs=refs, prompt=prompt))


@pytest.fixture
def listener_registry() -> ToolRegistry:
    """One mock tool answering per-audio-file with a fixed transcript."""
    rules = [
        MockRule(audio="*/a.wav", prompt="Transcribe*", text="hello world"),
        MockRule(text="The dominant sound is rain."),
    ]
    return ToolRegistry([mock_tool("listener", rules)])


def adversarial_backend() -> ScriptedBackend:
    """Never answers: every turn requests another tool call."""
    call = tool_call_text("listener", "/a.wav", "Listen again.")
    return ScriptedBackend([ScriptRule(text=f"Still unsure. {call}")])


def make_mock_benchmark(
    root: Path,
    n_items: int = 20,
    n_correct: int = 17,
    seed_answers: dict[int, str] | None = None,
) -> dict[str, Path]:
    """Write a self-contained mock benchmark under ``root``.

    The scripted tool reports the gold choice for the first ``n_correct``
    items and a decoy for the rest; the scripted agent calls the tool on
    turn 1 and answers whatever the tool reported, so exactly
    ``n_correct``/``n_items`` items score correct, independent of seed and
    execution order. With ``seed_answers`` the agent instead answers a
    fixed choice per seed (no tool call), for seed-dependent accuracy
    tables.
    """
    root.mkdir(parents=True, exist_ok=True)

    dataset_lines = []
    tool_rows = []
    for i in range(n_items):
        gold = CHOICES[i % len(CHOICES)]
        said = gold if i < n_correct else CHOICES[(i + 1) % len(CHOICES)]
        dataset_lines.append(
            json.dumps(
                {
                    "id": f"item{i:02d}",
                    "audio": f"clips/item{i:02d}.wav",
                    "question": f"Which sound dominates recording {i:02d}?",
                    "choices": CHOICES,
                    "answer": gold,
                    "categories": [CATEGORIES[i % len(CATEGORIES)]],
                }
            )
        )
        tool_rows.append({"audio": f"*item{i:02d}.wav", "text": f"The dominant sound is {said}."})
    dataset_path = root / "dataset.jsonl"
    dataset_path.write_text("\n".join(dataset_lines) + "\n")

    tool_script = root / "mock_tools.yaml"
    tool_script.write_text(
        "version: 1\nresponses:\n"
        + "".join(
            f"  - audio: {json.dumps(row['audio'])}\n    text: {json.dumps(row['text'])}\n"
            for row in tool_rows
        )
    )

    agent_rows = []
    if seed_answers is None:
        call = tool_call_text("listener", "{audio}", "Describe the dominant sound.")
        agent_rows.append({"turn": 1, "text": f"I will listen first. {call}"})
        for choice in CHOICES:
            agent_rows.append(
                {"match": f"*The dominant sound is {choice}.*", "text": f"<answer>{choice}</answer>"}
            )
    else:
        for seed, choice in seed_answers.items():
            agent_rows.append({"seed": seed, "text": f"<answer>{choice}</answer>"})
    agent_script = root / "mock_agent.yaml"
    lines = ["version: 1", "responses:"]
    for row in agent_rows:
        lines.append(f"  - text: {json.dumps(row['text'])}")
        for key in ("match", "turn", "seed"):
            if key in row:
                lines.append(f"    {key}: {json.dumps(row[key])}")
    agent_script.write_text("\n".join(lines) + "\n")

    config_path = root / "config.yaml"
    config_path.write_text(
        "tools:\n"
        "  - name: listener\n"
        "    kind: mock\n"
        "    description: Scripted audio analysis tool for offline benchmark runs.\n"
        "    script: mock_tools.yaml\n"
        "agent:\n"
        "  script: mock_agent.yaml\n"
        "budget: 20\n"
    )
    return {
        "dataset": dataset_path,
        "config": config_path,
        "tool_script": tool_script,
        "agent_script": agent_script,
    }
