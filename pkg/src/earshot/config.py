"""Whole-application config: the tool registry plus the agent backend.

One YAML file configures everything. The ``tools`` array is the registry
(see adapters.load_registry); the ``agent`` section selects the reasoning
backend, either a real chat-completions endpoint or a scripted mock:

    agent:
      script: mock_agent.yaml        # deterministic scripted backend
    # or
    agent:
      endpoint: https://api.example.com/v1
      model_id: some-reasoning-model
      auth_env: AGENT_API_KEY
      temperature: 1.0

Optional top-level keys: ``budget`` (tool-call cap per session, default 20)
and ``audio_root`` (base directory for relative audio references).
Credentials are only ever named via environment variables.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

from .adapters import ConfigNotFoundError, ConfigSchemaError, ToolRegistry, load_registry
from .agent import DEFAULT_BUDGET
from .backends import AgentBackend, HttpBackend, load_backend_script


@dataclass
class AppConfig:
    path: Path
    registry: ToolRegistry
    backend: Optional[AgentBackend]
    budget: int = DEFAULT_BUDGET
    audio_root: Optional[Path] = None


def load_config(config_path: str | Path) -> AppConfig:
    path = Path(config_path)
    if not path.is_file():
        raise ConfigNotFoundError(f"config file not found: {path}")
    registry = load_registry(path)
    raw = yaml.safe_load(path.read_text())

    backend: Optional[AgentBackend] = None
    agent_raw = raw.get("agent")
    if agent_raw is not None:
        if not isinstance(agent_raw, dict):
            raise ConfigSchemaError("'agent' must be a mapping", fieldname="agent")
        if "script" in agent_raw:
            script = Path(agent_raw["script"])
            if not script.is_absolute():
                script = path.parent / script
            backend = load_backend_script(script)
        elif "endpoint" in agent_raw:
            if not agent_raw.get("model_id"):
                raise ConfigSchemaError("agent endpoint needs a 'model_id'", fieldname="agent.model_id")
            backend = HttpBackend(
                endpoint=str(agent_raw["endpoint"]),
                model_id=str(agent_raw["model_id"]),
                auth_env=str(agent_raw["auth_env"]) if agent_raw.get("auth_env") else None,
                temperature=float(agent_raw.get("temperature", 1.0)),
                timeout=float(agent_raw.get("timeout", 120.0)),
                max_retries=int(agent_raw.get("max_retries", 2)),
                sampling=dict(agent_raw.get("sampling") or {}),
            )
        else:
            raise ConfigSchemaError("'agent' needs either 'script' or 'endpoint'", fieldname="agent")

    budget = int(raw.get("budget", DEFAULT_BUDGET))
    if budget < 0:
        raise ConfigSchemaError("'budget' must be >= 0", fieldname="budget")

    audio_root: Optional[Path] = None
    if raw.get("audio_root"):
        audio_root = Path(str(raw["audio_root"]))
        if not audio_root.is_absolute():
            audio_root = path.parent / audio_root

    return AppConfig(path=path, registry=registry, backend=backend, budget=budget, audio_root=audio_root)


def require_backend(config: AppConfig) -> AgentBackend:
    if config.backend is None:
        raise ConfigSchemaError(
            "this command needs an 'agent' section in the config (script or endpoint)",
            fieldname="agent",
        )
    return config.backend
