"""Audio question answering through a text-only tool-calling agent.

The agent never hears audio: it reasons in text and delegates listening to
audio-language tools behind HTTP adapters, requesting them through a
structured tag protocol. The package also ships the evaluation machinery:
a multi-seed benchmark harness and a Monte Carlo Shapley estimator that
attributes benchmark accuracy to individual tools.
"""

from .adapters import (
    DEFAULT_REFUSAL_PATTERNS,
    AdapterError,
    ConfigError,
    ConfigNotFoundError,
    ConfigSchemaError,
    DuplicateToolError,
    MockRule,
    ToolKind,
    ToolRegistry,
    ToolResult,
    ToolSpec,
    UnknownToolError,
    detect_refusal,
    invoke,
    load_registry,
)
from .agent import (
    AudioTask,
    Outcome,
    SessionTrace,
    TurnRecord,
    answer_of,
    build_system_prompt,
    compose_user_message,
    run_session,
    trace_fingerprint,
)
from .backends import AgentBackend, BackendError, HttpBackend, ScriptedBackend, ScriptRule, load_backend_script
from .bench import (
    BenchmarkReport,
    CategoryAccuracy,
    Dataset,
    DatasetError,
    ItemResult,
    SeedAccuracy,
    emit_report,
    load_dataset,
    load_report,
    match_answer,
    run_benchmark,
    subsample,
)
from .config import AppConfig, load_config
from .datasets import ConversionError, convert_file, convert_record
from .shapley import (
    CoalitionEvaluationError,
    CoalitionValueFn,
    EstimatorConfig,
    MemoizedCoalitionValue,
    ShapleyEstimate,
    emit_attribution_plot_data,
    estimate_shapley,
    exact_shapley,
    load_synthetic_game,
)
from .tagparse import ParsedTurn, ToolCallRequest, parse_turn, render_tool_call

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "AgentBackend",
    "AppConfig",
    "AudioTask",
    "BackendError",
    "BenchmarkReport",
    "CategoryAccuracy",
    "CoalitionEvaluationError",
    "CoalitionValueFn",
    "ConfigError",
    "ConfigNotFoundError",
    "ConfigSchemaError",
    "ConversionError",
    "Dataset",
    "DatasetError",
    "DEFAULT_REFUSAL_PATTERNS",
    "DuplicateToolError",
    "EstimatorConfig",
    "HttpBackend",
    "ItemResult",
    "MemoizedCoalitionValue",
    "MockRule",
    "Outcome",
    "ParsedTurn",
    "ScriptRule",
    "ScriptedBackend",
    "SeedAccuracy",
    "SessionTrace",
    "ShapleyEstimate",
    "ToolCallRequest",
    "ToolKind",
    "ToolRegistry",
    "ToolResult",
    "ToolSpec",
    "TurnRecord",
    "UnknownToolError",
    "answer_of",
    "build_system_prompt",
    "compose_user_message",
    "convert_file",
    "convert_record",
    "detect_refusal",
    "emit_attribution_plot_data",
    "emit_report",
    "estimate_shapley",
    "exact_shapley",
    "invoke",
    "load_backend_script",
    "load_config",
    "load_dataset",
    "load_registry",
    "load_report",
    "load_synthetic_game",
    "match_answer",
    "parse_turn",
    "render_tool_call",
    "run_benchmark",
    "run_session",
    "subsample",
    "trace_fingerprint",
]
