"""Command-line entry points.

Every command is fully functional in mock mode: a config whose tools are
scripted mocks and whose agent is a scripted backend needs no network
access and no credentials. Exit codes: 0 success, 1 the run finished
without an answer (or criteria failed), 2 configuration or usage errors.
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Optional

import click

from .adapters import ConfigError
from .agent import Outcome, run_session
from .bench import DatasetError, emit_report, load_dataset, run_benchmark, subsample
from .config import load_config, require_backend
from .agent import AudioTask
from .datasets import STYLES, ConversionError, convert_file
from .shapley import (
    CoalitionEvaluationError,
    EstimatorConfig,
    MemoizedCoalitionValue,
    ShapleyEstimate,
    emit_attribution_plot_data,
    estimate_shapley,
    exact_shapley,
    load_synthetic_game,
)


def _fail(message: str, code: int = 2) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config_or_exit(config_path: str):
    try:
        return load_config(config_path)
    except ConfigError as exc:
        _fail(str(exc))


@click.group()
def main() -> None:
    """Audio question answering through tool-calling agents."""


@main.command("run")
@click.option("--config", "config_path", required=True, help="Tool/agent config file.")
@click.option("--audio", "audio_refs", multiple=True, required=True, help="Audio reference (repeatable).")
@click.option("--question", required=True)
@click.option("--choice", "choices", multiple=True, help="Answer choice (repeatable).")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--budget", default=None, type=int, help="Tool-call budget override.")
@click.option("--quiet", is_flag=True, help="Suppress the live trace; print only the summary.")
def cmd_run(config_path, audio_refs, question, choices, seed, budget, quiet) -> None:
    """Ask one question about one or more audio files."""
    config = _load_config_or_exit(config_path)
    try:
        backend = require_backend(config)
        task = AudioTask(
            id="cli",
            audio_refs=list(audio_refs),
            question=question,
            choices=list(choices) if choices else None,
        )
    except (ConfigError, ValueError) as exc:
        _fail(str(exc))

    def live(kind: str, payload: dict) -> None:
        if quiet:
            return
        if kind == "assistant_text":
            click.echo(f"[agent] {payload['text']}")
        elif kind == "tool_call_started":
            click.echo(f"[call] {payload['tool_name']} <- {payload['prompt']}")
        elif kind == "tool_result":
            status = "error" if payload.get("error") else ("refusal" if payload["refusal"] else "ok")
            click.echo(f"[tool {payload['tool_name']}] ({status}, attempts={payload['attempts']}) {payload['text']}")

    trace = run_session(
        task,
        backend,
        config.registry,
        budget=budget if budget is not None else config.budget,
        seed=seed,
        audio_root=config.audio_root,
        on_event=live,
    )

    click.echo(f"outcome: {trace.outcome.value}")
    click.echo(f"tool calls: {trace.tool_call_count}")
    for turn in trace.turns:
        if turn.tool_result is not None:
            result = turn.tool_result
            status = "error" if result.error else ("refusal" if result.refusal else "ok")
            click.echo(f"  - {result.tool_name}: {status} (attempts={result.attempts})")
    if trace.outcome is Outcome.ANSWERED:
        click.echo(f"answer: {trace.answer}")
        sys.exit(0)
    click.echo("no answer produced" + (" (budget exhausted)" if trace.outcome is Outcome.BUDGET_EXHAUSTED else ""))
    sys.exit(1)


def _parse_seeds(raw: str) -> list[int]:
    try:
        return [int(s) for s in raw.split(",") if s.strip() != ""]
    except ValueError:
        _fail(f"invalid seed list: {raw!r}")
        raise AssertionError  # unreachable


@main.command("bench")
@click.option("--dataset", "dataset_path", required=True)
@click.option("--config", "config_path", required=True)
@click.option("--seeds", default="1", show_default=True, help="Comma-separated seed list.")
@click.option("--fraction", default=1.0, type=float, show_default=True)
@click.option("--subsample-seed", default=0, type=int, show_default=True)
@click.option("--parallelism", default=1, type=int, show_default=True)
@click.option("--out", "out_dir", required=True)
def cmd_bench(dataset_path, config_path, seeds, fraction, subsample_seed, parallelism, out_dir) -> None:
    """Run the benchmark and write report files."""
    config = _load_config_or_exit(config_path)
    seed_list = _parse_seeds(seeds)
    try:
        backend = require_backend(config)
        dataset = load_dataset(dataset_path, audio_root=config.audio_root)
        if fraction != 1.0:
            dataset = subsample(dataset, fraction, subsample_seed)
        report = run_benchmark(
            dataset,
            backend,
            config.registry,
            seeds=seed_list,
            parallelism=parallelism,
            budget=config.budget,
            audio_root=config.audio_root,
        )
    except (ConfigError, DatasetError, ValueError) as exc:
        _fail(str(exc))
        raise AssertionError
    try:
        paths = emit_report(report, out_dir)
    except OSError as exc:
        _fail(f"cannot write report: {exc}")
        raise AssertionError

    click.echo(f"items: {len(dataset.items)}  seeds: {seed_list}")
    for name, stat in report.per_category.items():
        click.echo(f"  {name}: {stat.accuracy:.4f} (n={stat.n})")
    click.echo(f"  micro average: {report.micro_average:.4f}")
    click.echo(f"  macro average: {report.macro_average:.4f}")
    click.echo(f"  mean across seeds: {report.mean_across_seeds:.4f}")
    for path in paths:
        click.echo(f"wrote {path}")
    sys.exit(0)


def _echo_estimates(title: str, estimates: list[ShapleyEstimate]) -> None:
    click.echo(title)
    for e in sorted(estimates, key=lambda e: (e.value, e.tool_name)):
        click.echo(f"  {e.tool_name}: {e.value:+.6f} ± {e.std_error:.6f} (n={e.n_samples})")


@main.command("shapley")
@click.option("--config", "config_path", default=None, help="Tool/agent config (not needed with --synthetic).")
@click.option("--dataset", "dataset_path", default=None)
@click.option("--synthetic", "synthetic_path", default=None, help="Declared value-table game file.")
@click.option("--tools", "tool_subset", default=None, help="Comma-separated tool subset.")
@click.option("--n-permutations", default=200, type=int, show_default=True)
@click.option("--min-predecessor-size", default=2, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--fraction", default=1.0, type=float, show_default=True)
@click.option("--parallelism", default=1, type=int, show_default=True)
@click.option("--cache", "cache_path", default=None, help="Coalition value cache file (resumable).")
@click.option("--exact", is_flag=True, help="Also run the exact enumeration oracle.")
@click.option("--out", "out_dir", required=True)
def cmd_shapley(
    config_path,
    dataset_path,
    synthetic_path,
    tool_subset,
    n_permutations,
    min_predecessor_size,
    seed,
    fraction,
    parallelism,
    cache_path,
    exact,
    out_dir,
) -> None:
    """Estimate per-tool attribution over benchmark accuracy (or a synthetic game)."""
    if synthetic_path is not None:
        try:
            tools, value_fn = load_synthetic_game(synthetic_path)
        except (OSError, ValueError) as exc:
            _fail(str(exc))
            raise AssertionError
    else:
        if config_path is None or dataset_path is None:
            _fail("either --synthetic, or both --config and --dataset, are required")
        config = _load_config_or_exit(config_path)
        try:
            backend = require_backend(config)
            dataset = load_dataset(dataset_path, audio_root=config.audio_root)
            if fraction != 1.0:
                dataset = subsample(dataset, fraction, seed)
        except (ConfigError, DatasetError, ValueError) as exc:
            _fail(str(exc))
            raise AssertionError
        tools = config.registry.names()
        registry = config.registry
        budget = config.budget
        audio_root = config.audio_root

        def value_fn(coalition: frozenset[str]) -> float:
            report = run_benchmark(
                dataset,
                backend,
                registry.restricted(coalition),
                seeds=[seed],
                parallelism=parallelism,
                budget=budget,
                audio_root=audio_root,
            )
            return report.micro_average

    if tool_subset:
        wanted = [t.strip() for t in tool_subset.split(",") if t.strip()]
        unknown = [t for t in wanted if t not in tools]
        if unknown:
            _fail(f"unknown tools: {unknown}")
        tools = wanted

    memoized = MemoizedCoalitionValue(value_fn, cache_path)
    cfg = EstimatorConfig(
        n_permutations=n_permutations,
        min_predecessor_size=min_predecessor_size,
        seed=seed,
        cache_path=cache_path,
    )
    try:
        estimates = estimate_shapley(tools, memoized, cfg)
        exact_estimates = (
            exact_shapley(tools, memoized, min_predecessor_size) if exact else None
        )
    except (ValueError, CoalitionEvaluationError) as exc:
        _fail(str(exc))
        raise AssertionError

    out = Path(out_dir)
    paths = emit_attribution_plot_data(estimates, out / "attribution.csv")
    _echo_estimates("sampled estimates:", estimates)
    if exact_estimates is not None:
        paths += emit_attribution_plot_data(exact_estimates, out / "attribution_exact.csv")
        _echo_estimates("exact estimates:", exact_estimates)
    click.echo(f"coalition evaluations: {memoized.evaluations}")
    for path in paths:
        click.echo(f"wrote {path}")
    sys.exit(0)


@main.command("convert")
@click.option("--style", type=click.Choice(list(STYLES)), required=True, help="Native benchmark layout.")
@click.option("--in", "in_path", required=True, help="Native file (JSON array or JSONL).")
@click.option("--out", "out_path", required=True, help="Destination dataset file.")
def cmd_convert(style, in_path, out_path) -> None:
    """Convert a public benchmark's native file into the dataset schema."""
    try:
        count = convert_file(in_path, style, out_path)
    except (ConversionError, OSError, ValueError) as exc:
        _fail(str(exc))
        raise AssertionError
    click.echo(f"wrote {count} records to {out_path}")
    sys.exit(0)


@main.command("tools")
@click.option("--config", "config_path", required=True)
def cmd_tools(config_path) -> None:
    """Validate a config and list its registered tools."""
    config = _load_config_or_exit(config_path)
    if len(config.registry) == 0:
        click.echo("no tools registered")
    for spec in config.registry:
        target = spec.script if spec.script else spec.endpoint
        click.echo(f"{spec.name} ({spec.kind.value}) -> {target}")
        click.echo(f"  {spec.description}")
    click.echo(f"agent backend: {'configured' if config.backend is not None else 'missing'}")
    sys.exit(0)


@main.command("serve")
@click.option("--config", "config_path", required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, type=int, show_default=True)
@click.option("--ui-dir", default=None, help="Directory of built web console assets.")
@click.option("--retention", default=100, type=int, show_default=True, help="Completed sessions kept in memory.")
def cmd_serve(config_path, host, port, ui_dir, retention) -> None:
    """Run the session-streaming HTTP service."""
    import uvicorn

    from .service import create_app

    config = _load_config_or_exit(config_path)
    if ui_dir is None:
        default_ui = Path("frontend/dist")
        ui_dir = str(default_ui) if default_ui.is_dir() else None
    try:
        app = create_app(config, retention=retention, ui_dir=ui_dir)
    except ConfigError as exc:
        _fail(str(exc))
        raise AssertionError
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
