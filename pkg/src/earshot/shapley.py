"""Tool attribution via Monte Carlo permutation sampling of Shapley values.

The value of a tool coalition is expensive (one full benchmark pass), so
coalition evaluations are memoized by sorted tool-name key and can be
persisted to an append-only cache file that survives interrupted runs.
Stage one samples uniform random permutations of the tool list; stage two
records the marginal contribution v(S + tool) - v(S) only where the
predecessor set S is large enough, which with the default of 2 restricts
attribution to coalitions of two or more tools. Estimates carry the mean
marginal contribution, its standard error, and the sample count. Negative
values are legal and never clamped.
"""

from __future__ import annotations

import itertools
import json
import math
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

import yaml

CoalitionValueFn = Callable[[frozenset[str]], float]

EXACT_MAX_TOOLS = 10


class CoalitionEvaluationError(Exception):
    def __init__(self, coalition: frozenset[str], cause: Exception):
        super().__init__(f"value function failed on coalition {sorted(coalition)}: {cause}")
        self.coalition = coalition
        self.cause = cause


@dataclass
class ShapleyEstimate:
    tool_name: str
    value: float
    std_error: float
    n_samples: int


@dataclass
class EstimatorConfig:
    n_permutations: int
    min_predecessor_size: int = 2
    seed: int = 0
    cache_path: Optional[str | Path] = None

    def __post_init__(self) -> None:
        if self.n_permutations < 1:
            raise ValueError("n_permutations must be >= 1")
        if self.min_predecessor_size < 0:
            raise ValueError("min_predecessor_size must be >= 0")


class MemoizedCoalitionValue:
    """Thread-safe memo over a coalition value function.

    Guarantees a single underlying evaluation per distinct coalition even
    under concurrent callers (latecomers block on the first evaluation).
    With a cache path, every evaluation is appended as a JSON line so an
    interrupted run resumes without recomputation.
    """

    def __init__(self, fn: CoalitionValueFn, cache_path: Optional[str | Path] = None):
        self._fn = fn
        self._cache: dict[frozenset[str], float] = {}
        self._inflight: dict[frozenset[str], threading.Event] = {}
        self._lock = threading.Lock()
        self.evaluations = 0
        self._cache_path = Path(cache_path) if cache_path is not None else None
        if self._cache_path is not None and self._cache_path.is_file():
            for line in self._cache_path.read_text().splitlines():
                if not line.strip():
                    continue
                row = json.loads(line)
                self._cache[frozenset(row["coalition"])] = float(row["value"])

    def __call__(self, coalition: Iterable[str]) -> float:
        key = frozenset(coalition)
        while True:
            with self._lock:
                if key in self._cache:
                    return self._cache[key]
                event = self._inflight.get(key)
                if event is None:
                    event = threading.Event()
                    self._inflight[key] = event
                    break
            event.wait()
        try:
            value = float(self._fn(key))
        except Exception as exc:
            with self._lock:
                self._inflight.pop(key, None)
            event.set()
            raise CoalitionEvaluationError(key, exc) from exc
        with self._lock:
            self._cache[key] = value
            self.evaluations += 1
            self._inflight.pop(key, None)
            if self._cache_path is not None:
                record = {"coalition": sorted(key), "value": value, "timestamp": time.time()}
                with self._cache_path.open("a") as fh:
                    fh.write(json.dumps(record) + "\n")
        event.set()
        return value


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values)


def _std_error(values: list[float], *, population: bool) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    mean = _mean(values)
    squared = math.fsum((v - mean) ** 2 for v in values)
    variance = squared / n if population else squared / (n - 1)
    return math.sqrt(variance / n)


def _check_tools(tools: list[str], min_predecessor_size: int) -> None:
    if len(tools) < 2:
        raise ValueError("need at least two tools")
    if len(set(tools)) != len(tools):
        raise ValueError("tool names must be unique")
    if min_predecessor_size > len(tools) - 1:
        raise ValueError(
            f"min_predecessor_size={min_predecessor_size} leaves no qualifying positions "
            f"for {len(tools)} tools"
        )


def _collect(
    tools: list[str],
    v: CoalitionValueFn,
    permutations: Iterable[tuple[int, ...]],
    min_predecessor_size: int,
) -> list[list[float]]:
    """Record qualifying marginal contributions per tool index.

    Coalitions are tracked as bitmasks internally; the value function is
    consulted lazily (never for coalitions that qualify no marginal) and at
    most once per distinct coalition.
    """
    memo: dict[int, float] = {}

    def value_of(mask: int) -> float:
        cached = memo.get(mask)
        if cached is None:
            cached = memo[mask] = v(frozenset(tools[i] for i in range(len(tools)) if mask & (1 << i)))
        return cached

    deltas: list[list[float]] = [[] for _ in tools]
    for perm in permutations:
        mask = 0
        for size, idx in enumerate(perm):
            if size >= min_predecessor_size:
                deltas[idx].append(value_of(mask | (1 << idx)) - value_of(mask))
            mask |= 1 << idx
    return deltas


def _estimates(tools: list[str], deltas: list[list[float]], *, population: bool) -> list[ShapleyEstimate]:
    out = []
    for name, values in zip(tools, deltas):
        if not values:
            continue  # tool never landed in a qualifying position
        out.append(
            ShapleyEstimate(
                tool_name=name,
                value=_mean(values),
                std_error=_std_error(values, population=population),
                n_samples=len(values),
            )
        )
    return out


def estimate_shapley(
    tools: list[str], v: CoalitionValueFn, cfg: EstimatorConfig
) -> list[ShapleyEstimate]:
    """Two-stage Monte Carlo Shapley estimation.

    Stage one draws cfg.n_permutations uniform permutations from
    random.Random(cfg.seed) via Fisher-Yates, so the permutation stream is
    reproducible across platforms. Stage two averages each tool's
    qualifying marginal contributions; the standard error is the sample
    standard deviation of those contributions over sqrt(n).

    When the permutation budget covers the whole permutation space
    (n_permutations >= n!), sampling with replacement is strictly worse
    than enumerating, so each distinct permutation is visited exactly once
    and the result coincides with exact_shapley.
    """
    tools = list(tools)
    _check_tools(tools, cfg.min_predecessor_size)
    memoized = v if isinstance(v, MemoizedCoalitionValue) else MemoizedCoalitionValue(v, cfg.cache_path)

    n = len(tools)
    if cfg.n_permutations >= math.factorial(n):
        deltas = _collect(tools, memoized, itertools.permutations(range(n)), cfg.min_predecessor_size)
        return _estimates(tools, deltas, population=True)

    rng = random.Random(cfg.seed)
    base = list(range(n))

    def sampled() -> Iterable[tuple[int, ...]]:
        for _ in range(cfg.n_permutations):
            perm = base.copy()
            for i in range(n - 1):
                j = rng.randrange(i, n)
                perm[i], perm[j] = perm[j], perm[i]
            yield tuple(perm)

    deltas = _collect(tools, memoized, sampled(), cfg.min_predecessor_size)
    return _estimates(tools, deltas, population=False)


def exact_shapley(
    tools: list[str], v: CoalitionValueFn, min_predecessor_size: int = 2
) -> list[ShapleyEstimate]:
    """Brute-force oracle: enumerate all permutations and apply the same
    qualification rule. The standard error is computed over the full
    population of qualifying marginals."""
    tools = list(tools)
    _check_tools(tools, min_predecessor_size)
    if len(tools) > EXACT_MAX_TOOLS:
        raise ValueError(f"exact enumeration is limited to {EXACT_MAX_TOOLS} tools")
    memoized = v if isinstance(v, MemoizedCoalitionValue) else MemoizedCoalitionValue(v)
    deltas = _collect(tools, memoized, itertools.permutations(range(len(tools))), min_predecessor_size)
    return _estimates(tools, deltas, population=True)


def emit_attribution_plot_data(
    estimates: list[ShapleyEstimate], out_path: str | Path
) -> list[Path]:
    """Write plot-ready attribution data: a CSV sorted ascending by value
    (ties broken by tool name) and a bar-with-error-bars SVG next to it."""
    if not estimates:
        raise ValueError("estimates must be non-empty")
    ordered = sorted(estimates, key=lambda e: (e.value, e.tool_name))

    csv_path = Path(out_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["tool,value,std_error,n_samples"]
    for e in ordered:
        lines.append(f"{e.tool_name},{e.value:.6f},{e.std_error:.6f},{e.n_samples}")
    csv_path.write_text("\n".join(lines) + "\n")

    svg_path = csv_path.with_suffix(".svg")
    svg_path.write_text(_render_bar_chart(ordered))
    return [csv_path, svg_path]


def _render_bar_chart(ordered: list[ShapleyEstimate]) -> str:
    left, right, row_h, top, bottom = 190, 40, 26, 24, 28
    plot_w = 420.0
    height = top + bottom + row_h * len(ordered)
    lo = min(min(e.value - e.std_error for e in ordered), 0.0)
    hi = max(max(e.value + e.std_error for e in ordered), 0.0)
    span = (hi - lo) or 1.0

    def x(value: float) -> float:
        return left + (value - lo) / span * plot_w

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{left + plot_w + right:.0f}" '
        f'height="{height}" font-family="sans-serif" font-size="12">',
        f'<line x1="{x(0):.1f}" y1="{top - 8}" x2="{x(0):.1f}" y2="{height - bottom + 8}" '
        'stroke="#444" stroke-width="1"/>',
    ]
    for i, e in enumerate(ordered):
        y = top + i * row_h
        mid = y + row_h / 2
        x0, x1 = sorted((x(0), x(e.value)))
        color = "#4878a8" if e.value >= 0 else "#a85048"
        parts.append(
            f'<rect x="{x0:.1f}" y="{y + 5:.1f}" width="{max(x1 - x0, 0.5):.1f}" '
            f'height="{row_h - 10}" fill="{color}"/>'
        )
        ex0, ex1 = x(e.value - e.std_error), x(e.value + e.std_error)
        parts.append(
            f'<line x1="{ex0:.1f}" y1="{mid:.1f}" x2="{ex1:.1f}" y2="{mid:.1f}" '
            'stroke="#000" stroke-width="1"/>'
        )
        for ex in (ex0, ex1):
            parts.append(
                f'<line x1="{ex:.1f}" y1="{mid - 4:.1f}" x2="{ex:.1f}" y2="{mid + 4:.1f}" '
                'stroke="#000" stroke-width="1"/>'
            )
        parts.append(f'<text x="{left - 8}" y="{mid + 4:.1f}" text-anchor="end">{e.tool_name}</text>')
        parts.append(
            f'<text x="{x(hi) + 6:.1f}" y="{mid + 4:.1f}" fill="#555">{e.value:+.4f}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def load_synthetic_game(path: str | Path) -> tuple[list[str], CoalitionValueFn]:
    """Load a declared value table for estimator testing.

    YAML schema: ``tools`` (list of names) and ``values`` (mapping from a
    comma-joined *sorted* coalition key to its value; the empty string keys
    the empty coalition). Evaluating a coalition absent from the table
    fails, which the estimator reports with the offending coalition.
    """
    raw = yaml.safe_load(Path(path).read_text())
    if not isinstance(raw, dict) or "tools" not in raw or "values" not in raw:
        raise ValueError(f"synthetic game {path} needs 'tools' and 'values' keys")
    tools = [str(t) for t in raw["tools"]]
    table = {str(k): float(val) for k, val in dict(raw["values"]).items()}

    def v(coalition: frozenset[str]) -> float:
        key = ",".join(sorted(coalition))
        if key not in table:
            raise KeyError(f"coalition {key!r} not in value table")
        return table[key]

    return tools, v
