"""Dataset ingestion, answer matching, multi-seed benchmark runs, and
per-category accuracy reporting.

Datasets are line-delimited JSON records. Scoring is deliberately dumb and
deterministic: a normalization pass plus a fixed matching cascade (label,
exact, unique substring, token overlap). Unanswered items count as
incorrect. Reports carry per-category accuracy, pooled micro / macro
averages, and the per-seed accuracies behind mean-of-runs plots.
"""

from __future__ import annotations

import json
import logging
import random
import re
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .adapters import ToolRegistry
from .agent import AudioTask, Outcome, run_session
from .backends import AgentBackend

logger = logging.getLogger(__name__)

TOKEN_OVERLAP_THRESHOLD = 0.5


@dataclass
class Dataset:
    name: str
    items: list[AudioTask]
    category_scheme: list[str]
    missing_audio: list[str] = field(default_factory=list)


@dataclass
class ItemResult:
    task_id: str
    seed: int
    extracted: Optional[str]
    matched_choice: Optional[int]
    correct: bool
    tool_call_count: int
    outcome: str


@dataclass
class CategoryAccuracy:
    n: int
    accuracy: float


@dataclass
class SeedAccuracy:
    seed: int
    accuracy: float


@dataclass
class BenchmarkReport:
    per_category: dict[str, CategoryAccuracy]
    micro_average: float
    macro_average: float
    per_seed: list[SeedAccuracy]
    mean_across_seeds: float
    item_results: list[ItemResult]


class DatasetError(Exception):
    pass


def load_dataset(path: str | Path, *, audio_root: Optional[str | Path] = None, name: Optional[str] = None) -> Dataset:
    """Load a line-delimited dataset file.

    Each line is a JSON object with fields ``id``, ``audio`` (string or
    list), ``question``, and optionally ``choices``, ``answer``,
    ``categories``. When ``audio_root`` is given, items whose audio files do
    not exist are loaded anyway but flagged in ``missing_audio``.
    """
    p = Path(path)
    if not p.is_file():
        raise DatasetError(f"dataset file not found: {p}")
    root = Path(audio_root) if audio_root is not None else None

    items: list[AudioTask] = []
    missing: list[str] = []
    seen: set[str] = set()
    categories: set[str] = set()
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except ValueError as exc:
            raise DatasetError(f"{p}:{lineno}: malformed record: {exc}") from None
        if not isinstance(record, dict):
            raise DatasetError(f"{p}:{lineno}: record is not an object")
        try:
            item_id = str(record["id"])
            audio = record["audio"]
            question = str(record["question"])
        except KeyError as exc:
            raise DatasetError(f"{p}:{lineno}: missing field {exc}") from None
        if item_id in seen:
            raise DatasetError(f"{p}:{lineno}: duplicate id {item_id!r}")
        seen.add(item_id)
        audio_refs = [str(audio)] if isinstance(audio, str) else [str(a) for a in audio]
        choices = record.get("choices")
        tags = [str(c) for c in record.get("categories", [])]
        try:
            task = AudioTask(
                id=item_id,
                audio_refs=audio_refs,
                question=question,
                choices=[str(c) for c in choices] if choices is not None else None,
                gold=str(record["answer"]) if record.get("answer") is not None else None,
                categories=tags,
            )
        except ValueError as exc:
            raise DatasetError(f"{p}:{lineno}: {exc}") from None
        categories.update(tags)
        if root is not None and not all((root / ref).is_file() for ref in audio_refs):
            missing.append(item_id)
        items.append(task)

    if not items:
        logger.warning("dataset %s is empty", p)
    return Dataset(
        name=name or p.stem,
        items=items,
        category_scheme=sorted(categories),
        missing_audio=missing,
    )


def subsample(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Deterministic seeded sample without replacement.

    Size is round(fraction * n). Selection uses a partial Fisher-Yates
    shuffle over item indices driven by random.Random(seed) (MT19937), then
    restores original dataset order, so fraction=1 is the identity and the
    chosen subset is stable across platforms.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    n = len(dataset.items)
    k = round(fraction * n)
    rng = random.Random(seed)
    indices = list(range(n))
    for i in range(k):
        j = rng.randrange(i, n)
        indices[i], indices[j] = indices[j], indices[i]
    chosen = sorted(indices[:k])
    items = [dataset.items[i] for i in chosen]
    kept = {item.id for item in items}
    return Dataset(
        name=dataset.name,
        items=items,
        category_scheme=list(dataset.category_scheme),
        missing_audio=[i for i in dataset.missing_audio if i in kept],
    )


_STRIP_CHARS = string.whitespace + "\"'`.,;:!?*_-"
_LEAD_LABEL = re.compile(r"^(?:\(([a-z])\)|([a-z])\)|([a-z])\.(?:\s+|$))\s*")


def _normalize(text: str) -> tuple[Optional[str], str]:
    """Lowercase, trim, collapse whitespace, strip surrounding punctuation,
    and split off a leading label of the form '(x)', 'x)' or 'x.'.

    Returns (label, remainder)."""
    s = re.sub(r"\s+", " ", text.lower().strip())
    s = s.strip(_STRIP_CHARS)
    label = None
    m = _LEAD_LABEL.match(s)
    if m:
        label = next(g for g in m.groups() if g is not None)
        s = s[m.end():]
    s = s.strip(_STRIP_CHARS)
    return label, s


def match_answer(extracted: str, choices: list[str], gold: str) -> tuple[bool, Optional[int]]:
    """Match an extracted answer against the choice list.

    Cascade: (1) leading label against choice position, (2) exact
    normalized match, (3) unique substring in either direction, (4) highest
    token-overlap (Jaccard) at or above 0.5, ties to the lowest index. A
    bare single letter is treated as a label only when no choice equals it.
    """
    if not choices:
        raise ValueError("choices must be non-empty")
    if gold not in choices:
        raise ValueError("gold must be one of the choices")
    gold_index = choices.index(gold)

    label, text = _normalize(extracted)
    norm_choices = [_normalize(c)[1] for c in choices]

    def done(index: Optional[int]) -> tuple[bool, Optional[int]]:
        return (index == gold_index, index) if index is not None else (False, None)

    # (1) explicit leading label
    if label is not None:
        index = ord(label) - ord("a")
        if 0 <= index < len(choices):
            return done(index)

    if not text:
        return done(None)

    # (2) exact normalized match
    for i, choice in enumerate(norm_choices):
        if text == choice:
            return done(i)

    # (1b) a bare letter that is not itself a choice reads as a label
    if len(text) == 1 and text.isalpha():
        index = ord(text) - ord("a")
        if 0 <= index < len(choices):
            return done(index)

    # (3) unique substring, either direction
    containing = [i for i, c in enumerate(norm_choices) if c and c in text]
    if len(containing) == 1:
        return done(containing[0])
    contained = [i for i, c in enumerate(norm_choices) if c and text in c]
    if len(contained) == 1:
        return done(contained[0])

    # (4) token overlap
    tokens = set(text.split())
    best_index, best_score = None, 0.0
    for i, choice in enumerate(norm_choices):
        choice_tokens = set(choice.split())
        union = tokens | choice_tokens
        if not union:
            continue
        score = len(tokens & choice_tokens) / len(union)
        if score > best_score:
            best_index, best_score = i, score
    if best_index is not None and best_score >= TOKEN_OVERLAP_THRESHOLD:
        return done(best_index)
    return done(None)


_JUDGE_SYSTEM = (
    "You are a strict grader of answers to audio questions. Reply with exactly "
    "'yes' if the candidate answer matches the reference answer in meaning, "
    "otherwise reply 'no'."
)


def _judge_says_correct(judge: AgentBackend, task: AudioTask, extracted: str, seed: int) -> bool:
    messages = [
        {"role": "system", "content": _JUDGE_SYSTEM},
        {
            "role": "user",
            "content": (
                f"Question: {task.question}\n"
                f"Reference answer: {task.gold}\n"
                f"Candidate answer: {extracted}\n"
                "Does the candidate match the reference? Answer yes or no."
            ),
        },
    ]
    try:
        reply = judge.complete(messages, seed=seed)
    except Exception as exc:  # a grading failure must not sink the item run
        logger.warning("judge failed on %s: %s", task.id, exc)
        return False
    return reply.strip().lower().startswith("yes")


def _score(
    task: AudioTask,
    extracted: Optional[str],
    judge: Optional[AgentBackend] = None,
    seed: int = 0,
) -> tuple[bool, Optional[int]]:
    if extracted is None or task.gold is None:
        return False, None
    if task.choices:
        return match_answer(extracted, task.choices, task.gold)
    # Open-ended: string matcher against the gold alone by default; a judge
    # backend, when supplied, grades instead.
    if judge is not None:
        return _judge_says_correct(judge, task, extracted, seed), None
    correct, _ = match_answer(extracted, [task.gold], task.gold)
    return correct, None


def run_benchmark(
    dataset: Dataset,
    backend: AgentBackend,
    registry: ToolRegistry,
    seeds: list[int],
    parallelism: int = 1,
    *,
    budget: int = 20,
    audio_root: Optional[str | Path] = None,
    judge: Optional[AgentBackend] = None,
) -> BenchmarkReport:
    """Run every item once per seed and aggregate accuracies.

    Item sessions run on a bounded thread pool; results are sorted by
    (seed, task_id) before aggregation so the report is independent of
    execution order. Per-item failures are recorded as incorrect results
    with their outcome, never raised. ``judge``, when given, grades
    open-ended items in place of the string matcher.
    """
    if not seeds:
        raise ValueError("at least one seed is required")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    tasks_by_id = {item.id: item for item in dataset.items}

    def run_one(job: tuple[int, AudioTask]) -> ItemResult:
        seed, task = job
        try:
            trace = run_session(task, backend, registry, budget=budget, seed=seed, audio_root=audio_root)
            extracted = trace.answer
            outcome = trace.outcome.value
            calls = trace.tool_call_count
        except Exception as exc:  # item failures become incorrect results
            logger.warning("session for %s (seed %d) failed: %s", task.id, seed, exc)
            extracted, outcome, calls = None, Outcome.AGENT_ERROR.value, 0
        correct, matched = _score(task, extracted, judge=judge, seed=seed)
        return ItemResult(
            task_id=task.id,
            seed=seed,
            extracted=extracted,
            matched_choice=matched,
            correct=correct,
            tool_call_count=calls,
            outcome=outcome,
        )

    jobs = [(seed, item) for seed in seeds for item in dataset.items]
    if parallelism == 1:
        results = [run_one(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(run_one, jobs))
    results.sort(key=lambda r: (r.seed, r.task_id))

    per_seed = []
    for seed in seeds:
        seed_results = [r for r in results if r.seed == seed]
        accuracy = sum(r.correct for r in seed_results) / len(seed_results) if seed_results else 0.0
        per_seed.append(SeedAccuracy(seed=seed, accuracy=accuracy))
    mean_across_seeds = sum(s.accuracy for s in per_seed) / len(per_seed)

    micro = sum(r.correct for r in results) / len(results) if results else 0.0

    per_category: dict[str, CategoryAccuracy] = {}
    for category in dataset.category_scheme:
        tagged = [r for r in results if category in tasks_by_id[r.task_id].categories]
        accuracy = sum(r.correct for r in tagged) / len(tagged) if tagged else 0.0
        per_category[category] = CategoryAccuracy(n=len(tagged), accuracy=accuracy)
    populated = [c for c in per_category.values() if c.n > 0]
    macro = sum(c.accuracy for c in populated) / len(populated) if populated else 0.0

    return BenchmarkReport(
        per_category=per_category,
        micro_average=micro,
        macro_average=macro,
        per_seed=per_seed,
        mean_across_seeds=mean_across_seeds,
        item_results=results,
    )


REPORT_FILE = "report.json"
SUMMARY_FILE = "summary.csv"
DOTS_FILE = "seeds.csv"


def report_to_dict(report: BenchmarkReport) -> dict:
    return {
        "per_category": {
            name: {"n": c.n, "accuracy": c.accuracy} for name, c in report.per_category.items()
        },
        "micro_average": report.micro_average,
        "macro_average": report.macro_average,
        "per_seed": [{"seed": s.seed, "accuracy": s.accuracy} for s in report.per_seed],
        "mean_across_seeds": report.mean_across_seeds,
        "item_results": [vars(r) for r in report.item_results],
    }


def report_from_dict(raw: dict) -> BenchmarkReport:
    return BenchmarkReport(
        per_category={
            name: CategoryAccuracy(n=c["n"], accuracy=c["accuracy"])
            for name, c in raw["per_category"].items()
        },
        micro_average=raw["micro_average"],
        macro_average=raw["macro_average"],
        per_seed=[SeedAccuracy(seed=s["seed"], accuracy=s["accuracy"]) for s in raw["per_seed"]],
        mean_across_seeds=raw["mean_across_seeds"],
        item_results=[ItemResult(**r) for r in raw["item_results"]],
    )


def load_report(path: str | Path) -> BenchmarkReport:
    return report_from_dict(json.loads(Path(path).read_text()))


def emit_report(report: BenchmarkReport, out_dir: str | Path) -> list[Path]:
    """Write the full report plus the two plot-ready views.

    Files: ``report.json`` (lossless, parses back into an equal
    BenchmarkReport), ``summary.csv`` (one row per category plus a final
    micro-average row), ``seeds.csv`` (per-seed accuracies, the dots of a
    mean-of-runs plot).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    report_path = out / REPORT_FILE
    report_path.write_text(json.dumps(report_to_dict(report), indent=2) + "\n")

    total = len(report.item_results)
    summary_lines = ["category,n,accuracy"]
    for name, stat in report.per_category.items():
        summary_lines.append(f"{name},{stat.n},{stat.accuracy:.4f}")
    summary_lines.append(f"average,{total},{report.micro_average:.4f}")
    summary_path = out / SUMMARY_FILE
    summary_path.write_text("\n".join(summary_lines) + "\n")

    dots_lines = ["seed,accuracy"]
    for s in report.per_seed:
        dots_lines.append(f"{s.seed},{s.accuracy:.6f}")
    dots_path = out / DOTS_FILE
    dots_path.write_text("\n".join(dots_lines) + "\n")

    return [report_path, summary_path, dots_path]
