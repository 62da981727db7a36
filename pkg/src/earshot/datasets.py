"""Converters from the public audio benchmarks' native layouts into the
line-delimited dataset schema.

The three supported styles (``mmau``, ``mmar``, ``mmau_pro``) publish JSON
with slightly different field names; these mappings are tolerant to the
common variants and produce records with ``id``, ``audio``, ``question``,
``choices``, ``answer``, ``categories``. Combined-modality categories
(e.g. "Sound-Music") stay single tags, lowercased, matching the benchmark
tables' column structure.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

STYLES = ("mmau", "mmar", "mmau_pro")

_AUDIO_KEYS = ("audio", "audio_path", "audio_paths", "audio_id", "audio_ids", "path", "audio_files")
_ID_KEYS = ("id", "uid", "question_id", "qid")
_QUESTION_KEYS = ("question", "question_text", "instruction")
_CHOICE_KEYS = ("choices", "options")
_ANSWER_KEYS = ("answer", "correct_answer", "gold", "label")
_CATEGORY_KEYS = {
    "mmau": ("task", "category", "domain"),
    "mmar": ("category", "modality", "task"),
    "mmau_pro": ("category", "task", "task_name", "skill"),
}


class ConversionError(Exception):
    pass


def _first(raw: dict, keys: tuple[str, ...]) -> Optional[Any]:
    for key in keys:
        if key in raw and raw[key] not in (None, ""):
            return raw[key]
    return None


def convert_record(style: str, raw: dict, index: int) -> dict:
    if style not in STYLES:
        raise ConversionError(f"unknown style {style!r}; expected one of {STYLES}")
    if not isinstance(raw, dict):
        raise ConversionError(f"record {index} is not an object")

    audio = _first(raw, _AUDIO_KEYS)
    if audio is None:
        raise ConversionError(f"record {index} has no audio field (tried {_AUDIO_KEYS})")
    audio_refs = [str(a) for a in audio] if isinstance(audio, list) else [str(audio)]

    question = _first(raw, _QUESTION_KEYS)
    if question is None:
        raise ConversionError(f"record {index} has no question field")

    record: dict[str, Any] = {
        "id": str(_first(raw, _ID_KEYS) or f"{style}-{index:05d}"),
        "audio": audio_refs if len(audio_refs) > 1 else audio_refs[0],
        "question": str(question),
    }

    choices = _first(raw, _CHOICE_KEYS)
    if isinstance(choices, list) and len(choices) >= 2:
        record["choices"] = [str(c) for c in choices]
    answer = _first(raw, _ANSWER_KEYS)
    if answer is not None:
        record["answer"] = str(answer)

    category = _first(raw, _CATEGORY_KEYS[style])
    categories = []
    if isinstance(category, list):
        categories = [str(c).strip().lower() for c in category]
    elif category is not None:
        categories = [str(category).strip().lower()]
    record["categories"] = categories
    return record


def _read_native(path: Path) -> list[dict]:
    text = path.read_text()
    stripped = text.lstrip()
    if stripped.startswith("["):
        data = json.loads(text)
        if not isinstance(data, list):
            raise ConversionError(f"{path}: expected a JSON array")
        return data
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except ValueError as exc:
            raise ConversionError(f"{path}:{lineno}: {exc}") from None
    return records


def convert_file(in_path: str | Path, style: str, out_path: str | Path) -> int:
    """Convert a native benchmark file (JSON array or JSONL) to the dataset
    schema. Returns the number of records written."""
    records = _read_native(Path(in_path))
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w") as fh:
        for index, raw in enumerate(records):
            fh.write(json.dumps(convert_record(style, raw, index)) + "\n")
    return len(records)
