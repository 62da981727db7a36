"""Dataset loading, subsampling, the matching cascade, benchmark
aggregation, and report round-trips."""

from __future__ import annotations

import json
import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from earshot.adapters import ToolRegistry
from earshot.backends import ScriptRule, ScriptedBackend
from earshot.bench import (
    BenchmarkReport,
    DatasetError,
    emit_report,
    load_dataset,
    load_report,
    match_answer,
    run_benchmark,
    subsample,
)
from earshot.config import load_config

from conftest import CHOICES, make_mock_benchmark


def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + ("\n" if records else ""))
    return path


def simple_record(i, categories=("sound",), audio=None):
    return {
        "id": f"q{i:04d}",
        "audio": audio or f"clips/q{i:04d}.wav",
        "question": f"What is in clip {i}?",
        "choices": CHOICES,
        "answer": CHOICES[i % 4],
        "categories": list(categories),
    }


def test_load_thousand_item_dataset(tmp_path):
    cats = ["sound", "music", "speech"]
    records = [simple_record(i, categories=[cats[i % 3]]) for i in range(1000)]
    dataset = load_dataset(write_jsonl(tmp_path / "d.jsonl", records))
    assert len(dataset.items) == 1000
    assert dataset.category_scheme == ["music", "sound", "speech"]
    assert dataset.items[0].gold == CHOICES[0]


def test_load_large_dataset_with_one_broken_audio(tmp_path):
    # 5,304 instances; every item shares one real audio file except one item
    # whose file does not exist, which must load but be flagged.
    audio_dir = tmp_path / "audio"
    audio_dir.mkdir()
    (audio_dir / "shared.wav").write_bytes(b"RIFF")
    tags = [f"cat{i:02d}" for i in range(12)]
    records = []
    for i in range(5304):
        audio = "missing.wav" if i == 1234 else "shared.wav"
        records.append(simple_record(i, categories=[tags[i % 12]], audio=audio))
    dataset = load_dataset(write_jsonl(tmp_path / "big.jsonl", records), audio_root=audio_dir)
    assert len(dataset.items) == 5304
    assert len(dataset.category_scheme) == 12
    assert dataset.missing_audio == ["q1234"]


def test_empty_dataset_warns(tmp_path, caplog):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with caplog.at_level(logging.WARNING):
        dataset = load_dataset(path)
    assert dataset.items == []
    assert any("empty" in r.message for r in caplog.records)


def test_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(simple_record(0)) + "\n{not json\n")
    with pytest.raises(DatasetError) as err:
        load_dataset(path)
    assert ":2:" in str(err.value)


def test_duplicate_id_rejected(tmp_path):
    records = [simple_record(1), simple_record(1)]
    with pytest.raises(DatasetError) as err:
        load_dataset(write_jsonl(tmp_path / "dup.jsonl", records))
    assert "duplicate" in str(err.value)


def test_subsample_hundred_of_thousand(tmp_path):
    records = [simple_record(i) for i in range(1000)]
    dataset = load_dataset(write_jsonl(tmp_path / "d.jsonl", records))
    sample = subsample(dataset, 0.10, seed=0)
    assert len(sample.items) == 100
    again = subsample(dataset, 0.10, seed=0)
    assert [t.id for t in sample.items] == [t.id for t in again.items]
    other = subsample(dataset, 0.10, seed=1)
    assert [t.id for t in sample.items] != [t.id for t in other.items]


def test_subsample_identity_and_order(tmp_path):
    records = [simple_record(i) for i in range(10)]
    dataset = load_dataset(write_jsonl(tmp_path / "d.jsonl", records))
    full = subsample(dataset, 1.0, seed=99)
    assert [t.id for t in full.items] == [t.id for t in dataset.items]
    partial = subsample(dataset, 0.5, seed=3)
    ids = [t.id for t in partial.items]
    assert ids == sorted(ids)  # original order restored


def test_subsample_is_platform_stable(tmp_path):
    # Frozen expectation documents the PRNG contract (MT19937 Fisher-Yates).
    records = [simple_record(i) for i in range(10)]
    dataset = load_dataset(write_jsonl(tmp_path / "d.jsonl", records))
    # Derived by replaying the documented algorithm by hand:
    # Random(42) partial Fisher-Yates over range(10) picks {0, 1, 6}.
    sample = subsample(dataset, 0.3, seed=42)
    assert [t.id for t in sample.items] == ["q0000", "q0001", "q0006"]


def test_subsample_fraction_bounds(tmp_path):
    dataset = load_dataset(write_jsonl(tmp_path / "d.jsonl", [simple_record(0)]))
    for bad in (0, -0.5, 1.5):
        with pytest.raises(ValueError):
            subsample(dataset, bad, seed=0)


# --- matcher ---

RAIN_CHOICES = ["thunder", "rain", "wind"]


def test_match_label_and_text():
    assert match_answer("(b) rain", RAIN_CHOICES, "rain") == (True, 1)


def test_match_unique_substring():
    # Cascade trace: no label; no exact match; 'rain' is the only choice
    # contained in the text, so stage three fires.
    assert match_answer("the sound is rain falling", RAIN_CHOICES, "rain") == (True, 1)


def test_match_nothing():
    # 'storm' matches no stage: no label, no exact, no substring either
    # direction, token overlap 0 < 0.5.
    assert match_answer("storm", RAIN_CHOICES, "rain") == (False, None)


@pytest.mark.parametrize(
    "extracted, expected_index",
    [
        ("(a)", 0),
        ("b)", 1),
        ("c.", 2),
        ("B", 1),
        ("  Rain  ", 1),
        ('"rain."', 1),
        ("(b) rain", 1),
        ("(c) rain", 2),  # label wins over conflicting text
    ],
)
def test_match_forms(extracted, expected_index):
    correct, index = match_answer(extracted, RAIN_CHOICES, "rain")
    assert index == expected_index
    assert correct is (expected_index == 1)


def test_bare_letter_prefers_exact_choice():
    assert match_answer("a", ["rain", "a"], "a") == (True, 1)


def test_label_out_of_range_falls_through():
    assert match_answer("(z) rain", RAIN_CHOICES, "rain") == (True, 1)


def test_token_overlap_stage():
    choices = ["heavy rain falling", "strong wind blowing"]
    correct, index = match_answer("rain heavy falling", choices, "heavy rain falling")
    assert (correct, index) == (True, 0)


def test_matcher_requires_valid_inputs():
    with pytest.raises(ValueError):
        match_answer("x", [], "x")
    with pytest.raises(ValueError):
        match_answer("x", ["a", "b"], "c")


@given(
    choice_words=st.lists(
        st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=3, max_size=10),
        min_size=2,
        max_size=6,
        unique=True,
    ),
    gold_pick=st.integers(min_value=0, max_value=5),
)
@settings(max_examples=200)
def test_gold_always_matches_itself(choice_words, gold_pick):
    gold = choice_words[gold_pick % len(choice_words)]
    correct, index = match_answer(gold, choice_words, gold)
    assert correct is True
    assert index == choice_words.index(gold)


@given(flags=st.lists(st.booleans(), min_size=1, max_size=30))
@settings(max_examples=100)
def test_adding_correct_result_never_decreases_micro(flags):
    micro = sum(flags) / len(flags)
    extended = flags + [True]
    assert sum(extended) / len(extended) >= micro


# --- benchmark runs ---


@pytest.fixture
def mock_setup(tmp_path):
    paths = make_mock_benchmark(tmp_path / "bench")
    config = load_config(paths["config"])
    dataset = load_dataset(paths["dataset"])
    return config, dataset


def test_seventeen_of_twenty(mock_setup):
    config, dataset = mock_setup
    report = run_benchmark(dataset, config.backend, config.registry, seeds=[1])
    assert report.micro_average == pytest.approx(0.85)
    assert report.micro_average * len(report.item_results) == 17
    assert all(r.tool_call_count == 1 for r in report.item_results)


def test_five_seeds_identical_under_determinism(mock_setup):
    config, dataset = mock_setup
    report = run_benchmark(dataset, config.backend, config.registry, seeds=[1, 2, 3, 4, 5])
    accuracies = [s.accuracy for s in report.per_seed]
    assert accuracies == [0.85] * 5
    assert report.mean_across_seeds == pytest.approx(0.85)
    assert report.micro_average == pytest.approx(0.85)


def test_parallelism_does_not_change_report(mock_setup):
    config, dataset = mock_setup
    serial = run_benchmark(dataset, config.backend, config.registry, seeds=[1, 2], parallelism=1)
    parallel = run_benchmark(dataset, config.backend, config.registry, seeds=[1, 2], parallelism=8)
    assert serial == parallel


def test_empty_seed_list_rejected(mock_setup):
    config, dataset = mock_setup
    with pytest.raises(ValueError):
        run_benchmark(dataset, config.backend, config.registry, seeds=[])


def test_seed_dependent_outcomes(tmp_path):
    # Golds cycle rain,thunder,wind,birds over 4 items; each seed answers one
    # fixed choice, so per-seed accuracy is 0.25 except birds-answering seeds.
    paths = make_mock_benchmark(
        tmp_path / "seeded",
        n_items=4,
        n_correct=4,
        seed_answers={1: "rain", 2: "rain", 3: "thunder", 4: "nonsense", 5: "rain"},
    )
    config = load_config(paths["config"])
    dataset = load_dataset(paths["dataset"])
    report = run_benchmark(dataset, config.backend, config.registry, seeds=[1, 2, 3, 4, 5])
    assert [s.accuracy for s in report.per_seed] == [0.25, 0.25, 0.25, 0.0, 0.25]
    assert report.mean_across_seeds == pytest.approx(0.2)


def test_unanswerable_items_count_incorrect(tmp_path):
    paths = make_mock_benchmark(tmp_path / "quiet", n_items=4, n_correct=4)
    config = load_config(paths["config"])
    dataset = load_dataset(paths["dataset"])
    silent = ScriptedBackend([ScriptRule(text="thinking...")])  # idles into agent_error
    report = run_benchmark(dataset, silent, config.registry, seeds=[1])
    assert report.micro_average == 0.0
    assert all(r.outcome == "agent_error" for r in report.item_results)


def test_per_category_counts(mock_setup):
    config, dataset = mock_setup
    report = run_benchmark(dataset, config.backend, config.registry, seeds=[1])
    assert set(report.per_category) == {"sound", "music", "speech"}
    assert sum(c.n for c in report.per_category.values()) >= len(dataset.items)
    for stat in report.per_category.values():
        assert 0.0 <= stat.accuracy <= 1.0


def test_emit_report_files_and_round_trip(mock_setup, tmp_path):
    config, dataset = mock_setup
    report = run_benchmark(dataset, config.backend, config.registry, seeds=[1, 2, 3, 4, 5])
    out = tmp_path / "out"
    paths = emit_report(report, out)
    assert [p.name for p in paths] == ["report.json", "summary.csv", "seeds.csv"]

    summary = (out / "summary.csv").read_text().strip().splitlines()
    assert summary[0] == "category,n,accuracy"
    assert len(summary) == 1 + 3 + 1  # header, three categories, average
    assert summary[-1].startswith("average,")
    assert summary[-1].endswith("0.8500")

    dots = (out / "seeds.csv").read_text().strip().splitlines()
    assert len(dots) == 6
    assert dots[1].startswith("1,")

    assert load_report(out / "report.json") == report


def test_emit_empty_report(tmp_path):
    empty = BenchmarkReport(
        per_category={},
        micro_average=0.0,
        macro_average=0.0,
        per_seed=[],
        mean_across_seeds=0.0,
        item_results=[],
    )
    out = tmp_path / "empty"
    emit_report(empty, out)
    assert (out / "summary.csv").read_text().splitlines()[0] == "category,n,accuracy"
    assert (out / "seeds.csv").read_text().splitlines() == ["seed,accuracy"]
    assert load_report(out / "report.json") == empty
