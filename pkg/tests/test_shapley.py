"""Shapley estimator: frozen restricted example, axioms, memoization
bounds, cache persistence, and oracle agreement."""

from __future__ import annotations

import itertools
import math
import random
import statistics

import pytest

from earshot.shapley import (
    CoalitionEvaluationError,
    EstimatorConfig,
    MemoizedCoalitionValue,
    ShapleyEstimate,
    emit_attribution_plot_data,
    estimate_shapley,
    exact_shapley,
    load_synthetic_game,
)

# The restricted three-tool game: only pair-or-larger coalitions carry values.
THREE_TOOL_VALUES = {
    frozenset("AB"): 0.6,
    frozenset("AC"): 0.7,
    frozenset("BC"): 0.5,
    frozenset("ABC"): 0.8,
}


def three_tool_v(coalition: frozenset[str]) -> float:
    return THREE_TOOL_VALUES[frozenset(coalition)]


def oracle_shapley(tools, v, min_predecessor_size):
    """Independent reference: direct permutation enumeration over name sets."""
    contributions = {t: [] for t in tools}
    for perm in itertools.permutations(tools):
        seen: set = set()
        for tool in perm:
            if len(seen) >= min_predecessor_size:
                delta = v(frozenset(seen | {tool})) - v(frozenset(seen))
                contributions[tool].append(delta)
            seen.add(tool)
    return {t: statistics.fmean(vals) for t, vals in contributions.items() if vals}


def by_name(estimates: list[ShapleyEstimate]) -> dict[str, ShapleyEstimate]:
    return {e.tool_name: e for e in estimates}


def test_restricted_three_tool_example_exact():
    expected = {"A": 0.30, "B": 0.10, "C": 0.20}
    oracle = oracle_shapley(["A", "B", "C"], three_tool_v, 2)
    for name, value in expected.items():
        assert oracle[name] == pytest.approx(value, abs=1e-12)

    estimates = by_name(exact_shapley(["A", "B", "C"], three_tool_v, min_predecessor_size=2))
    for name, value in expected.items():
        assert estimates[name].value == pytest.approx(value, abs=1e-12)
        # Each tool's qualifying marginal is the constant v(N) - v(N\{i}).
        assert estimates[name].std_error == 0.0
        assert estimates[name].n_samples == 2


def test_restricted_three_tool_example_sampled():
    cfg = EstimatorConfig(n_permutations=50, min_predecessor_size=2, seed=11)
    estimates = by_name(estimate_shapley(["A", "B", "C"], three_tool_v, cfg))
    for name, value in {"A": 0.30, "B": 0.10, "C": 0.20}.items():
        assert estimates[name].value == pytest.approx(value, abs=1e-12)


def test_symmetry_axiom():
    values = {frozenset(): 0.0, frozenset("A"): 0.4, frozenset("B"): 0.4, frozenset("AB"): 0.6}
    estimates = by_name(exact_shapley(["A", "B"], lambda c: values[frozenset(c)], min_predecessor_size=0))
    assert estimates["A"].value == pytest.approx(0.3, abs=1e-12)
    assert estimates["B"].value == pytest.approx(0.3, abs=1e-12)
    assert estimates["A"].value == estimates["B"].value


def test_dummy_player_axiom():
    base = {frozenset(): 0.1, frozenset("A"): 0.5, frozenset("B"): 0.3, frozenset("AB"): 0.6}

    def v(coalition: frozenset[str]) -> float:
        return base[frozenset(coalition) - {"D"}]

    estimates = by_name(exact_shapley(["A", "B", "D"], v, min_predecessor_size=0))
    assert estimates["D"].value == 0.0
    assert estimates["D"].std_error == 0.0


def test_efficiency_axiom_on_random_games():
    rng = random.Random(2024)
    for n in (3, 4, 5):
        tools = [f"t{i}" for i in range(n)]
        table = {
            frozenset(c): rng.random()
            for k in range(n + 1)
            for c in itertools.combinations(tools, k)
        }
        estimates = exact_shapley(tools, lambda c: table[frozenset(c)], min_predecessor_size=0)
        total = math.fsum(e.value for e in estimates)
        grand = table[frozenset(tools)] - table[frozenset()]
        assert abs(total - grand) <= n * 1e-12


def test_label_invariance():
    one = by_name(exact_shapley(["A", "B", "C"], three_tool_v, min_predecessor_size=2))
    two = by_name(exact_shapley(["C", "A", "B"], three_tool_v, min_predecessor_size=2))
    assert {n: e.value for n, e in one.items()} == {n: e.value for n, e in two.items()}


def test_negative_values_not_clamped():
    values = {
        frozenset(): 0.0,
        frozenset("A"): 0.5,
        frozenset("B"): 0.0,
        frozenset("AB"): 0.3,  # B hurts
    }
    estimates = by_name(exact_shapley(["A", "B"], lambda c: values[frozenset(c)], min_predecessor_size=0))
    assert estimates["B"].value < 0


class CountingValue:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0
        self.seen: list[frozenset] = []

    def __call__(self, coalition):
        self.calls += 1
        self.seen.append(frozenset(coalition))
        return self.fn(coalition)


def test_memoization_bound_five_tools():
    tools = [f"t{i}" for i in range(5)]
    counting = CountingValue(lambda c: len(c) / 5)
    cfg = EstimatorConfig(n_permutations=500, min_predecessor_size=0, seed=3)
    estimate_shapley(tools, counting, cfg)
    assert counting.calls <= 2**5
    assert len(counting.seen) == len(set(counting.seen))  # once per distinct coalition


def test_memoization_respects_restriction():
    # With predecessor >= 2, singleton and empty coalitions are never evaluated.
    counting = CountingValue(three_tool_v)
    cfg = EstimatorConfig(n_permutations=200, min_predecessor_size=2, seed=5)
    estimate_shapley(["A", "B", "C"], counting, cfg)
    assert all(len(c) >= 2 for c in counting.seen)
    assert counting.calls <= 4


def test_cache_persistence_resumes_without_reevaluation(tmp_path):
    cache = tmp_path / "coalitions.jsonl"
    counting = CountingValue(three_tool_v)
    first = MemoizedCoalitionValue(counting, cache)
    cfg = EstimatorConfig(n_permutations=30, min_predecessor_size=2, seed=1, cache_path=cache)
    before = estimate_shapley(["A", "B", "C"], first, cfg)
    assert counting.calls == 4
    assert first.evaluations == 4

    # Fresh process simulation: new memo over the same cache file.
    counting2 = CountingValue(three_tool_v)
    second = MemoizedCoalitionValue(counting2, cache)
    after = estimate_shapley(["A", "B", "C"], second, cfg)
    assert counting2.calls == 0
    assert second.evaluations == 0
    assert [(e.tool_name, e.value) for e in before] == [(e.tool_name, e.value) for e in after]


def test_concurrent_requests_share_one_evaluation():
    import threading
    import time

    started = threading.Event()

    def slow_v(coalition):
        started.set()
        time.sleep(0.05)
        return 0.5

    memo = MemoizedCoalitionValue(slow_v)
    results = []

    def ask():
        results.append(memo(frozenset({"A", "B"})))

    threads = [threading.Thread(target=ask) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == [0.5] * 8
    assert memo.evaluations == 1  # latecomers blocked on the first evaluation


def test_evaluation_failure_identifies_coalition():
    def broken(coalition):
        if frozenset(coalition) == frozenset("AC"):
            raise RuntimeError("benchmark crashed")
        return three_tool_v(coalition)

    with pytest.raises(CoalitionEvaluationError) as err:
        exact_shapley(["A", "B", "C"], broken, min_predecessor_size=2)
    assert err.value.coalition == frozenset("AC")
    assert "['A', 'C']" in str(err.value)


def test_input_validation():
    with pytest.raises(ValueError):
        estimate_shapley(["only"], three_tool_v, EstimatorConfig(n_permutations=1))
    with pytest.raises(ValueError):
        estimate_shapley(["a", "a", "b"], three_tool_v, EstimatorConfig(n_permutations=1))
    with pytest.raises(ValueError):
        estimate_shapley(["a", "b"], three_tool_v, EstimatorConfig(n_permutations=1, min_predecessor_size=2))
    with pytest.raises(ValueError):
        EstimatorConfig(n_permutations=0)
    with pytest.raises(ValueError):
        exact_shapley([f"t{i}" for i in range(11)], three_tool_v, 0)


def test_estimator_is_seed_deterministic():
    tools = [f"t{i}" for i in range(5)]
    cfg = EstimatorConfig(n_permutations=40, min_predecessor_size=0, seed=9)  # 40 < 5!: sampling path
    v = lambda c: sum(0.2 for name in c if name != "t1")  # noqa: E731
    one = estimate_shapley(tools, v, cfg)
    two = estimate_shapley(tools, v, cfg)
    assert one == two
    other_seed = estimate_shapley(tools, v, EstimatorConfig(n_permutations=40, min_predecessor_size=0, seed=10))
    assert [e.n_samples for e in other_seed] != [e.n_samples for e in one] or other_seed != one


def test_exhaustive_mode_coincides_with_exact():
    # n_permutations >= n! switches to full enumeration, so the sampled path
    # reproduces the oracle identically.
    sampled = estimate_shapley(["A", "B", "C"], three_tool_v, EstimatorConfig(n_permutations=6, seed=0))
    assert sampled == exact_shapley(["A", "B", "C"], three_tool_v, min_predecessor_size=2)


def test_monte_carlo_path_matches_exact_within_three_sigma():
    # Seven tools, 2000 < 7! permutations: the genuine sampling path.
    rng = random.Random(123)
    tools = [f"t{i}" for i in range(7)]
    table = {
        frozenset(c): rng.random()
        for k in range(8)
        for c in itertools.combinations(tools, k)
    }
    v = lambda c: table[frozenset(c)]  # noqa: E731
    exact = by_name(exact_shapley(tools, v, min_predecessor_size=2))
    cfg = EstimatorConfig(n_permutations=2000, min_predecessor_size=2, seed=5)
    sampled = by_name(estimate_shapley(tools, v, cfg))
    hits = sum(
        abs(sampled[name].value - exact[name].value) <= 3 * sampled[name].std_error
        for name in tools
    )
    assert hits >= 6  # 3-sigma coverage leaves room for at most one excursion
    for name in tools:
        assert sampled[name].std_error > 0
        assert sampled[name].n_samples >= 1


def test_sampled_matches_exact_within_three_sigma():
    rng = random.Random(77)
    checked = hits = 0
    for _ in range(10):
        n = rng.choice([3, 4, 5])
        tools = [f"t{i}" for i in range(n)]
        table = {
            frozenset(c): rng.random()
            for k in range(n + 1)
            for c in itertools.combinations(tools, k)
        }
        v = lambda c, table=table: table[frozenset(c)]
        exact = by_name(exact_shapley(tools, v, min_predecessor_size=2))
        cfg = EstimatorConfig(n_permutations=3000, min_predecessor_size=2, seed=rng.randrange(10**6))
        sampled = by_name(estimate_shapley(tools, v, cfg))
        for name in tools:
            checked += 1
            margin = 3 * sampled[name].std_error
            if abs(sampled[name].value - exact[name].value) <= max(margin, 1e-12):
                hits += 1
    assert hits / checked >= 0.95


def test_std_error_matches_definition():
    values = {
        frozenset(): 0.0,
        frozenset("A"): 0.1,
        frozenset("B"): 0.5,
        frozenset("AB"): 0.9,
    }
    estimates = by_name(exact_shapley(["A", "B"], lambda c: values[frozenset(c)], min_predecessor_size=0))
    # A's qualifying marginals over the two permutations: 0.1 and 0.4.
    deltas = [0.1, 0.4]
    mean = sum(deltas) / 2
    population_std = math.sqrt(sum((d - mean) ** 2 for d in deltas) / 2)
    assert estimates["A"].value == pytest.approx(mean, abs=1e-12)
    assert estimates["A"].std_error == pytest.approx(population_std / math.sqrt(2), abs=1e-12)
    assert estimates["A"].n_samples == 2


def test_plot_data_sorted_ascending(tmp_path):
    estimates = [
        ShapleyEstimate("qwen_omni", 0.098016, 0.026723, 120),
        ShapleyEstimate("audio_flamingo3", 0.092903, 0.022510, 120),
        ShapleyEstimate("tavily", -0.018462, 0.012952, 120),
    ]
    csv_path, svg_path = emit_attribution_plot_data(estimates, tmp_path / "attribution.csv")
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "tool,value,std_error,n_samples"
    names = [line.split(",")[0] for line in lines[1:]]
    assert names == ["tavily", "audio_flamingo3", "qwen_omni"]
    assert lines[1].startswith("tavily,-0.018462")
    svg = svg_path.read_text()
    assert svg.startswith("<svg") and "qwen_omni" in svg


def test_plot_data_tie_break_and_single(tmp_path):
    pair = [ShapleyEstimate("zeta", 0.1, 0.0, 1), ShapleyEstimate("alpha", 0.1, 0.0, 1)]
    csv_path, _ = emit_attribution_plot_data(pair, tmp_path / "tie.csv")
    names = [line.split(",")[0] for line in csv_path.read_text().strip().splitlines()[1:]]
    assert names == ["alpha", "zeta"]
    single_path, _ = emit_attribution_plot_data([pair[0]], tmp_path / "single.csv")
    assert len(single_path.read_text().strip().splitlines()) == 2
    with pytest.raises(ValueError):
        emit_attribution_plot_data([], tmp_path / "none.csv")


def test_synthetic_game_file(tmp_path):
    game = tmp_path / "game.yaml"
    game.write_text(
        "tools: [A, B, C]\n"
        "values:\n"
        '  "A,B": 0.6\n'
        '  "A,C": 0.7\n'
        '  "B,C": 0.5\n'
        '  "A,B,C": 0.8\n'
    )
    tools, v = load_synthetic_game(game)
    assert tools == ["A", "B", "C"]
    estimates = by_name(exact_shapley(tools, v, min_predecessor_size=2))
    assert estimates["A"].value == pytest.approx(0.30, abs=1e-12)
    with pytest.raises(CoalitionEvaluationError):
        exact_shapley(tools, v, min_predecessor_size=0)  # singleton values undeclared
