"""
evaluation模块测试 - 胜率、Bradley-Terry、TOPSIS、锦标赛与有效率
"""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from evaluation import (
    AllTiesError,
    BracketError,
    DegenerateColumnError,
    DisconnectedGraphError,
    EvaluationError,
    MatchRecord,
    NotEnoughDataError,
    Outcome,
    PairwiseJudge,
    TopsisRow,
    fit_bradley_terry,
    formalize_for_validity,
    judge_items,
    log_likelihood,
    read_match_log,
    read_topsis_rows,
    run_league,
    run_tournament,
    topsis,
    validity_rate,
    winning_rate,
    winning_rates_by,
    write_match_log,
)
from llm_client import ScriptedBackend
from reconstruction import ArgumentInput
from response_parser import parse_formalization, parse_reconstruction
from conftest import FIXTURES, RAIN_FORMALIZATION, RAIN_RECONSTRUCTION

ITEMS = [f"item{i:02d}" for i in range(20)]


def records(a, b, a_wins, b_wins, ties=0):
    outcomes = [Outcome.A_WINS] * a_wins + [Outcome.B_WINS] * b_wins + [Outcome.TIE] * ties
    return [MatchRecord(f"i{n}", a, b, o) for n, o in enumerate(outcomes)]


def scripted_judge(results):
    """
    results maps frozenset({a, b}) -> (winner, wins, losses): the winner takes
    the first `wins` items, the loser the next `losses`, the rest are ties.
    """
    def judge(item_id, a, b):
        winner, wins, losses = results[frozenset((a, b))]
        n = ITEMS.index(item_id)
        if n < wins:
            return Outcome.A_WINS if winner == a else Outcome.B_WINS
        if n < wins + losses:
            return Outcome.B_WINS if winner == a else Outcome.A_WINS
        return Outcome.TIE
    return judge


# ============================================================================
# 胜率
# ============================================================================

def test_winning_rate_ignores_ties():
    log = records("gaar", "base", 14, 1, ties=5)
    assert winning_rate(log, "gaar", "base") == pytest.approx(93.33, abs=0.01)
    assert winning_rate(log, "base", "gaar") == pytest.approx(6.67, abs=0.01)


def test_winning_rate_even():
    assert winning_rate(records("a", "b", 4, 4, ties=12), "a", "b") == 50.0


def test_all_ties():
    with pytest.raises(AllTiesError):
        winning_rate(records("a", "b", 0, 0, ties=3), "a", "b")


def test_winning_rates_by_group():
    log = records("a", "b", 2, 1) + [MatchRecord("t", "a", "b", Outcome.TIE)]
    groups = {"i0": "formal", "i1": "formal", "i2": "informal", "t": "none"}
    assert winning_rates_by(log, "a", "b", groups) == {"formal": 100.0, "informal": 0.0, "none": None}


def test_match_record_validation():
    with pytest.raises(ValueError):
        MatchRecord("i", "a", "a", Outcome.TIE)
    with pytest.raises(ValueError):
        MatchRecord("i", "a", "b", "Draw")


def test_match_log_roundtrip(tmp_path):
    log = records("a", "b", 2, 1, ties=1)
    path = tmp_path / "matches.jsonl"
    assert write_match_log(log, path) == 4
    assert read_match_log(path) == log

    path.write_text('{"item_id": "x", "side_a": "a", "side_b": "b", "outcome": "Maybe"}\n', encoding="utf-8")
    with pytest.raises(EvaluationError, match=":1:"):
        read_match_log(path)


# ============================================================================
# Bradley-Terry
# ============================================================================

def test_symmetric_results_rate_equal():
    table = fit_bradley_terry(records("a", "b", 3, 3))
    assert (table.ratings["a"], table.ratings["b"]) == (1000.0, 1000.0)
    assert not table.regularized


@st.composite
def two_way_logs(draw):
    """Every pair has at least one win each way, so no pseudo-count is needed."""
    methods = ["a", "b", "c", "d"][:draw(st.integers(2, 4))]
    log = []
    for i, x in enumerate(methods):
        for y in methods[i + 1:]:
            log += records(x, y, draw(st.integers(1, 5)), draw(st.integers(1, 5)))
    winner, loser = draw(st.permutations(methods))[:2]
    return log, winner, loser


@given(two_way_logs())
@settings(max_examples=200, deadline=None)
def test_one_more_win_raises_the_winner(case):
    log, winner, loser = case
    before = fit_bradley_terry(log)
    after = fit_bradley_terry(log + [MatchRecord("extra", winner, loser, Outcome.A_WINS)])
    assert not before.regularized and not after.regularized
    assert after.ratings[winner] > before.ratings[winner] + 1e-9
    assert after.ratings[loser] < before.ratings[loser] - 1e-9


def test_two_methods_elo_scale():
    table = fit_bradley_terry(records("a", "b", 3, 1))
    gap = 400 * math.log10(3)
    assert table.ratings["a"] == pytest.approx(1000 + gap / 2, abs=1e-6)
    assert table.ratings["b"] == pytest.approx(1000 - gap / 2, abs=1e-6)
    assert table.strengths["a"] / table.strengths["b"] == pytest.approx(3.0)


THREE_WAY = records("a", "b", 3, 1) + records("b", "c", 2, 1) + records("a", "c", 2, 1)


def test_three_methods_satisfy_likelihood_equations():
    table = fit_bradley_terry(THREE_WAY)
    s = table.strengths
    wins = {("a", "b"): 3, ("b", "a"): 1, ("b", "c"): 2, ("c", "b"): 1, ("a", "c"): 2, ("c", "a"): 1}
    for i in "abc":
        observed = sum(w for (x, _), w in wins.items() if x == i)
        expected = sum(
            (wins.get((i, j), 0) + wins.get((j, i), 0)) * s[i] / (s[i] + s[j])
            for j in "abc" if j != i
        )
        assert observed == pytest.approx(expected, rel=1e-6)


def test_three_methods_maximize_likelihood():
    table = fit_bradley_terry(THREE_WAY)
    methods = ["a", "b", "c"]
    wins = np.array([[0, 3, 2], [1, 0, 2], [1, 1, 0]], dtype=float)
    fitted = np.array([table.strengths[m] for m in methods])
    best = log_likelihood(wins, fitted)
    for factor in (0.8, 0.95, 1.05, 1.25):
        for k in range(3):
            perturbed = fitted.copy()
            perturbed[k] *= factor
            assert log_likelihood(wins, perturbed) <= best + 1e-12


def test_ranking_follows_results():
    table = fit_bradley_terry(THREE_WAY)
    assert [m for m, _ in table.ranked()] == ["a", "b", "c"]
    assert sum(table.ratings.values()) / 3 == pytest.approx(1000.0)


def test_undefeated_method_is_regularized():
    table = fit_bradley_terry(records("a", "b", 2, 0))
    assert table.regularized
    # 2.5 wins against 0.5 after the pseudo-count
    assert table.ratings["a"] - table.ratings["b"] == pytest.approx(400 * math.log10(5), abs=1e-6)


def test_ties_keep_the_graph_connected():
    table = fit_bradley_terry(records("a", "b", 0, 0, ties=2) + records("b", "c", 1, 1))
    assert set(table.ratings) == {"a", "b", "c"}


def test_disconnected_graph():
    with pytest.raises(DisconnectedGraphError):
        fit_bradley_terry(records("a", "b", 1, 1) + records("c", "d", 1, 1))


def test_no_records():
    with pytest.raises(NotEnoughDataError):
        fit_bradley_terry([])


# ============================================================================
# TOPSIS
# ============================================================================

def test_topsis_cost_quality_table():
    scores = topsis(read_topsis_rows(FIXTURES / "model_costs.csv"))
    expected = {
        "GPT-5.2 (xhigh)": 50.00,
        "GPT-5.1 (high)": 53.92,
        "GPT-5 (high)": 45.52,
        "Claude Sonnet 4.5 (no-think)": 58.01,
        "Gemini 3 Flash (high)": 50.00,
    }
    assert scores == pytest.approx(expected, abs=0.01)
    assert max(scores, key=scores.get) == "Claude Sonnet 4.5 (no-think)"


def test_topsis_dominance():
    scores = topsis([TopsisRow("best", 0.1, 1100), TopsisRow("mid", 0.5, 1000), TopsisRow("worst", 0.9, 900)])
    assert scores["best"] == pytest.approx(100.0)
    assert scores["worst"] == pytest.approx(0.0)
    assert scores["mid"] == pytest.approx(50.0)


def test_topsis_degenerate_column():
    with pytest.raises(DegenerateColumnError):
        topsis([TopsisRow("a", 0.2, 900), TopsisRow("b", 0.2, 1000)])


def test_topsis_needs_two_rows():
    with pytest.raises(NotEnoughDataError):
        topsis([TopsisRow("a", 0.2, 900)])


def test_topsis_rejects_negative_cost():
    with pytest.raises(ValueError):
        TopsisRow("a", -0.1, 900)


ROWS = st.lists(
    st.tuples(st.floats(0.01, 5.0), st.floats(500.0, 1500.0)),
    min_size=2, max_size=6,
)


@settings(max_examples=100, deadline=None)
@given(ROWS, st.floats(0.5, 4.0), st.floats(-300.0, 300.0))
def test_topsis_invariant_to_order_and_affine_rescaling(values, factor, shift):
    costs = [c for c, _ in values]
    qualities = [q for _, q in values]
    assume(max(costs) - min(costs) > 1e-3 and max(qualities) - min(qualities) > 1e-3)
    rows = [TopsisRow(f"m{i}", c, q) for i, (c, q) in enumerate(values)]
    scores = topsis(rows)

    assert topsis(list(reversed(rows))) == pytest.approx(scores)
    rescaled = [TopsisRow(r.method, r.cost * factor, r.quality * factor + shift) for r in rows]
    assert topsis(rescaled) == pytest.approx(scores, abs=1e-6)
    assert all(0.0 <= s <= 100.0 for s in scores.values())


# ============================================================================
# 锦标赛
# ============================================================================

BRACKET = {"rounds": [
    [
        {"id": "R1M1", "a": "GPT-5 (minimal)", "b": "GPT-5 (high)"},
        {"id": "R1M2", "a": "GPT-5.1 (none)", "b": "GPT-5.1 (high)"},
        {"id": "R1M3", "a": "Claude Sonnet 4.5 (think)", "b": "Claude Sonnet 4.5 (no-think)"},
        {"id": "R1M4", "a": "Gemini 3 Pro (high)", "b": "Gemini 3 Pro (low)"},
        {"id": "R1M5", "a": "GPT-5.2 (none)", "b": "GPT-5.2 (xhigh)"},
        {"id": "R1M6", "a": "Gemini 3 Flash (high)", "b": "Gemini 3 Flash (low)"},
    ],
    [
        {"id": "R2M1", "a": "winner:R1M2", "b": "winner:R1M3"},
        {"id": "R2M2", "a": "winner:R1M4", "b": "winner:R1M5"},
        {"id": "R2M3", "a": "winner:R1M6", "b": "Grok 4"},
    ],
    [
        {"id": "R3M1", "a": "winner:R1M1", "b": "winner:R2M1"},
        {"id": "R3M2", "a": "winner:R2M2", "b": "winner:R2M3"},
    ],
    [
        {"id": "R4M1", "a": "winner:R3M1", "b": "winner:R3M2"},
    ],
]}

RESULTS = {
    frozenset(("GPT-5 (minimal)", "GPT-5 (high)")): ("GPT-5 (high)", 14, 1),
    frozenset(("GPT-5.1 (none)", "GPT-5.1 (high)")): ("GPT-5.1 (high)", 11, 6),
    frozenset(("Claude Sonnet 4.5 (think)", "Claude Sonnet 4.5 (no-think)")): ("Claude Sonnet 4.5 (think)", 4, 4),
    frozenset(("Gemini 3 Pro (high)", "Gemini 3 Pro (low)")): ("Gemini 3 Pro (high)", 4, 4),
    frozenset(("GPT-5.2 (none)", "GPT-5.2 (xhigh)")): ("GPT-5.2 (xhigh)", 5, 2),
    frozenset(("Gemini 3 Flash (high)", "Gemini 3 Flash (low)")): ("Gemini 3 Flash (high)", 9, 7),
    frozenset(("GPT-5.1 (high)", "Claude Sonnet 4.5 (no-think)")): ("Claude Sonnet 4.5 (no-think)", 5, 4),
    frozenset(("Gemini 3 Pro (low)", "GPT-5.2 (xhigh)")): ("GPT-5.2 (xhigh)", 10, 3),
    frozenset(("Gemini 3 Flash (high)", "Grok 4")): ("Gemini 3 Flash (high)", 3, 2),
    frozenset(("GPT-5 (high)", "Claude Sonnet 4.5 (no-think)")): ("GPT-5 (high)", 6, 5),
    frozenset(("GPT-5.2 (xhigh)", "Gemini 3 Flash (high)")): ("GPT-5.2 (xhigh)", 11, 1),
    frozenset(("GPT-5 (high)", "GPT-5.2 (xhigh)")): ("GPT-5.2 (xhigh)", 7, 3),
}

COSTS = {
    "Claude Sonnet 4.5 (think)": 0.3100,
    "Claude Sonnet 4.5 (no-think)": 0.1930,
    "Gemini 3 Pro (high)": 0.4400,
    "Gemini 3 Pro (low)": 0.2600,
}


def test_tournament_bracket():
    result = run_tournament(BRACKET, ITEMS, scripted_judge(RESULTS), COSTS)
    assert result.winner == "GPT-5.2 (xhigh)"
    assert [len(rnd) for rnd in result.rounds] == [6, 3, 2, 1]

    by_id = {m.match_id: m for m in result.matches}
    expected = {
        "R1M1": ("GPT-5 (high)", 93.3),
        "R1M2": ("GPT-5.1 (high)", 64.7),
        "R1M5": ("GPT-5.2 (xhigh)", 71.4),
        "R1M6": ("Gemini 3 Flash (high)", 56.3),
        "R2M1": ("Claude Sonnet 4.5 (no-think)", 55.6),
        "R2M2": ("GPT-5.2 (xhigh)", 76.9),
        "R2M3": ("Gemini 3 Flash (high)", 60.0),
        "R3M1": ("GPT-5 (high)", 54.5),
        "R3M2": ("GPT-5.2 (xhigh)", 91.7),
        "R4M1": ("GPT-5.2 (xhigh)", 70.0),
    }
    for match_id, (winner, rate) in expected.items():
        assert by_id[match_id].winner == winner
        assert by_id[match_id].winner_rate == pytest.approx(rate, abs=0.06)
    assert len(result.records) == 12 * len(ITEMS)


def test_even_match_goes_to_the_cheaper_method():
    result = run_tournament(BRACKET, ITEMS, scripted_judge(RESULTS), COSTS)
    by_id = {m.match_id: m for m in result.matches}
    assert by_id["R1M3"].tie_break
    assert by_id["R1M3"].winner == "Claude Sonnet 4.5 (no-think)"
    assert by_id["R1M4"].winner == "Gemini 3 Pro (low)"
    assert not by_id["R1M1"].tie_break


def test_all_ties_with_equal_costs_keeps_side_a():
    bracket = [[{"id": "F", "a": "x", "b": "y"}]]
    result = run_tournament(bracket, ITEMS, lambda i, a, b: Outcome.TIE, {"x": 1.0, "y": 1.0})
    final = result.matches[0]
    assert final.winner == "x"
    assert final.rate_a is None and final.tie_break


def test_tie_without_costs():
    with pytest.raises(BracketError, match="costs"):
        run_tournament([[{"id": "F", "a": "x", "b": "y"}]], ITEMS, lambda i, a, b: Outcome.TIE)


def test_bye():
    bracket = [[{"id": "A", "a": "x", "b": None}, {"id": "B", "a": "y", "b": "z"}],
               [{"id": "F", "a": "winner:A", "b": "winner:B"}]]
    judge = lambda i, a, b: Outcome.A_WINS
    result = run_tournament(bracket, ITEMS[:3], judge)
    assert result.rounds[0][0].winner == "x"
    assert result.rounds[0][0].winner_rate is None
    assert result.winner == "x"


@pytest.mark.parametrize("bracket", [
    [],
    [[]],
    [[{"id": "A", "a": "x", "b": "winner:B"}], [{"id": "B", "a": "y", "b": "z"}]],
    [[{"id": "A", "a": "x", "b": "y"}, {"id": "A", "a": "z", "b": "w"}], [{"a": "winner:A", "b": "q"}]],
    [[{"id": "A", "a": "x", "b": "x"}]],
    [[{"id": "A", "a": "x", "b": "y"}, {"id": "B", "a": "z", "b": "w"}]],
    [[{"id": "A", "b": "y"}]],
])
def test_invalid_brackets(bracket):
    with pytest.raises(BracketError):
        run_tournament(bracket, ITEMS, lambda i, a, b: Outcome.A_WINS, {})


def test_league_pairs_every_method_once():
    methods = ["m1", "m2", "m3", "m4", "m5"]
    log = run_league(methods, ITEMS[:2], lambda i, a, b: Outcome.A_WINS)
    pairs = {frozenset((r.side_a, r.side_b)) for r in log}
    assert len(pairs) == 10
    assert len(log) == 20
    table = fit_bradley_terry(log)
    assert table.regularized
    assert [m for m, _ in table.ranked()] == methods


def test_league_needs_two_methods():
    with pytest.raises(NotEnoughDataError):
        run_league(["m1", "m1"], ITEMS, lambda i, a, b: Outcome.TIE)


# ============================================================================
# LLM评审
# ============================================================================

def verdict(overall):
    return (
        '{"accuracy": "A+", "completeness": "TIE", "parsimony": "TIE", '
        f'"overall_winner": "{overall}", "reasoning": "..."}}'
    )


@pytest.fixture
def judge_setup():
    ids = ("i1", "i2", "i3")
    items = {i: ArgumentInput("weather", "It rains, so the street is wet.") for i in ids}
    rain = parse_reconstruction(RAIN_RECONSTRUCTION)
    reconstructions = {m: {i: rain for i in ids} for m in ("gaar", "base")}
    return items, reconstructions


def test_pairwise_judge_with_position_swap(judge_setup):
    items, reconstructions = judge_setup
    backend = ScriptedBackend([verdict("A"), verdict("B"), verdict("A"), verdict("A")])
    judge = PairwiseJudge(backend, items, reconstructions, swap=True)

    assert judge("i1", "gaar", "base") == Outcome.A_WINS
    # both orders prefer the first position: no agreement
    assert judge("i1", "gaar", "base") == Outcome.TIE
    assert len(judge.judgments) == 4
    assert all(r.template == "pairwise_judgment" for r in backend.requests)


def test_unreadable_judgment_is_left_out(judge_setup):
    items, reconstructions = judge_setup
    backend = ScriptedBackend(["I prefer the first one.", verdict("B"), '{"accuracy": "A", "overall_winner": "A"}'])
    judge = PairwiseJudge(backend, items, reconstructions)
    unparsed = []
    log = judge_items(judge, ["i1", "i2", "i3"], "gaar", "base", unparsed)
    assert [(r.item_id, r.outcome) for r in log] == [("i2", Outcome.B_WINS)]
    assert unparsed == [("i1", "gaar", "base"), ("i3", "gaar", "base")]
    assert winning_rate(log, "gaar", "base") == 0.0


# ============================================================================
# 有效率
# ============================================================================

def test_validity_rate():
    valid = parse_formalization(RAIN_FORMALIZATION)
    invalid = parse_formalization(RAIN_FORMALIZATION.replace("Formalized Conclusion\nW", "Formalized Conclusion\n¬R"))
    assert validity_rate([valid, valid, valid, None]) == 75.0
    assert validity_rate([valid, invalid]) == 50.0


def test_validity_rate_of_nothing():
    with pytest.raises(NotEnoughDataError):
        validity_rate([])


def test_baseline_validity_via_one_formalization_each():
    rain = parse_reconstruction(RAIN_RECONSTRUCTION)
    backend = ScriptedBackend([RAIN_FORMALIZATION, "no sections", "still none"])
    formalizations = formalize_for_validity([rain, rain], backend)
    assert formalizations[1] is None
    assert validity_rate(formalizations) == 50.0
