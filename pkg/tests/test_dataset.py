"""
dataset模块测试 - 记录读写、统计、划分、子集与批量合成
"""

import json
import math

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from config import Config, StorageConfig
from dataset import (
    AUTHOR_KINDS,
    SOURCES,
    ArguinasRecord,
    CorpusDecodeError,
    DatasetError,
    EmptyCorpusError,
    InsufficientDataError,
    batch_reconstruct,
    compute_stats,
    filter_records,
    read_corpus,
    split,
    subset,
    write_corpus,
)
from llm_client import ScriptedBackend
from reconstruction import FallacyReport, Premise, Reconstruction


def make_record(rid="r1", words=10, premises=4, implicit=2, source="procon", author_kind="human", fallacy=None):
    reconstruction = Reconstruction(
        [Premise(f"P{i}", f"premise {i}", i > premises - implicit) for i in range(1, premises + 1)],
        "the conclusion",
    )
    return ArguinasRecord(
        id=rid,
        source=source,
        title=f"topic {rid}",
        argument=" ".join(["word"] * words),
        reconstruction=reconstruction,
        fallacy=fallacy,
        author_kind=author_kind,
    )


# ============================================================================
# 记录
# ============================================================================

def test_record_properties():
    record = make_record()
    assert record.words == 10
    assert record.premise_count == 4
    assert record.implicit_pct == 50.0
    assert record.fallacy_group == "unknown"


def test_fallacy_groups():
    formal = FallacyReport(formal=("Affirming the consequent", "..."))
    informal = FallacyReport(informal=[("Straw man", "...")])
    assert make_record(fallacy=formal).fallacy_group == "formal"
    assert make_record(fallacy=informal).fallacy_group == "informal"
    assert make_record(fallacy=FallacyReport()).fallacy_group == "fallacy-free"


def test_record_validation():
    with pytest.raises(DatasetError):
        make_record(source="reddit")
    with pytest.raises(DatasetError):
        make_record(author_kind="robot")
    with pytest.raises(DatasetError):
        make_record(words=0)


def test_corpus_roundtrip(tmp_path):
    records = [make_record("a"), make_record("b", fallacy=FallacyReport(informal=[("Straw man", "x")]))]
    path = tmp_path / "corpus.jsonl"
    assert write_corpus(records, path) == 2
    loaded = read_corpus(path)
    assert [r.to_dict() for r in loaded] == [r.to_dict() for r in records]
    assert loaded[0].reconstruction.premises[3].implicit


def test_corrupt_line_reports_its_number(tmp_path):
    path = tmp_path / "corpus.jsonl"
    good = json.dumps(make_record().to_dict())
    path.write_text(f"{good}\n\n{{not json\n", encoding="utf-8")
    with pytest.raises(CorpusDecodeError) as info:
        read_corpus(path)
    assert info.value.lineno == 3


def test_unknown_source_in_file(tmp_path):
    data = make_record().to_dict()
    data["source"] = "forum"
    path = tmp_path / "corpus.jsonl"
    path.write_text(json.dumps(data) + "\n", encoding="utf-8")
    with pytest.raises(CorpusDecodeError, match="forum"):
        read_corpus(path)


# ============================================================================
# 统计
# ============================================================================

def test_stats_single_record():
    stats = compute_stats([make_record()])
    assert stats.total.count == 1
    assert stats.total.words_mean == 10
    assert stats.total.premises_mean == 4
    assert stats.total.implicit_pct_mean == 50.0
    assert stats.total.words_std == 0.0


def test_stats_population_and_sample_std():
    records = [make_record("a", words=10), make_record("b", words=20, source="synthetic", author_kind="llm")]
    population = compute_stats(records)
    sample = compute_stats(records, ddof=1)
    assert population.total.words_std == pytest.approx(5.0)
    assert sample.total.words_std == pytest.approx(math.sqrt(50))
    assert list(population.by_source) == ["procon", "synthetic"]
    assert set(population.by_author_kind) == {"human", "llm"}
    assert sample.by_source["procon"].words_std == 0.0


def test_stats_of_nothing():
    with pytest.raises(EmptyCorpusError):
        compute_stats([])


# ============================================================================
# 划分与子集
# ============================================================================

def test_split_is_deterministic():
    records = [make_record(f"r{i}") for i in range(3175)]
    train, test = split(records, 2934, 241, seed=0)
    assert len(train) == 2934 and len(test) == 241
    assert not {r.id for r in train} & {r.id for r in test}

    again, _ = split(records, 2934, 241, seed=0)
    assert [r.id for r in again] == [r.id for r in train]
    other, _ = split(records, 2934, 241, seed=1)
    assert [r.id for r in other] != [r.id for r in train]


def test_split_needs_enough_records():
    with pytest.raises(InsufficientDataError):
        split([make_record()], 1, 1)


@pytest.mark.parametrize("name, kept", [
    ("short", ["short"]),
    ("long", ["long"]),
    ("small", ["short", "long"]),
    ("large", ["big"]),
    ("low-implicit", ["edge", "long"]),
    ("high-implicit", ["big"]),
    ("llm", ["big"]),
])
def test_subsets(name, kept):
    records = [
        make_record("short", words=149, premises=4, implicit=2),
        make_record("edge", words=150, premises=7, implicit=2),
        make_record("long", words=291, premises=4, implicit=1),
        make_record("big", words=200, premises=9, implicit=5, source="synthetic", author_kind="llm"),
    ]
    assert [r.id for r in subset(records, name)] == kept


def test_unknown_subset():
    with pytest.raises(DatasetError):
        subset([make_record()], "medium")


def test_filter_by_fallacy_and_source():
    records = [
        make_record("f", fallacy=FallacyReport(informal=[("Straw man", "x")])),
        make_record("clean", fallacy=FallacyReport()),
        make_record("s", source="synthetic", fallacy=FallacyReport()),
    ]
    assert [r.id for r in filter_records(records, fallacious=True)] == ["f"]
    assert [r.id for r in filter_records(records, fallacious=False, sources=["procon"])] == ["clean"]


# ============================================================================
# 批量合成
# ============================================================================

def test_batch_reconstruct(tmp_path, rain_script):
    corpus = tmp_path / "input.jsonl"
    lines = [
        {"id": "a1", "source": "synthetic", "topic": "weather", "argument": "It rains, so the street is wet."},
        {"id": "a2", "source": "procon", "topic": "weather"},
        {"id": "a3", "source": "procon", "title": "weather", "argument": "It rains. The street is wet."},
    ]
    corpus.write_text("\n".join(json.dumps(l) for l in lines) + "\n{broken\n", encoding="utf-8")

    config = Config()
    config.storage = StorageConfig(base_dir=tmp_path / "outputs")
    backend = ScriptedBackend(rain_script * 2)
    out = tmp_path / "synth.jsonl"

    summary = batch_reconstruct(corpus, config, backend, out)
    assert (summary.total, summary.converged, summary.malformed, summary.failed) == (4, 2, 2, 0)
    assert summary.written == 2
    assert backend.remaining == 0

    records = read_corpus(out)
    assert [r.id for r in records] == ["a1", "a3"]
    assert records[0].author_kind == "llm"
    assert records[1].author_kind == "human"
    assert records[0].fallacy_group == "fallacy-free"
    assert [p.implicit for p in records[0].reconstruction.premises] == [False, True]

    sidecar = tmp_path / "outputs" / "sidecar" / "synth.sidecar.jsonl"
    entries = [json.loads(l) for l in sidecar.read_text(encoding="utf-8").splitlines()]
    assert [e["line"] for e in entries] == [2, 4]
    assert all(e["status"] == "Malformed" for e in entries)
    assert len(list((tmp_path / "outputs" / "traces").glob("*.json"))) == 2


def test_batch_failure_goes_to_sidecar(tmp_path):
    corpus = tmp_path / "input.jsonl"
    corpus.write_text(json.dumps({"id": "x", "source": "procon", "topic": "t", "argument": "a b c"}) + "\n",
                      encoding="utf-8")
    config = Config()
    config.storage = StorageConfig(base_dir=tmp_path / "outputs")

    summary = batch_reconstruct(corpus, config, ScriptedBackend([]), tmp_path / "out.jsonl")
    assert summary.failed == 1
    assert summary.written == 0
    entry = json.loads((tmp_path / "outputs" / "sidecar" / "out.sidecar.jsonl").read_text(encoding="utf-8"))
    assert entry["id"] == "x"
    assert entry["status"] == "Failed"


# ============================================================================
# 性质测试
# ============================================================================

@st.composite
def corpora(draw, min_size=1, max_size=30):
    size = draw(st.integers(min_size, max_size))
    records = []
    for i in range(size):
        premises = draw(st.integers(1, 10))
        records.append(make_record(
            f"r{i}",
            words=draw(st.integers(1, 400)),
            premises=premises,
            implicit=draw(st.integers(0, premises)),
            source=draw(st.sampled_from(list(SOURCES))),
            author_kind=draw(st.sampled_from(AUTHOR_KINDS)),
        ))
    return records


texts = st.text(min_size=1).filter(lambda s: s.strip())


@given(corpora(max_size=8), texts, texts, st.none() | st.text())
@settings(max_examples=50, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_corpus_roundtrip_property(tmp_path, records, argument, premise, background):
    records[0].argument = argument
    records[0].background = background
    records[0].reconstruction.premises[0].text = premise
    records[-1].fallacy = FallacyReport(informal=[("Straw man", premise)])
    path = tmp_path / "corpus.jsonl"
    write_corpus(records, path)
    assert [r.to_dict() for r in read_corpus(path)] == [r.to_dict() for r in records]


def _pooled(groups):
    n = sum(g.count for g in groups)
    mean = sum(g.count * g.words_mean for g in groups) / n
    var = sum(g.count * (g.words_std ** 2 + (g.words_mean - mean) ** 2) for g in groups) / n
    return n, mean, math.sqrt(var)


@given(corpora())
@settings(max_examples=100, deadline=None)
def test_total_stats_pool_the_groups(records):
    stats = compute_stats(records)
    for groups in (stats.by_source, stats.by_author_kind):
        n, mean, std = _pooled(list(groups.values()))
        assert n == stats.total.count == len(records)
        assert mean == pytest.approx(stats.total.words_mean)
        assert std == pytest.approx(stats.total.words_std, abs=1e-9)
        premises = sum(g.count * g.premises_mean for g in groups.values()) / n
        assert premises == pytest.approx(stats.total.premises_mean)


@given(st.integers(0, 60), st.data(), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_split_partitions_for_any_seed(n, data, seed):
    records = [make_record(f"r{i}") for i in range(n)]
    train_n = data.draw(st.integers(0, n))
    test_n = data.draw(st.integers(0, n - train_n))
    train, test = split(records, train_n, test_n, seed=seed)
    train_ids, test_ids = [r.id for r in train], [r.id for r in test]
    assert len(train_ids) == train_n and len(test_ids) == test_n
    assert len(set(train_ids) | set(test_ids)) == train_n + test_n
    assert set(train_ids) <= {r.id for r in records}
    complete, rest = split(records, n - test_n, test_n, seed=seed)
    assert {r.id for r in complete} | {r.id for r in rest} == {r.id for r in records}
