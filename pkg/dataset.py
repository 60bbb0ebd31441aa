"""
数据集模块 - 重构语料的记录模型、读写、统计、划分与批量合成

设计理念 (CleanRL哲学):
- 单文件自包含: 语料相关的全部逻辑集中在一个文件
- 透明的处理流程: JSONL一行一条记录, 字段名固定
- 最小化抽象: dataclass + pandas 分组统计
- 便于调试: 解码错误带行号, 批处理失败写入旁路日志

Record fields: id, source, title, background, argument,
premises[{label, text, implicit}], conclusion, fallacy, author_kind.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from config import Config, get_err_message
from llm_client import BackendError, LLMBackend
from logger_config import BatchProgress, log_time
from pipeline import GAAREngine, RunStatus
from reconstruction import ArgumentInput, FallacyReport, Premise, Reconstruction
from storage_manager import StorageManager
from utils import iter_jsonl, word_count, write_jsonl


# ============================================================================
# 常量
# ============================================================================

# tag -> display name, in report order
SOURCES: Dict[str, str] = {
    "procon": "Procon.org",
    "pros-and-cons-1950": "Pros-and-cons-1950",
    "pros-and-cons-2010": "Pros-and-cons-2010",
    "nyt-room-for-debate": "NYT-room-for-debate",
    "anthropic-persuasion": "Anthropic-Persuasion",
    "synthetic": "Synthetic Arguments",
    "synthetic-fallacious": "Synthetic Fallacious Arguments",
}

AUTHOR_KINDS = ("human", "llm")

# default author kind when an input line does not say
DEFAULT_AUTHOR_KIND = {
    "synthetic": "llm",
    "synthetic-fallacious": "llm",
}


# ============================================================================
# 异常
# ============================================================================

class DatasetError(ValueError):
    """数据集错误基类"""


class CorpusDecodeError(DatasetError):
    """语料文件某一行无法解码"""

    def __init__(self, path, lineno: int, reason: str):
        self.path = str(path)
        self.lineno = lineno
        self.reason = reason
        super().__init__(f"{path}:{lineno}: {reason}")


class EmptyCorpusError(DatasetError):
    pass


class InsufficientDataError(DatasetError):
    pass


# ============================================================================
# 记录
# ============================================================================

@dataclass
class ArguinasRecord:
    """一条论证及其重构"""
    id: str
    source: str
    title: str
    argument: str
    reconstruction: Reconstruction
    background: Optional[str] = None
    fallacy: Optional[FallacyReport] = None
    author_kind: str = "human"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DatasetError(f"unknown source tag {self.source!r}; expected one of {list(SOURCES)}")
        if not (self.argument or "").strip():
            raise DatasetError(f"record {self.id}: argument must be nonempty")
        if self.author_kind not in AUTHOR_KINDS:
            raise DatasetError(f"record {self.id}: author_kind must be one of {AUTHOR_KINDS}")

    @property
    def words(self) -> int:
        return word_count(self.argument)

    @property
    def premise_count(self) -> int:
        return len(self.reconstruction.premises)

    @property
    def implicit_pct(self) -> float:
        return 100.0 * self.reconstruction.implicit_ratio

    @property
    def fallacy_group(self) -> str:
        """formal / informal / fallacy-free (unknown when never analysed)"""
        if self.fallacy is None:
            return "unknown"
        if self.fallacy.has_formal:
            return "formal"
        if self.fallacy.informal:
            return "informal"
        return "fallacy-free"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "source": self.source,
            "title": self.title,
            "background": self.background,
            "argument": self.argument,
            "premises": [p.to_dict() for p in self.reconstruction.premises],
            "conclusion": self.reconstruction.conclusion,
            "fallacy": self.fallacy.to_dict() if self.fallacy is not None else None,
            "author_kind": self.author_kind,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ArguinasRecord":
        premises = [Premise(p["label"], p["text"], bool(p.get("implicit", False))) for p in data["premises"]]
        fallacy = data.get("fallacy")
        return cls(
            id=str(data["id"]),
            source=data["source"],
            title=data.get("title") or "",
            background=data.get("background"),
            argument=data["argument"],
            reconstruction=Reconstruction(premises, data["conclusion"]),
            fallacy=FallacyReport.from_dict(fallacy) if fallacy is not None else None,
            author_kind=data.get("author_kind") or "human",
        )


def read_corpus(path: Union[str, Path]) -> List[ArguinasRecord]:
    """
    读取语料 (遇到第一条坏记录即失败)

    Raises:
        CorpusDecodeError: 带行号
    """
    records = []
    for lineno, line in iter_jsonl(path):
        try:
            records.append(ArguinasRecord.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as e:
            raise CorpusDecodeError(path, lineno, f"{type(e).__name__}: {e}") from e
    logger.debug(f"读取语料 {path}: {len(records)} 条")
    return records


def write_corpus(records: Sequence[ArguinasRecord], path: Union[str, Path]) -> int:
    count = write_jsonl(path, (r.to_dict() for r in records))
    logger.info(f"写入语料 {path}: {count} 条")
    return count


# ============================================================================
# 统计
# ============================================================================

@dataclass
class GroupStats:
    count: int
    words_mean: float
    words_std: float
    premises_mean: float
    premises_std: float
    implicit_pct_mean: float
    implicit_pct_std: float

    def to_dict(self) -> Dict[str, float]:
        return dict(self.__dict__)


@dataclass
class CorpusStats:
    """按来源 (以及作者类型) 分组的统计, 外加总计"""
    by_source: Dict[str, GroupStats]
    by_author_kind: Dict[str, GroupStats]
    total: GroupStats
    ddof: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "by_source": {k: v.to_dict() for k, v in self.by_source.items()},
            "by_author_kind": {k: v.to_dict() for k, v in self.by_author_kind.items()},
            "total": self.total.to_dict(),
            "ddof": self.ddof,
        }


def _frame(records: Sequence[ArguinasRecord]) -> pd.DataFrame:
    return pd.DataFrame({
        "source": [r.source for r in records],
        "author_kind": [r.author_kind for r in records],
        "words": [r.words for r in records],
        "premises": [r.premise_count for r in records],
        "implicit_pct": [r.implicit_pct for r in records],
    })


def _group_stats(frame: pd.DataFrame, ddof: int) -> GroupStats:
    def std(column: str) -> float:
        value = frame[column].std(ddof=ddof)
        return 0.0 if pd.isna(value) else float(value)

    return GroupStats(
        count=int(len(frame)),
        words_mean=float(frame["words"].mean()),
        words_std=std("words"),
        premises_mean=float(frame["premises"].mean()),
        premises_std=std("premises"),
        implicit_pct_mean=float(frame["implicit_pct"].mean()),
        implicit_pct_std=std("implicit_pct"),
    )


def compute_stats(records: Sequence[ArguinasRecord], ddof: int = 0) -> CorpusStats:
    """
    语料统计

    ddof=0 gives population standard deviations, ddof=1 sample ones; a group
    of one record reports std 0 either way.

    Raises:
        EmptyCorpusError: 没有记录
    """
    if not records:
        raise EmptyCorpusError("cannot compute statistics of an empty corpus")
    frame = _frame(records)
    order = {tag: i for i, tag in enumerate(SOURCES)}
    by_source = {
        source: _group_stats(group, ddof)
        for source, group in sorted(frame.groupby("source"), key=lambda kv: order[kv[0]])
    }
    by_author = {kind: _group_stats(group, ddof) for kind, group in frame.groupby("author_kind")}
    return CorpusStats(by_source, by_author, _group_stats(frame, ddof), ddof)


# ============================================================================
# 划分与子集
# ============================================================================

def split(records: Sequence[ArguinasRecord], train_n: int, test_n: int,
          seed: int = 0) -> Tuple[List[ArguinasRecord], List[ArguinasRecord]]:
    """
    按种子确定性地划分训练/测试集

    Raises:
        InsufficientDataError: train_n + test_n 超过记录数
    """
    if train_n < 0 or test_n < 0:
        raise ValueError("split sizes must be nonnegative")
    if train_n + test_n > len(records):
        raise InsufficientDataError(f"need {train_n + test_n} records, corpus has {len(records)}")
    order = np.random.default_rng(seed).permutation(len(records))
    train = [records[i] for i in order[:train_n]]
    test = [records[i] for i in order[train_n:train_n + test_n]]
    return train, test


def filter_records(records: Sequence[ArguinasRecord], *,
                   min_words: Optional[int] = None, max_words: Optional[int] = None,
                   min_premises: Optional[int] = None, max_premises: Optional[int] = None,
                   min_implicit_pct: Optional[float] = None, max_implicit_pct: Optional[float] = None,
                   fallacious: Optional[bool] = None, author_kind: Optional[str] = None,
                   sources: Optional[Sequence[str]] = None) -> List[ArguinasRecord]:
    """按长度、前提数、隐含前提比例、谬误与作者筛选 (边界为严格不等)"""
    def keep(r: ArguinasRecord) -> bool:
        checks = [
            min_words is None or r.words > min_words,
            max_words is None or r.words < max_words,
            min_premises is None or r.premise_count > min_premises,
            max_premises is None or r.premise_count < max_premises,
            min_implicit_pct is None or r.implicit_pct > min_implicit_pct,
            max_implicit_pct is None or r.implicit_pct < max_implicit_pct,
            fallacious is None or (r.fallacy_group in ("formal", "informal")) == fallacious,
            author_kind is None or r.author_kind == author_kind,
            sources is None or r.source in sources,
        ]
        return all(checks)

    return [r for r in records if keep(r)]


# named subsets used for data-composition studies
SUBSETS: Dict[str, Dict[str, Any]] = {
    "short": {"max_words": 150},
    "long": {"min_words": 290},
    "small": {"max_premises": 7},
    "large": {"min_premises": 8},
    "low-implicit": {"max_implicit_pct": 100.0 / 3},
    "high-implicit": {"min_implicit_pct": 50.0},
    "human": {"author_kind": "human"},
    "llm": {"author_kind": "llm"},
    "no-fallacy": {"fallacious": False},
}


def subset(records: Sequence[ArguinasRecord], name: str) -> List[ArguinasRecord]:
    if name not in SUBSETS:
        raise DatasetError(f"unknown subset {name!r}; expected one of {sorted(SUBSETS)}")
    return filter_records(records, **SUBSETS[name])


# ============================================================================
# 批量合成
# ============================================================================

@dataclass
class BatchSummary:
    total: int = 0
    converged: int = 0
    exhausted: int = 0
    failed: int = 0
    malformed: int = 0
    written: int = 0
    sidecar: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class _Outcome:
    index: int
    entry: Dict[str, Any] = field(default_factory=dict)
    record: Optional[ArguinasRecord] = None
    status: str = RunStatus.FAILED
    error: Optional[str] = None
    iterations: int = 0


def _input_from(entry: Dict[str, Any]) -> ArgumentInput:
    topic = entry.get("topic") or entry.get("title")
    return ArgumentInput(topic=topic, argument=entry.get("argument"), background=entry.get("background"))


@log_time
def batch_reconstruct(corpus_path: Union[str, Path], config: Config, backend: LLMBackend,
                      out_path: Union[str, Path], jobs: int = 1,
                      storage: Optional[StorageManager] = None) -> BatchSummary:
    """
    对语料中每条论证运行重构引擎

    Only Converged runs become records. Exhausted, Failed and malformed entries
    go to the sidecar file instead; the batch never aborts on one item.
    Items run on up to `jobs` threads; records are written in input order.
    """
    corpus_path, out_path = Path(corpus_path), Path(out_path)
    storage = storage or StorageManager(config.storage)
    sidecar_name = f"{out_path.stem}"
    summary = BatchSummary(sidecar=str(storage.sidecar_file(sidecar_name)))

    entries: List[Tuple[int, Any]] = []
    for lineno, line in iter_jsonl(corpus_path):
        try:
            entries.append((lineno, json.loads(line)))
        except json.JSONDecodeError as e:
            entries.append((lineno, e))

    def work(item: Tuple[int, Any]) -> _Outcome:
        lineno, entry = item
        outcome = _Outcome(index=lineno)
        if not isinstance(entry, dict):
            outcome.status, outcome.error = "Malformed", f"line {lineno}: {entry}"
            return outcome
        outcome.entry = entry
        try:
            inp = _input_from(entry)
            source = entry.get("source", "synthetic")
            author_kind = entry.get("author_kind") or DEFAULT_AUTHOR_KIND.get(source, "human")
            if source not in SOURCES:
                raise DatasetError(f"unknown source tag {source!r}")
        except (ValueError, TypeError) as e:
            outcome.status, outcome.error = "Malformed", f"line {lineno}: {e}"
            return outcome

        engine = GAAREngine(config.pipeline, backend, config.llm, config.solver)
        try:
            reconstruction, _, trace = engine.run(inp)
        except BackendError as e:
            logger.error(f"条目 {entry.get('id', lineno)} 失败: {get_err_message()}")
            if e.trace is not None:
                storage.save_trace(e.trace, str(entry.get("id", lineno)))
                outcome.iterations = len(e.trace.iterations)
            outcome.error = str(e)
            return outcome

        storage.save_trace(trace, str(entry.get("id", lineno)))
        outcome.status = trace.status
        outcome.iterations = len(trace.iterations)
        if trace.status == RunStatus.CONVERGED:
            outcome.record = ArguinasRecord(
                id=str(entry.get("id", lineno)),
                source=source,
                title=entry.get("title") or inp.topic,
                background=inp.background,
                argument=inp.argument,
                reconstruction=reconstruction.renumbered(),
                fallacy=trace.fallacy_report,
                author_kind=author_kind,
            )
        return outcome

    progress = BatchProgress(total=len(entries))
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        outcomes = []
        for outcome in pool.map(work, entries):
            outcomes.append(outcome)
            progress.update(outcome.status, f"line {outcome.index}")
    progress.finish()

    records = []
    for outcome in outcomes:
        summary.total += 1
        if outcome.record is not None:
            summary.converged += 1
            records.append(outcome.record)
            continue
        if outcome.status == RunStatus.EXHAUSTED:
            summary.exhausted += 1
        elif outcome.status == "Malformed":
            summary.malformed += 1
        else:
            summary.failed += 1
        storage.record_sidecar(sidecar_name, {
            "line": outcome.index,
            "id": outcome.entry.get("id"),
            "status": outcome.status,
            "iterations": outcome.iterations,
            "error": outcome.error,
        })

    summary.written = write_corpus(records, out_path)
    storage.write_manifest()
    logger.info(f"批量重构完成: {summary.to_dict()}")
    return summary


if __name__ == "__main__":
    demo = ArguinasRecord(
        id="demo-1",
        source="pros-and-cons-2010",
        title="Abortion on demand",
        argument="We allow contraception. Abortion is no different. So we should allow abortion.",
        reconstruction=Reconstruction(
            [Premise("P1", "We allow contraception."), Premise("P2", "Abortion is like contraception.", True)],
            "We should allow abortion.",
        ),
    )
    print(compute_stats([demo]).to_dict())
