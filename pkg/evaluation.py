"""
评估模块 - 有效率、成对胜率、Bradley-Terry评分、TOPSIS与锦标赛/联赛调度

设计理念 (CleanRL哲学):
- 单文件自包含: 所有评估协议与选择数学在一个文件
- 透明的处理流程: 比赛日志 -> 胜率 / 评分 -> TOPSIS
- 最小化抽象: 纯函数 + 少量dataclass
- 便于调试: 比赛日志与评分表都可写成JSONL
"""

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from config import EvalConfig, PipelineConfig
from fol import FormulaError
from llm_client import CompletionRequest, LLMBackend
from logger_config import log_time
from pipeline import formalize
from prompts import load_template, render_prompt
from reconstruction import ArgumentInput, Formalization, Reconstruction
from response_parser import PairwiseJudgment, ParseError, parse_pairwise_judgment
from solver import SolverError, check_validity
from utils import iter_jsonl, write_jsonl


# ============================================================================
# 异常
# ============================================================================

class EvaluationError(ValueError):
    """评估错误基类"""


class AllTiesError(EvaluationError):
    """两方之间没有非平局记录"""


class DisconnectedGraphError(EvaluationError):
    """比较图不连通, 评分不可比"""


class DegenerateColumnError(EvaluationError):
    """TOPSIS某一列 max == min"""


class NotEnoughDataError(EvaluationError):
    """输入为空"""


class BracketError(EvaluationError):
    """锦标赛对阵表无效"""


# ============================================================================
# 比赛记录
# ============================================================================

class Outcome:
    A_WINS = "AWins"
    B_WINS = "BWins"
    TIE = "Tie"

    ALL = (A_WINS, B_WINS, TIE)

    @classmethod
    def flip(cls, outcome: str) -> str:
        return {cls.A_WINS: cls.B_WINS, cls.B_WINS: cls.A_WINS}.get(outcome, cls.TIE)


@dataclass(frozen=True)
class MatchRecord:
    """一次成对比较 (一个条目, 两个方法)"""
    item_id: str
    side_a: str
    side_b: str
    outcome: str

    def __post_init__(self):
        if self.side_a == self.side_b:
            raise ValueError(f"a method cannot be compared with itself: {self.side_a}")
        if self.outcome not in Outcome.ALL:
            raise ValueError(f"unknown outcome: {self.outcome!r}")

    def winner(self) -> Optional[str]:
        if self.outcome == Outcome.A_WINS:
            return self.side_a
        if self.outcome == Outcome.B_WINS:
            return self.side_b
        return None

    def to_dict(self) -> dict:
        return {"item_id": self.item_id, "side_a": self.side_a, "side_b": self.side_b, "outcome": self.outcome}


def write_match_log(records: Iterable[MatchRecord], path: Union[str, Path]) -> int:
    return write_jsonl(path, (r.to_dict() for r in records))


def read_match_log(path: Union[str, Path]) -> List[MatchRecord]:
    records = []
    for lineno, line in iter_jsonl(path):
        try:
            data = json.loads(line)
            records.append(MatchRecord(str(data["item_id"]), data["side_a"], data["side_b"], data["outcome"]))
        except (ValueError, KeyError, TypeError) as e:
            raise EvaluationError(f"{path}:{lineno}: invalid match record: {e}") from e
    return records


# ============================================================================
# 胜率
# ============================================================================

def _tally(records: Iterable[MatchRecord], a: str, b: str) -> Tuple[int, int, int]:
    wins_a = wins_b = ties = 0
    for r in records:
        if {r.side_a, r.side_b} != {a, b}:
            continue
        winner = r.winner()
        if winner == a:
            wins_a += 1
        elif winner == b:
            wins_b += 1
        else:
            ties += 1
    return wins_a, wins_b, ties


def winning_rate(records: Iterable[MatchRecord], a: str, b: str) -> float:
    """
    a 对 b 的胜率 (百分比, 不计平局)

    Raises:
        AllTiesError: 两者之间没有非平局记录
    """
    wins_a, wins_b, ties = _tally(records, a, b)
    if wins_a + wins_b == 0:
        raise AllTiesError(f"no decisive comparison between {a} and {b} ({ties} ties)")
    return 100.0 * wins_a / (wins_a + wins_b)


def winning_rates_by(records: Iterable[MatchRecord], a: str, b: str,
                     groups: Mapping[str, str]) -> Dict[str, Optional[float]]:
    """
    按条目分组计算胜率 (例如 formal / informal / fallacy-free)

    groups maps item id -> group name; items without a group are skipped.
    A group with only ties maps to None.
    """
    by_group: Dict[str, List[MatchRecord]] = {}
    for r in records:
        group = groups.get(r.item_id)
        if group is not None:
            by_group.setdefault(group, []).append(r)

    rates: Dict[str, Optional[float]] = {}
    for group in sorted(by_group):
        try:
            rates[group] = winning_rate(by_group[group], a, b)
        except AllTiesError:
            rates[group] = None
    return rates


# ============================================================================
# Bradley-Terry
# ============================================================================

@dataclass
class RatingTable:
    """方法 -> Elo尺度评分; strengths 以几何平均为1归一化"""
    ratings: Dict[str, float]
    strengths: Dict[str, float]
    iterations: int = 0
    regularized: bool = False

    def ranked(self) -> List[Tuple[str, float]]:
        return sorted(self.ratings.items(), key=lambda kv: (-kv[1], kv[0]))

    def to_records(self) -> List[dict]:
        return [
            {"method": m, "rating": r, "strength": self.strengths[m]}
            for m, r in self.ranked()
        ]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.to_records()).set_index("method")

    def write(self, path: Union[str, Path]) -> int:
        return write_jsonl(path, self.to_records())


def _comparison_matrix(records: Sequence[MatchRecord]) -> Tuple[List[str], np.ndarray]:
    """wins[i, j] = wins of i over j, ties counted as half a win each."""
    methods = sorted({r.side_a for r in records} | {r.side_b for r in records})
    index = {m: i for i, m in enumerate(methods)}
    wins = np.zeros((len(methods), len(methods)))
    for r in records:
        i, j = index[r.side_a], index[r.side_b]
        if r.outcome == Outcome.A_WINS:
            wins[i, j] += 1.0
        elif r.outcome == Outcome.B_WINS:
            wins[j, i] += 1.0
        else:
            wins[i, j] += 0.5
            wins[j, i] += 0.5
    return methods, wins


def _reachable(adjacency: np.ndarray, start: int = 0) -> set:
    seen, stack = {start}, [start]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adjacency[i]):
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return seen


def _strongly_connected(wins: np.ndarray) -> bool:
    n = len(wins)
    beats = wins > 0
    return len(_reachable(beats)) == n and len(_reachable(beats.T)) == n


def bradley_terry_strengths(wins: np.ndarray, max_iterations: int = 10000,
                            tolerance: float = 1e-12) -> Tuple[np.ndarray, int]:
    """
    Minorization-maximization for the Bradley-Terry likelihood.

    s_i <- W_i / sum_j n_ij / (s_i + s_j), renormalized to geometric mean 1
    each sweep. Requires a strongly connected win graph for a finite optimum.
    """
    n = len(wins)
    games = wins + wins.T
    total_wins = wins.sum(axis=1)
    strengths = np.ones(n)

    iteration = 0
    for iteration in range(1, max_iterations + 1):
        pair_sums = strengths[:, None] + strengths[None, :]
        denom = (games / pair_sums).sum(axis=1)
        updated = total_wins / denom
        updated /= np.exp(np.mean(np.log(updated)))
        change = np.max(np.abs(np.log(updated) - np.log(strengths)))
        strengths = updated
        if change < tolerance:
            break
    return strengths, iteration


def log_likelihood(wins: np.ndarray, strengths: np.ndarray) -> float:
    pair_sums = strengths[:, None] + strengths[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(wins > 0, wins * np.log(strengths[:, None] / pair_sums), 0.0)
    return float(terms.sum())


@log_time
def fit_bradley_terry(records: Sequence[MatchRecord], config: Optional[EvalConfig] = None) -> RatingTable:
    """
    拟合Bradley-Terry强度并映射到Elo尺度

    rating_i = initial + scale * log_base(s_i / geometric_mean(s)), so the mean
    rating equals the initial rating. When some method is undefeated (or never
    wins) a pseudo-count of wins is added between every ordered pair.

    Raises:
        NotEnoughDataError: 没有记录
        DisconnectedGraphError: 比较图不连通
    """
    config = config or EvalConfig()
    records = list(records)
    if not records:
        raise NotEnoughDataError("no match records to fit")

    methods, wins = _comparison_matrix(records)
    played = (wins + wins.T) > 0
    if len(_reachable(played)) != len(methods):
        raise DisconnectedGraphError(f"comparison graph over {methods} is not connected")

    regularized = False
    if not _strongly_connected(wins):
        logger.warning(f"存在全胜或全负的方法, 添加伪计数 {config.pseudo_count}")
        wins = wins + config.pseudo_count * (1.0 - np.eye(len(methods)))
        regularized = True

    strengths, iterations = bradley_terry_strengths(wins, config.max_bt_iterations, config.bt_tolerance)
    log_geo = np.mean(np.log(strengths))
    ratings = config.initial_rating + config.scale * (np.log(strengths) - log_geo) / math.log(config.base)
    logger.debug(f"Bradley-Terry 收敛: {iterations} 次迭代, {len(methods)} 个方法")
    return RatingTable(
        ratings={m: float(r) for m, r in zip(methods, ratings)},
        strengths={m: float(s) for m, s in zip(methods, strengths / np.exp(log_geo))},
        iterations=iterations,
        regularized=regularized,
    )


# ============================================================================
# TOPSIS
# ============================================================================

@dataclass(frozen=True)
class TopsisRow:
    method: str
    cost: float
    quality: float

    def __post_init__(self):
        if self.cost < 0:
            raise ValueError(f"cost must be nonnegative: {self.method}")


def topsis(rows: Sequence[TopsisRow]) -> Dict[str, float]:
    """
    成本 (越低越好) / 质量 (越高越好) 两准则TOPSIS

    Both columns are min-max normalized to [0, 1]; the ideal point is
    (cost 0, quality 1). Scores are 100 * d_anti / (d_ideal + d_anti).

    Raises:
        NotEnoughDataError: 少于两行
        DegenerateColumnError: 某列 max == min
    """
    if len(rows) < 2:
        raise NotEnoughDataError("TOPSIS needs at least two rows")
    frame = pd.DataFrame([{"method": r.method, "cost": r.cost, "quality": r.quality} for r in rows])
    frame = frame.set_index("method")

    span = frame.max() - frame.min()
    degenerate = [c for c in frame.columns if span[c] == 0]
    if degenerate:
        raise DegenerateColumnError(f"column(s) {degenerate} have max == min")
    normalized = (frame - frame.min()) / span

    ideal = pd.Series({"cost": 0.0, "quality": 1.0})
    anti = pd.Series({"cost": 1.0, "quality": 0.0})
    d_ideal = np.sqrt(((normalized - ideal) ** 2).sum(axis=1))
    d_anti = np.sqrt(((normalized - anti) ** 2).sum(axis=1))
    scores = 100.0 * d_anti / (d_ideal + d_anti)
    return {m: float(s) for m, s in scores.items()}


def read_topsis_rows(path: Union[str, Path]) -> List[TopsisRow]:
    """读取 method,cost,quality CSV"""
    frame = pd.read_csv(path)
    missing = {"method", "cost", "quality"} - set(frame.columns)
    if missing:
        raise EvaluationError(f"{path}: missing column(s) {sorted(missing)}")
    return [TopsisRow(str(r.method), float(r.cost), float(r.quality)) for r in frame.itertuples(index=False)]


# ============================================================================
# 评审
# ============================================================================

# (item_id, method_a, method_b) -> Outcome
Judge = Callable[[str, str, str], str]


class PairwiseJudge:
    """
    基于LLM的成对忠实度评审

    reconstructions maps method -> item id -> Reconstruction. With swap=True
    every comparison is also judged with the positions exchanged; the two
    verdicts must agree, otherwise the comparison is a tie.
    """

    def __init__(self, backend: LLMBackend, items: Mapping[str, ArgumentInput],
                 reconstructions: Mapping[str, Mapping[str, Reconstruction]],
                 swap: bool = False, model: str = "", temperature: float = 0.0, max_tokens: int = 4096):
        self.backend = backend
        self.items = items
        self.reconstructions = reconstructions
        self.swap = swap
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.judgments: List[Tuple[str, str, str, PairwiseJudgment]] = []

    def _judge_once(self, item_id: str, a: str, b: str) -> PairwiseJudgment:
        item = self.items[item_id]
        bindings = {
            "TOPIC": item.topic,
            "ARGUMENT": item.argument,
            "RECONSTRUCTION_A": self.reconstructions[a][item_id].render(),
            "RECONSTRUCTION_B": self.reconstructions[b][item_id].render(),
        }
        template = load_template("pairwise_judgment")
        request = CompletionRequest(
            template=template.name, bindings=bindings, prompt=render_prompt(template, bindings),
            model=self.model, temperature=self.temperature, max_tokens=self.max_tokens,
        )
        judgment = parse_pairwise_judgment(self.backend.complete(request).text)
        self.judgments.append((item_id, a, b, judgment))
        return judgment

    def __call__(self, item_id: str, a: str, b: str) -> str:
        first = _outcome(self._judge_once(item_id, a, b).overall)
        if not self.swap:
            return first
        second = Outcome.flip(_outcome(self._judge_once(item_id, b, a).overall))
        return first if first == second else Outcome.TIE


def _outcome(overall: str) -> str:
    return {"A": Outcome.A_WINS, "B": Outcome.B_WINS}.get(overall, Outcome.TIE)


def judge_items(judge: Judge, items: Iterable[str], a: str, b: str,
                unparsed: Optional[List[Tuple[str, str, str]]] = None) -> List[MatchRecord]:
    """
    对每个条目评审一次

    An unreadable judgment produces no MatchRecord; it is logged as an error
    and appended to `unparsed` as (item_id, a, b) when a list is given.
    """
    records = []
    for item_id in items:
        try:
            outcome = judge(item_id, a, b)
        except ParseError as e:
            logger.error(f"评审输出无法解析, 不计入比赛记录 ({item_id}, {a} vs {b}): {e}")
            if unparsed is not None:
                unparsed.append((item_id, a, b))
            continue
        records.append(MatchRecord(item_id, a, b, outcome))
    return records


# ============================================================================
# 锦标赛与联赛
# ============================================================================

WINNER_REF = re.compile(r"^winner:(\S+)$")


@dataclass
class BracketMatch:
    id: str
    side_a: str
    side_b: Optional[str] = None  # None = bye


@dataclass
class MatchResult:
    match_id: str
    side_a: str
    side_b: Optional[str]
    winner: str
    rate_a: Optional[float] = None  # side_a's winning rate; None for a bye or all ties
    tie_break: bool = False
    records: List[MatchRecord] = field(default_factory=list)

    @property
    def winner_rate(self) -> Optional[float]:
        if self.rate_a is None:
            return None
        return self.rate_a if self.winner == self.side_a else 100.0 - self.rate_a

    def to_dict(self) -> dict:
        return {
            "match_id": self.match_id,
            "side_a": self.side_a,
            "side_b": self.side_b,
            "winner": self.winner,
            "winner_rate": self.winner_rate,
            "tie_break": self.tie_break,
        }


@dataclass
class TournamentResult:
    rounds: List[List[MatchResult]]
    winner: str

    @property
    def matches(self) -> List[MatchResult]:
        return [m for rnd in self.rounds for m in rnd]

    @property
    def records(self) -> List[MatchRecord]:
        return [r for m in self.matches for r in m.records]


def parse_bracket(data: Union[dict, list]) -> List[List[BracketMatch]]:
    """
    解析对阵表

    Accepts {"rounds": [[{"id", "a", "b"}, ...], ...]} or the bare list of
    rounds. A side may name a method or reference an earlier match as
    "winner:<match id>"; "b": null is a bye.
    """
    rounds = data.get("rounds") if isinstance(data, dict) else data
    if not rounds:
        raise BracketError("bracket has no rounds")
    parsed, seen = [], set()
    for r, rnd in enumerate(rounds, start=1):
        if not rnd:
            raise BracketError(f"round {r} is empty")
        matches, round_ids = [], set()
        for m, entry in enumerate(rnd, start=1):
            try:
                match = BracketMatch(str(entry.get("id") or f"R{r}M{m}"), entry["a"], entry.get("b"))
            except (AttributeError, KeyError, TypeError) as e:
                raise BracketError(f"round {r} match {m} is malformed: {entry!r}") from e
            if match.id in seen or match.id in round_ids:
                raise BracketError(f"duplicate match id {match.id}")
            for side in (match.side_a, match.side_b):
                ref = WINNER_REF.match(side) if side else None
                if ref and ref.group(1) not in seen:
                    raise BracketError(f"{match.id} refers to {ref.group(1)}, which is not an earlier match")
            if match.side_a == match.side_b:
                raise BracketError(f"{match.id} pairs {match.side_a} with itself")
            matches.append(match)
            round_ids.add(match.id)
        seen |= round_ids
        parsed.append(matches)
    if len(parsed[-1]) != 1:
        raise BracketError("the final round must contain exactly one match")
    return parsed


def run_tournament(bracket: Union[dict, list], items: Sequence[str], judge: Judge,
                   costs: Optional[Mapping[str, float]] = None,
                   unparsed: Optional[List[Tuple[str, str, str]]] = None) -> TournamentResult:
    """
    按对阵表逐场评审, 胜率过半者晋级

    An exact 50:50 (or all ties) advances the method with the lower cost.

    Raises:
        BracketError: 对阵表无效, 或平局时缺少成本
    """
    costs = costs or {}
    rounds = parse_bracket(bracket)
    winners: Dict[str, str] = {}
    results: List[List[MatchResult]] = []

    def resolve(side: str) -> str:
        ref = WINNER_REF.match(side)
        return winners[ref.group(1)] if ref else side

    for r, rnd in enumerate(rounds, start=1):
        round_results = []
        for match in rnd:
            a = resolve(match.side_a)
            if match.side_b is None:
                winners[match.id] = a
                round_results.append(MatchResult(match.id, a, None, a))
                logger.info(f"{match.id}: {a} 轮空晋级")
                continue

            b = resolve(match.side_b)
            if a == b:
                raise BracketError(f"{match.id} resolves to {a} on both sides")
            records = judge_items(judge, items, a, b, unparsed)
            try:
                rate_a: Optional[float] = winning_rate(records, a, b)
            except AllTiesError:
                rate_a = None

            tie_break = rate_a is None or rate_a == 50.0
            if tie_break:
                if a not in costs or b not in costs:
                    raise BracketError(f"{match.id} is tied but costs for {a} / {b} are missing")
                winner = b if costs[b] < costs[a] else a
            else:
                winner = a if rate_a > 50.0 else b

            winners[match.id] = winner
            result = MatchResult(match.id, a, b, winner, rate_a, tie_break, records)
            round_results.append(result)
            logger.info(f"{match.id}: {a} vs {b} -> {winner} ({result.winner_rate})")
        results.append(round_results)

    return TournamentResult(results, winners[rounds[-1][0].id])


def run_league(methods: Sequence[str], items: Sequence[str], judge: Judge,
               unparsed: Optional[List[Tuple[str, str, str]]] = None) -> List[MatchRecord]:
    """全循环: 每个无序方法对评审一次 (C(n, 2) 场)"""
    methods = list(dict.fromkeys(methods))
    if len(methods) < 2:
        raise NotEnoughDataError("a league needs at least two methods")
    records = []
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            logger.info(f"联赛: {a} vs {b}")
            records += judge_items(judge, items, a, b, unparsed)
    return records


# ============================================================================
# 有效率
# ============================================================================

def validity_rate(formalizations: Iterable[Optional[Formalization]], fresh_constant: str = "c0") -> float:
    """
    有效重构的百分比

    None entries (no usable formalization) and fragment errors count as invalid.

    Raises:
        NotEnoughDataError: 输入为空
    """
    total = valid = 0
    for formalization in formalizations:
        total += 1
        if formalization is None:
            continue
        try:
            if check_validity(formalization.premises, formalization.conclusion, fresh_constant).valid:
                valid += 1
        except (SolverError, FormulaError) as e:
            logger.warning(f"有效性检查失败, 记为无效: {e}")
    if total == 0:
        raise NotEnoughDataError("validity rate of an empty set")
    return 100.0 * valid / total


def formalize_for_validity(reconstructions: Iterable[Reconstruction], backend: LLMBackend,
                           config: Optional[PipelineConfig] = None) -> List[Optional[Formalization]]:
    """外部基线: 每个重构调用一次形式化, 失败记为None"""
    results = []
    for reconstruction in reconstructions:
        try:
            results.append(formalize(reconstruction, backend, config))
        except ParseError as e:
            logger.warning(f"基线形式化失败: {e}")
            results.append(None)
    return results


if __name__ == "__main__":
    rows = [
        TopsisRow("GPT-5.2 xhigh", 0.8385, 1131.07),
        TopsisRow("GPT-5.1 high", 0.3715, 1003.13),
        TopsisRow("GPT-5 high", 0.4830, 998.28),
        TopsisRow("Claude Sonnet 4.5", 0.1930, 976.42),
        TopsisRow("Gemini 3 Flash high", 0.0945, 897.10),
    ]
    for method, score in sorted(topsis(rows).items(), key=lambda kv: -kv[1]):
        print(f"{method:22s} {score:6.2f}")
