#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
报告生成器 - Report Generator

生成语料统计、锦标赛、评分与TOPSIS的Markdown/JSON报告。
Renders corpus statistics, tournament brackets, rating tables and TOPSIS
scores as Markdown tables with a JSON twin for machine use.

设计原则 (Design Principles):
- CleanRL哲学: 单文件自包含、透明处理流程、最小化抽象、便于调试
- 模板化输出: 使用字符串拼接生成结构化表格
- 纯函数: 输入评估结果, 输出文本, 不做任何计算以外的副作用
"""

from typing import Any, Dict, List, Mapping, Optional

from loguru import logger

from dataset import SOURCES, CorpusStats, GroupStats
from evaluation import RatingTable, TournamentResult


# ============================================================================
# 格式化辅助方法 (Formatting Helpers)
# ============================================================================

def _pm(mean: float, std: float) -> str:
    return f"{mean:.2f}±{std:.2f}"


def _rate(value: Optional[float]) -> str:
    return "N/A" if value is None else f"{value:.1f}%"


def _table(header: List[str], rows: List[List[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines)


def _stats_row(name: str, s: GroupStats) -> List[str]:
    return [
        name,
        f"{s.count:,}",
        _pm(s.words_mean, s.words_std),
        _pm(s.premises_mean, s.premises_std),
        _pm(s.implicit_pct_mean, s.implicit_pct_std),
    ]


# ============================================================================
# 语料统计 (Corpus Statistics)
# ============================================================================

def corpus_stats_markdown(stats: CorpusStats, title: str = "Corpus statistics") -> str:
    """来源分组统计表, 外加作者类型分组与总计"""
    header = ["Source", "# Data", "# Words in Arguments", "# Premises", "% Implicit Premises"]
    rows = [_stats_row(SOURCES.get(tag, tag), s) for tag, s in stats.by_source.items()]
    rows.append(_stats_row("**Total**", stats.total))

    by_author = [_stats_row(kind, s) for kind, s in stats.by_author_kind.items()]
    std_kind = "population" if stats.ddof == 0 else "sample"
    parts = [
        f"# {title}",
        "",
        _table(header, rows),
        "",
        "## By author kind",
        "",
        _table(["Author"] + header[1:], by_author),
        "",
        f"_Standard deviations are {std_kind} deviations; words are whitespace tokens._",
        "",
    ]
    return "\n".join(parts)


# ============================================================================
# 锦标赛 (Tournament)
# ============================================================================

def tournament_markdown(result: TournamentResult, title: str = "Tournament results") -> str:
    """每轮一节, 每场一行, 胜者加粗, 胜率不计平局"""
    parts = [f"# {title}", ""]
    for r, matches in enumerate(result.rounds, start=1):
        rows = []
        for m in matches:
            if m.side_b is None:
                rows.append([m.match_id, f"**{m.side_a}** (bye)", "-"])
                continue
            a = f"**{m.side_a}**" if m.winner == m.side_a else m.side_a
            b = f"**{m.side_b}**" if m.winner == m.side_b else m.side_b
            note = " (lower cost)" if m.tie_break else ""
            rows.append([m.match_id, f"{a} : {b}", _rate(m.winner_rate) + note])
        parts += [f"## Round {r}", "", _table(["Match", "Pairing", "Winning rate"], rows), ""]
    parts += [f"Winner: **{result.winner}**", ""]
    return "\n".join(parts)


def tournament_json(result: TournamentResult) -> Dict[str, Any]:
    return {
        "winner": result.winner,
        "rounds": [[m.to_dict() for m in rnd] for rnd in result.rounds],
    }


# ============================================================================
# 评分与TOPSIS (Ratings and TOPSIS)
# ============================================================================

def ratings_markdown(table: RatingTable, costs: Optional[Mapping[str, float]] = None,
                     scores: Optional[Mapping[str, float]] = None, title: str = "Ratings") -> str:
    header = ["Method", "Rating", "Strength"]
    if costs:
        header.append("Cost")
    if scores:
        header.append("TOPSIS")
    rows = []
    for method, rating in table.ranked():
        row = [method, f"{rating:.2f}", f"{table.strengths[method]:.4f}"]
        if costs:
            row.append(f"{costs[method]:.4f}" if method in costs else "-")
        if scores:
            row.append(f"{scores[method]:.2f}" if method in scores else "-")
        rows.append(row)
    note = " (pseudo-counts added)" if table.regularized else ""
    return "\n".join([f"# {title}", "", _table(header, rows), "", f"_Bradley-Terry fit{note}._", ""])


def pairwise_markdown(a: str, b: str, overall: Optional[float],
                      by_group: Optional[Mapping[str, Optional[float]]] = None,
                      ties: int = 0, total: int = 0) -> str:
    """两方法成对比较报告, 可按谬误类型分组"""
    parts = [
        f"# {a} vs {b}",
        "",
        f"Winning rate of {a}: {_rate(overall)} ({total} items, {ties} ties excluded)",
        "",
    ]
    if by_group:
        rows = [[group, _rate(rate)] for group, rate in by_group.items()]
        parts += [_table(["Group", f"Winning rate of {a}"], rows), ""]
    logger.debug(f"成对比较报告: {a} vs {b}")
    return "\n".join(parts)
