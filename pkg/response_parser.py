"""
响应解析模块 - 把各阶段的LLM输出解析为结构化数据

设计理念 (CleanRL哲学):
- 单文件自包含: 所有阶段的输出格式解析集中在一处
- 透明的处理流程: 先按标题切分章节, 再逐章节解析
- 最小化抽象: 正则 + 数据类, 无额外框架
- 便于调试: ParseError 指明缺失的章节或出错的行

Headers must be written as one to three '#' followed by a space and the
title ("##Premises" is not a header). Text before the first header and
unknown sections are ignored.
"""

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from loguru import logger

from fol import FormulaError, missing_keys, parse_formula
from reconstruction import (
    FaithfulnessVerdict,
    FallacyReport,
    Formalization,
    Premise,
    Reconstruction,
)
from utils import extract_json_from_text


# ============================================================================
# 异常定义
# ============================================================================

class ParseError(ValueError):
    """响应不符合约定格式"""

    def __init__(self, message: str, section: Optional[str] = None):
        self.section = section
        super().__init__(message)


class FormalizationError(ParseError):
    """某一行公式无法解析"""

    def __init__(self, message: str, line: str, label: Optional[str] = None):
        self.line = line
        self.label = label
        super().__init__(message, section="Formalized Premises")


class KeyCoverageError(ParseError):
    """公式中的符号缺少key"""

    def __init__(self, symbols: List[str]):
        self.symbols = list(symbols)
        super().__init__(f"symbols without a key: {', '.join(self.symbols)}", section="Defined Variables/Predicates")


# ============================================================================
# 章节切分
# ============================================================================

HEADER_PATTERN = re.compile(r"^\s{0,3}(#{1,3}) +(.+?)\s*#*\s*$")
LABEL_LINE = re.compile(r"^\s*(?:[-*]\s+)?\**(P[1-9][0-9]*)\**\s*[:.)]\s*(.*)$")
IMPLICIT_MARK = re.compile(r"^\(?\s*implicit\s*\)\s*[:\-]?\s*", re.IGNORECASE)
EXPLICIT_MARK = re.compile(r"^\(?\s*explicit\s*\)\s*[:\-]?\s*", re.IGNORECASE)
BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+")
NONE_PATTERN = re.compile(r"^\W*none\W*$", re.IGNORECASE)


def _normalize_title(title: str) -> str:
    title = title.strip().strip("*").strip()
    return re.sub(r"\s+", " ", title).lower()


def split_sections(text: str) -> List[Tuple[str, str]]:
    """(normalized title, body) pairs in document order"""
    sections: List[Tuple[str, List[str]]] = []
    for line in (text or "").splitlines():
        m = HEADER_PATTERN.match(line)
        if m:
            sections.append((_normalize_title(m.group(2)), []))
        elif sections:
            sections[-1][1].append(line)
    return [(title, "\n".join(body).strip()) for title, body in sections]


def _find(sections: List[Tuple[str, str]], *titles: str) -> Optional[str]:
    """Body of the last section whose title starts with one of `titles`."""
    wanted = [_normalize_title(t) for t in titles]
    found = None
    for title, body in sections:
        if any(title == w or title.startswith(w) for w in wanted):
            found = body
    return found


def _require(sections, name: str, *aliases: str) -> str:
    body = _find(sections, name, *aliases)
    if body is None:
        raise ParseError(f"missing section '{name}'", section=name)
    return body


def _is_none(body: str) -> bool:
    return not body.strip() or bool(NONE_PATTERN.match(body.strip()))


def _strip_prefix(text: str, *prefixes: str) -> str:
    for prefix in prefixes:
        m = re.match(rf"^\s*\**{re.escape(prefix)}\**\s*[:.,]\s*", text, re.IGNORECASE)
        if m:
            return text[m.end():]
    return text


def _labeled_lines(body: str, section: str) -> List[Tuple[str, str]]:
    """Pn: text lines; unlabeled lines continue the previous entry."""
    entries: List[List[str]] = []
    for line in body.splitlines():
        if not line.strip():
            continue
        m = LABEL_LINE.match(line)
        if m:
            entries.append([m.group(1), m.group(2).strip()])
        elif entries:
            entries[-1][1] = f"{entries[-1][1]} {line.strip()}".strip()
        else:
            raise ParseError(f"unlabeled line in '{section}': {line.strip()!r}", section=section)
    return [(label, text) for label, text in entries]


def _check_consecutive(labels: Sequence[str], section: str):
    expected = [f"P{i}" for i in range(1, len(labels) + 1)]
    if list(labels) != expected:
        raise ParseError(f"premise labels in '{section}' must be {expected}, got {list(labels)}", section=section)


def _check_labels(labels: Sequence[str], expected: Sequence[str], section: str):
    if len(set(labels)) != len(labels):
        raise ParseError(f"duplicate labels in '{section}': {list(labels)}", section=section)
    if set(labels) != set(expected):
        raise ParseError(
            f"labels in '{section}' do not match: expected {list(expected)}, got {list(labels)}",
            section=section,
        )


# ============================================================================
# Stage 1: 谬误检测
# ============================================================================

def _name_rationale(line: str, section: str) -> Tuple[str, str]:
    line = BULLET.sub("", line).strip()
    if ":" not in line:
        raise ParseError(f"fallacy without rationale in '{section}': {line!r}", section=section)
    name, rationale = line.split(":", 1)
    name, rationale = name.strip().strip("*").strip(), rationale.strip()
    if not name or not rationale:
        raise ParseError(f"empty fallacy name or rationale in '{section}': {line!r}", section=section)
    return name, rationale


def parse_fallacy(text: str) -> FallacyReport:
    sections = split_sections(text)
    formal_body = _require(sections, "Formal Fallacy")
    informal_body = _require(sections, "Informal Fallacies", "Informal Fallacy")

    formal = None
    if not _is_none(formal_body):
        lines = [l for l in formal_body.splitlines() if l.strip()]
        formal = _name_rationale(" ".join(l.strip() for l in lines), "Formal Fallacy")

    informal: List[Tuple[str, str]] = []
    if not _is_none(informal_body):
        current: Optional[str] = None
        for line in informal_body.splitlines():
            if not line.strip():
                continue
            if BULLET.match(line) or current is None:
                if current is not None:
                    informal.append(_name_rationale(current, "Informal Fallacies"))
                current = line
            else:
                current = f"{current} {line.strip()}"
        if current is not None:
            informal.append(_name_rationale(current, "Informal Fallacies"))

    return FallacyReport(formal=formal, informal=informal)


# ============================================================================
# Stage 2: 重构
# ============================================================================

def _premise(label: str, text: str) -> Premise:
    implicit = bool(IMPLICIT_MARK.match(text))
    text = IMPLICIT_MARK.sub("", text)
    text = EXPLICIT_MARK.sub("", text).strip()
    return Premise(label=label, text=text, implicit=implicit)


def parse_reconstruction(text: str) -> Reconstruction:
    sections = split_sections(text)
    premises_body = _require(sections, "Premises")
    conclusion_body = _require(sections, "Conclusion")

    entries = _labeled_lines(premises_body, "Premises")
    if not entries:
        raise ParseError("no premises listed", section="Premises")
    _check_consecutive([label for label, _ in entries], "Premises")
    try:
        premises = [_premise(label, body) for label, body in entries]
    except ValueError as e:
        raise ParseError(str(e), section="Premises") from e

    conclusion = " ".join(l.strip() for l in conclusion_body.splitlines() if l.strip())
    conclusion = _strip_prefix(conclusion, "C", "Conclusion")
    conclusion = _strip_prefix(conclusion, "Therefore").strip()
    if not conclusion:
        raise ParseError("empty conclusion", section="Conclusion")

    intermediate: List[str] = []
    ic_body = _find(sections, "Intermediate Conclusions")
    if ic_body and not _is_none(ic_body):
        for line in ic_body.splitlines():
            line = BULLET.sub("", line).strip()
            line = re.sub(r"^\**IC\s*[0-9]+\**\s*[:.)]\s*", "", line)
            if line:
                intermediate.append(line)

    connections = _find(sections, "Logical Connections") or ""
    return Reconstruction(
        premises=premises,
        conclusion=conclusion,
        intermediate_conclusions=intermediate,
        connections=connections.strip(),
    )


# ============================================================================
# Stage 3: 形式化
# ============================================================================

KEY_LINE = re.compile(r"^\s*(?:[-*]\s+)?([A-Za-z_][A-Za-z0-9_]*)\s*(?:\(([^)]*)\))?\s*(?:=|:)\s*(.*)$")


def _parse_keys(body: str) -> Tuple[Dict[str, str], Dict[str, List[str]]]:
    keys: Dict[str, str] = {}
    params: Dict[str, List[str]] = {}
    current: Optional[str] = None
    for line in body.splitlines():
        if not line.strip():
            continue
        m = KEY_LINE.match(line)
        if m:
            current = m.group(1)
            keys[current] = m.group(3).strip()
            if m.group(2) is not None:
                params[current] = [p.strip() for p in m.group(2).split(",") if p.strip()]
        elif current is not None:
            keys[current] = f"{keys[current]} {line.strip()}".strip()
        else:
            raise ParseError(f"unreadable key line: {line.strip()!r}", section="Defined Variables/Predicates")
    empty = [k for k, v in keys.items() if not v]
    if empty:
        raise ParseError(f"empty key phrase for {empty}", section="Defined Variables/Predicates")
    return keys, params


def _formula(text: str, line: str, label: Optional[str]):
    try:
        return parse_formula(text)
    except FormulaError as e:
        raise FormalizationError(f"cannot parse {label or 'formula'}: {e}", line=line.strip(), label=label) from e


def parse_formalization(text: str, labels: Optional[Sequence[str]] = None) -> Formalization:
    """
    解析形式化输出

    Args:
        labels: 期望的前提标签 (来自重构); None则要求 P1..Pn 连续
    """
    sections = split_sections(text)
    keys_body = _require(sections, "Defined Variables/Predicates", "Defined Variables", "Keys")
    premises_body = _require(sections, "Formalized Premises")
    conclusion_body = _require(sections, "Formalized Conclusion")

    keys, params = _parse_keys(keys_body)

    entries = _labeled_lines(premises_body, "Formalized Premises")
    found = [label for label, _ in entries]
    if labels is None:
        _check_consecutive(found, "Formalized Premises")
    else:
        _check_labels(found, labels, "Formalized Premises")
    order = {label: i for i, label in enumerate(labels or found)}
    entries.sort(key=lambda e: order[e[0]])
    premises = [(label, _formula(body, f"{label}: {body}", label)) for label, body in entries]

    conclusion_lines = [l.strip() for l in conclusion_body.splitlines() if l.strip()]
    if not conclusion_lines:
        raise ParseError("empty formalized conclusion", section="Formalized Conclusion")
    conclusion_text = _strip_prefix(conclusion_lines[0], "C", "Conclusion")
    conclusion = _formula(conclusion_text, conclusion_lines[0], "conclusion")

    additions = []
    additions_body = _find(sections, "Additional Premises")
    if additions_body and not _is_none(additions_body):
        lines = [BULLET.sub("", l).strip() for l in additions_body.splitlines() if l.strip()]
        for i, line in enumerate(lines, start=1):
            body = re.sub(r"^[A-Za-z]*[0-9]+\s*:\s*", "", line)
            additions.append((f"A{i}", _formula(body, line, f"A{i}")))

    formulas = [f for _, f in premises] + [conclusion] + [f for _, f in additions]
    try:
        missing = missing_keys(keys, formulas)
    except FormulaError as e:
        raise FormalizationError(str(e), line="", label=None) from e
    if missing:
        raise KeyCoverageError(missing)

    return Formalization(keys=keys, premises=premises, conclusion=conclusion, additions=additions, key_params=params)


# ============================================================================
# Stage 5: 流线化
# ============================================================================

def parse_streamline(text: str, template: Optional[Reconstruction] = None,
                     labels: Optional[Sequence[str]] = None) -> Reconstruction:
    """
    解析流线化输出

    Args:
        template: Stage 2 reconstruction; implicit flags are carried over by label
        labels: labels of the (possibly pruned) formalization
    """
    sections = split_sections(text)
    premises_body = _require(sections, "NL Premises")
    conclusion_body = _require(sections, "NL Conclusion")

    entries = _labeled_lines(premises_body, "NL Premises")
    if not entries:
        raise ParseError("no premises listed", section="NL Premises")
    found = [label for label, _ in entries]
    if labels is not None:
        _check_labels(found, labels, "NL Premises")
        order = {label: i for i, label in enumerate(labels)}
        entries.sort(key=lambda e: order[e[0]])

    premises = []
    for label, body in entries:
        previous = template.premise(label) if template else None
        body = EXPLICIT_MARK.sub("", IMPLICIT_MARK.sub("", body)).strip()
        if not body:
            raise ParseError(f"empty sentence for {label}", section="NL Premises")
        premises.append(Premise(label, body, previous.implicit if previous else False))

    conclusion = " ".join(l.strip() for l in conclusion_body.splitlines() if l.strip())
    conclusion = _strip_prefix(conclusion, "C", "Conclusion").strip()
    if not conclusion:
        raise ParseError("empty conclusion", section="NL Conclusion")

    return Reconstruction(premises=premises, conclusion=conclusion)


# ============================================================================
# Stage 6: 忠实度判定
# ============================================================================

CRITERION_TITLES = {
    "accuracy": ("Accuracy",),
    "completeness": ("Completeness",),
    "parsimony": ("Parsimony",),
}
YES_NO = re.compile(r"^[\W_]*(yes|no)\b[\W_]*", re.IGNORECASE)


def _yes_no(body: str, section: str) -> Tuple[bool, str]:
    body = body.strip()
    m = YES_NO.match(body)
    if not m:
        raise ParseError(f"'{section}' must start with Yes or No", section=section)
    return m.group(1).lower() == "yes", body[m.end():].strip()


def parse_faithfulness(text: str, criteria: Sequence[str] = ("accuracy", "completeness", "parsimony")) -> FaithfulnessVerdict:
    """
    解析忠实度判定

    Every requested criterion needs its own Yes/No section. In coarse mode
    (criteria == ("faithfulness",)) only the overall verdict is read.
    """
    sections = split_sections(text)
    overall, _ = _yes_no(_require(sections, "Faithfulness"), "Faithfulness")
    reasoning = (_find(sections, "Reasoning") or "").strip()

    verdicts: Dict[str, bool] = {}
    rationales: Dict[str, str] = {}
    for criterion in criteria:
        if criterion == "faithfulness":
            verdicts[criterion], rationales[criterion] = overall, reasoning
            continue
        body = _require(sections, criterion.capitalize(), *CRITERION_TITLES[criterion])
        verdicts[criterion], rationales[criterion] = _yes_no(body, criterion.capitalize())

    logger.debug(f"忠实度判定: overall={overall}, {verdicts}")
    return FaithfulnessVerdict(verdicts=verdicts, rationales=rationales, overall=overall, reasoning=reasoning)


# ============================================================================
# 成对评判
# ============================================================================

JUDGMENT_VALUE = re.compile(r"^(A|B)(\+{1,5})$")
JUDGED_CRITERIA = ("accuracy", "completeness", "parsimony")


@dataclass(frozen=True)
class CriterionOutcome:
    """winner: A / B / TIE; disparity 1-5 (0 for TIE)"""
    winner: str
    disparity: int = 0

    def render(self) -> str:
        return "TIE" if self.winner == "TIE" else self.winner + "+" * self.disparity


@dataclass
class PairwiseJudgment:
    criteria: Dict[str, CriterionOutcome]
    overall: str
    reasoning: str = ""

    def swapped(self) -> "PairwiseJudgment":
        """The same judgment seen with A and B exchanged."""
        flip = {"A": "B", "B": "A", "TIE": "TIE"}
        return PairwiseJudgment(
            criteria={c: CriterionOutcome(flip[o.winner], o.disparity) for c, o in self.criteria.items()},
            overall=flip[self.overall],
            reasoning=self.reasoning,
        )

    def to_dict(self) -> dict:
        data = {c: o.render() for c, o in self.criteria.items()}
        data["overall_winner"] = self.overall
        data["reasoning"] = self.reasoning
        return data


def _outcome(value, criterion: str) -> CriterionOutcome:
    if not isinstance(value, str):
        raise ParseError(f"{criterion} must be a string, got {value!r}", section=criterion)
    value = value.strip().upper()
    if value == "TIE":
        return CriterionOutcome("TIE", 0)
    m = JUDGMENT_VALUE.match(value)
    if not m:
        raise ParseError(f"illegal judgment for {criterion}: {value!r}", section=criterion)
    return CriterionOutcome(m.group(1), len(m.group(2)))


def parse_pairwise_judgment(text: str) -> PairwiseJudgment:
    data = extract_json_from_text(text or "")
    if data is None:
        raise ParseError("no JSON object in judgment", section="judgment")

    lowered = {str(k).strip().lower(): v for k, v in data.items()}
    criteria = {}
    for criterion in JUDGED_CRITERIA:
        if criterion not in lowered:
            raise ParseError(f"judgment is missing '{criterion}'", section=criterion)
        criteria[criterion] = _outcome(lowered[criterion], criterion)

    overall = lowered.get("overall_winner")
    if not isinstance(overall, str) or overall.strip().upper() not in ("A", "B", "TIE"):
        raise ParseError(f"illegal overall_winner: {overall!r}", section="overall_winner")

    reasoning = lowered.get("reasoning") or ""
    return PairwiseJudgment(criteria=criteria, overall=overall.strip().upper(), reasoning=str(reasoning))
