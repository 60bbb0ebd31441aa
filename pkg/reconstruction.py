"""
重构数据模型 - 论证输入、谬误报告、重构、形式化与反馈

设计理念 (CleanRL哲学):
- 单文件自包含: 流程各阶段交换的数据结构集中定义
- 透明的处理流程: 每个结构都能渲染回提示词中使用的章节格式
- 最小化抽象: 直接使用dataclass
- 便于调试: to_dict / from_dict 与轨迹文件一一对应
"""

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from fol import Formula, parse_formula, render_formula
from solver import LabeledPremises


LABEL_PATTERN = re.compile(r"^P([1-9][0-9]*)$")


# ============================================================================
# 输入
# ============================================================================

@dataclass
class ArgumentInput:
    """一条待重构的论证"""
    topic: str
    argument: str
    background: Optional[str] = None

    def __post_init__(self):
        if not (self.topic or "").strip():
            raise ValueError("topic must be nonempty")
        if not (self.argument or "").strip():
            raise ValueError("argument must be nonempty")

    def to_dict(self) -> dict:
        return {"topic": self.topic, "background": self.background, "argument": self.argument}


# ============================================================================
# 谬误报告
# ============================================================================

@dataclass
class FallacyReport:
    """
    谬误检测结果

    formal: (name, rationale) of the formal fallacy, if any
    informal: (name, rationale) pairs; may coexist with a formal fallacy
    """
    formal: Optional[Tuple[str, str]] = None
    informal: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def none_detected(self) -> bool:
        return self.formal is None and not self.informal

    @property
    def has_formal(self) -> bool:
        return self.formal is not None

    def arg_type(self) -> str:
        """Short type string handed to the faithfulness judge."""
        if self.none_detected:
            return "free of fallacies"
        parts = []
        if self.formal:
            parts.append(f"formally fallacious ({self.formal[0]})")
        if self.informal:
            names = ", ".join(name for name, _ in self.informal)
            parts.append(f"informally fallacious ({names})")
        return " and ".join(parts)

    def render(self) -> str:
        """Same section layout the detection stage asks for."""
        formal = f"{self.formal[0]}: {self.formal[1]}" if self.formal else "None"
        informal = "\n".join(f"- {n}: {r}" for n, r in self.informal) if self.informal else "None"
        return f"# Formal Fallacy\n{formal}\n\n# Informal Fallacies\n{informal}"

    def to_dict(self) -> dict:
        return {
            "formal": list(self.formal) if self.formal else None,
            "informal": [list(item) for item in self.informal],
        }

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "FallacyReport":
        if not data:
            return cls()
        formal = tuple(data["formal"]) if data.get("formal") else None
        informal = [tuple(item) for item in data.get("informal") or []]
        return cls(formal=formal, informal=informal)


# ============================================================================
# 重构
# ============================================================================

@dataclass
class Premise:
    label: str
    text: str
    implicit: bool = False

    def __post_init__(self):
        if not LABEL_PATTERN.match(self.label):
            raise ValueError(f"premise label must look like P1, P2, ...: {self.label!r}")
        if not (self.text or "").strip():
            raise ValueError(f"premise {self.label} has empty text")

    @property
    def index(self) -> int:
        return int(self.label[1:])

    def to_dict(self) -> dict:
        return {"label": self.label, "text": self.text, "implicit": self.implicit}


@dataclass
class Reconstruction:
    """
    前提-结论结构

    Labels are P1..Pn when produced by the reconstruction stage; a streamlined
    reconstruction keeps the labels that survived pruning (possibly with gaps)
    and `renumbered()` restores a consecutive sequence.
    """
    premises: List[Premise]
    conclusion: str
    intermediate_conclusions: List[str] = field(default_factory=list)
    connections: str = ""

    def __post_init__(self):
        if not self.premises:
            raise ValueError("a reconstruction needs at least one premise")
        if not (self.conclusion or "").strip():
            raise ValueError("a reconstruction needs a conclusion")
        labels = self.labels
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate premise labels: {labels}")

    @property
    def labels(self) -> List[str]:
        return [p.label for p in self.premises]

    @property
    def is_consecutive(self) -> bool:
        return self.labels == [f"P{i}" for i in range(1, len(self.premises) + 1)]

    @property
    def implicit_ratio(self) -> float:
        return sum(p.implicit for p in self.premises) / len(self.premises)

    def premise(self, label: str) -> Optional[Premise]:
        for p in self.premises:
            if p.label == label:
                return p
        return None

    def renumbered(self) -> "Reconstruction":
        premises = [Premise(f"P{i}", p.text, p.implicit) for i, p in enumerate(self.premises, start=1)]
        return Reconstruction(premises, self.conclusion, list(self.intermediate_conclusions), self.connections)

    def render_premises(self, mark_implicit: bool = True) -> str:
        lines = []
        for p in self.premises:
            marker = "(Implicit) " if (p.implicit and mark_implicit) else ""
            lines.append(f"{p.label}: {marker}{p.text}")
        return "\n".join(lines)

    def render(self) -> str:
        """Render in the section format the reconstruction parser reads back."""
        parts = ["# Argument Reconstruction", "", "## Premises", self.render_premises()]
        if self.intermediate_conclusions:
            parts += ["", "## Intermediate Conclusions"]
            parts += [f"IC{i}: {text}" for i, text in enumerate(self.intermediate_conclusions, start=1)]
        parts += ["", "## Conclusion", self.conclusion]
        if self.connections:
            parts += ["", "## Logical Connections", self.connections]
        return "\n".join(parts)

    def to_dict(self) -> dict:
        return {
            "premises": [p.to_dict() for p in self.premises],
            "intermediate_conclusions": list(self.intermediate_conclusions),
            "conclusion": self.conclusion,
            "connections": self.connections,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Reconstruction":
        return cls(
            premises=[Premise(p["label"], p["text"], bool(p.get("implicit", False))) for p in data["premises"]],
            conclusion=data["conclusion"],
            intermediate_conclusions=list(data.get("intermediate_conclusions") or []),
            connections=data.get("connections") or "",
        )


# ============================================================================
# 形式化
# ============================================================================

@dataclass
class Formalization:
    """
    Symbol keys plus labeled premise formulas and the conclusion formula.

    additions holds formulas the model proposed as missing premises; they are
    reported as feedback and never enter the premise list.
    """
    keys: Dict[str, str]
    premises: LabeledPremises
    conclusion: Formula
    additions: LabeledPremises = field(default_factory=list)
    key_params: Dict[str, List[str]] = field(default_factory=dict)  # P -> ["x"] for "P(x) = ..."

    @property
    def labels(self) -> List[str]:
        return [label for label, _ in self.premises]

    def restricted(self, labels: List[str]) -> "Formalization":
        keep = set(labels)
        return Formalization(
            dict(self.keys),
            [(l, f) for l, f in self.premises if l in keep],
            self.conclusion,
            list(self.additions),
            dict(self.key_params),
        )

    def render_keys(self) -> str:
        lines = []
        for symbol, phrase in self.keys.items():
            params = self.key_params.get(symbol)
            head = f"{symbol}({', '.join(params)})" if params else symbol
            lines.append(f"{head} = {phrase}")
        return "\n".join(lines)

    def render_premises(self, style: str = "unicode") -> str:
        return "\n".join(f"{label}: {render_formula(f, style)}" for label, f in self.premises)

    def to_dict(self) -> dict:
        return {
            "keys": dict(self.keys),
            "premises": [{"label": l, "formula": render_formula(f)} for l, f in self.premises],
            "conclusion": render_formula(self.conclusion),
            "additions": [{"label": l, "formula": render_formula(f)} for l, f in self.additions],
            "key_params": {k: list(v) for k, v in self.key_params.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Formalization":
        return cls(
            keys=dict(data["keys"]),
            premises=[(p["label"], parse_formula(p["formula"])) for p in data["premises"]],
            conclusion=parse_formula(data["conclusion"]),
            additions=[(p["label"], parse_formula(p["formula"])) for p in data.get("additions") or []],
            key_params={k: list(v) for k, v in (data.get("key_params") or {}).items()},
        )


# ============================================================================
# 反馈
# ============================================================================

class FeedbackKind:
    """反馈类型常量"""
    INVALIDITY = "Invalidity"
    ACCURACY = "Accuracy"
    COMPLETENESS = "Completeness"
    PARSIMONY = "Parsimony"
    FAITHFULNESS = "Faithfulness"  # coarse judge
    FALLACY_REVISION = "FallacyRevision"
    SOLVER_ADDITION = "SolverAddition"

    @classmethod
    def for_criterion(cls, criterion: str) -> str:
        return {
            "accuracy": cls.ACCURACY,
            "completeness": cls.COMPLETENESS,
            "parsimony": cls.PARSIMONY,
            "faithfulness": cls.FAITHFULNESS,
        }[criterion]


@dataclass
class Feedback:
    kind: str
    message: str

    def render(self) -> str:
        return f"[{self.kind}] {self.message}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "message": self.message}


@dataclass
class FaithfulnessVerdict:
    """
    忠实度判定

    verdicts maps each judged criterion to Yes (True) / No (False);
    rationales holds the criterion-specific explanation used as feedback.
    """
    verdicts: Dict[str, bool]
    rationales: Dict[str, str] = field(default_factory=dict)
    overall: bool = False
    reasoning: str = ""

    @property
    def converged(self) -> bool:
        return bool(self.verdicts) and all(self.verdicts.values()) and self.overall

    @property
    def failed(self) -> List[str]:
        return [c for c, ok in self.verdicts.items() if not ok]

    def feedback(self) -> List[Feedback]:
        items = []
        for criterion in self.failed:
            message = self.rationales.get(criterion) or self.reasoning or f"{criterion} not satisfied"
            items.append(Feedback(FeedbackKind.for_criterion(criterion), message))
        if not items and not self.overall:
            items.append(Feedback(FeedbackKind.FAITHFULNESS, self.reasoning or "reconstruction judged unfaithful"))
        return items

    def to_dict(self) -> dict:
        return {
            "verdicts": dict(self.verdicts),
            "rationales": dict(self.rationales),
            "overall": self.overall,
            "reasoning": self.reasoning,
        }
