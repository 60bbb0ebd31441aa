"""
提示词模板模块 - [[PLACEHOLDER]] 模板加载、渲染与论证类型目录

设计理念 (CleanRL哲学):
- 单文件自包含: 模板与论证类型目录的加载逻辑集中管理
- 透明的处理流程: 模板是 prompts/ 下的纯文本文件, 目录是 schemes/ 下的JSON
- 最小化抽象: 渲染就是逐个占位符替换
- 便于调试: 缺失占位符直接报错, 多余绑定记录警告
"""

import re
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Optional

from loguru import logger


PROMPTS_DIR = Path(__file__).resolve().parent / "prompts"
SCHEMES_DIR = Path(__file__).resolve().parent / "schemes"

PLACEHOLDER_PATTERN = re.compile(r"\[\[([A-Z][A-Z0-9_]*)\]\]")

# 目录条目数
CATALOG_SIZES = {"general": 4, "specific": 60}


class MissingPlaceholderError(KeyError):
    """渲染时缺少必需的占位符绑定"""

    def __init__(self, template: str, missing):
        self.template = template
        self.missing = sorted(missing)
        super().__init__(f"template {template!r} is missing bindings for {self.missing}")


class CatalogError(ValueError):
    """论证类型目录文件无效"""


# ============================================================================
# 模板
# ============================================================================

@dataclass(frozen=True)
class PromptTemplate:
    """
    提示词模板

    Attributes:
        name: 模板名称 (也是cassette key的一部分)
        body: 含 [[PLACEHOLDER]] 的正文
    """
    name: str
    body: str

    @property
    def required(self) -> FrozenSet[str]:
        return frozenset(PLACEHOLDER_PATTERN.findall(self.body))


@lru_cache(maxsize=None)
def load_template(name: str, directory: Optional[Path] = None) -> PromptTemplate:
    """从 prompts/<name>.txt 加载模板"""
    directory = Path(directory) if directory else PROMPTS_DIR
    path = directory / f"{name}.txt"
    if not path.exists():
        raise FileNotFoundError(f"prompt template not found: {path}")
    body = path.read_text(encoding="utf-8")
    logger.debug(f"加载模板 {name} ({len(body)} 字符)")
    return PromptTemplate(name=name, body=body)


def render_prompt(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """
    渲染模板

    Substitution is a single left-to-right pass over the template body, so
    bound values are inserted verbatim and never rescanned for placeholders.

    Raises:
        MissingPlaceholderError: 必需占位符没有绑定
    """
    required = template.required
    missing = required - set(bindings)
    if missing:
        raise MissingPlaceholderError(template.name, missing)

    extra = set(bindings) - required
    if extra:
        logger.warning(f"模板 {template.name} 忽略了未使用的绑定: {sorted(extra)}")

    return PLACEHOLDER_PATTERN.sub(lambda m: str(bindings[m.group(1)]), template.body)


# ============================================================================
# 论证类型目录
# ============================================================================

@dataclass
class ArgumentScheme:
    """一种论证类型 (general: 4种, specific: 60种)"""
    theory: str
    id: str
    name: str
    description: str
    template: str
    subtypes: List[Dict[str, str]] = field(default_factory=list)

    def render_description(self) -> str:
        text = f"{self.id}. {self.name}: {self.description}"
        if self.subtypes:
            names = ", ".join(f"{s['id']} {s['name']}" for s in self.subtypes)
            text += f" Variants: {names}."
        return text

    def render_template(self) -> str:
        lines = [f"{self.id}. {self.name}", self.template]
        for sub in self.subtypes:
            if sub.get("template"):
                lines += [f"{sub['id']}. {sub['name']}", sub["template"]]
        return "\n".join(lines)


@lru_cache(maxsize=None)
def _load_catalog(theory: str, directory: Path) -> tuple:
    path = directory / f"{theory}.json"
    if not path.exists():
        raise CatalogError(f"scheme catalog not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CatalogError(f"{path}: {e}") from e

    schemes = tuple(
        ArgumentScheme(
            theory=theory,
            id=str(entry["id"]),
            name=entry["name"],
            description=entry.get("description", ""),
            template=entry.get("template", ""),
            subtypes=list(entry.get("subtypes") or []),
        )
        for entry in data["schemes"]
    )
    expected = CATALOG_SIZES.get(theory)
    if expected is not None and len(schemes) != expected:
        raise CatalogError(f"{theory} catalog must have {expected} entries, found {len(schemes)}")
    ids = [s.id for s in schemes]
    if len(set(ids)) != len(ids):
        raise CatalogError(f"{theory} catalog has duplicate ids")
    return schemes


def load_scheme_catalog(theory: str, directory: Optional[Path] = None) -> List[ArgumentScheme]:
    """加载 general / specific 论证类型目录"""
    if theory not in CATALOG_SIZES:
        raise CatalogError(f"unknown scheme theory: {theory}")
    return list(_load_catalog(theory, Path(directory) if directory else SCHEMES_DIR))


def render_scheme_block(schemes: List[ArgumentScheme]) -> str:
    """
    渲染重构提示中的论证类型说明与重构指南

    An empty list yields an empty block (the no-scheme-instruction ablation).
    """
    if not schemes:
        return ""
    header = (
        f"Identify which of the {len(schemes)} argument types below the argument uses; "
        "it may combine several of them."
    )
    descriptions = "\n".join(s.render_description() for s in schemes)
    guidelines = "\n\n".join(s.render_template() for s in schemes)
    return (
        f"## Argument Types\n{header}\n{descriptions}\n\n"
        f"## Reconstruction Guidelines Based on Argument Types\n{guidelines}\n"
    )


if __name__ == "__main__":
    for theory in ("general", "specific"):
        catalog = load_scheme_catalog(theory)
        print(f"{theory}: {len(catalog)} schemes, first = {catalog[0].name}")

    t = load_template("streamlining")
    print("streamlining placeholders:", sorted(t.required))
