"""
工具函数模块 - 哈希、JSON与JSON Lines读写

设计理念 (CleanRL哲学):
- 单文件自包含: 所有工具函数集中管理
- 最小化抽象: 直接的函数实现

Shared by the cassette store, trace persistence and corpus tooling. Every
hash in the repo is SHA-256 over canonical JSON or UTF-8 text.
"""

import os
import json
import hashlib
import tempfile
from typing import Dict, Any, Iterable, Iterator, Optional, Tuple
from pathlib import Path

from loguru import logger


def word_count(text: str) -> int:
    """Whitespace tokenization."""
    return len(text.split()) if text else 0


def extract_json_from_text(text: str) -> Optional[Dict]:
    """
    Return the first JSON object embedded in `text`, or None.

    Judgments may arrive inside markdown fences or surrounded by chatter.
    """
    decoder = json.JSONDecoder()
    start = text.find("{")
    while start != -1:
        try:
            data, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            start = text.find("{", start + 1)
            continue
        if isinstance(data, dict):
            return data
        start = text.find("{", start + 1)
    return None


# ============================================================================
# 哈希
# ============================================================================

def canonical_json(data: Any) -> str:
    """Sorted keys, no insignificant whitespace, UTF-8 kept as-is."""
    return json.dumps(data, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def compute_hash(content: str) -> str:
    return hashlib.sha256(content.encode("utf-8")).hexdigest()


def hash_object(data: Any) -> str:
    return compute_hash(canonical_json(data))


# ============================================================================
# 文件操作
# ============================================================================

def safe_write_json(filepath: Path, data: Any, indent: int = 2) -> bool:
    """
    Write JSON through a temp file in the same directory, then rename.

    A crashed batch never leaves a half-written trace behind. Returns False
    (and logs) instead of raising.
    """
    filepath = Path(filepath)
    tmp = None
    try:
        filepath.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=filepath.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(data, f, ensure_ascii=False, indent=indent)
        os.replace(tmp, filepath)
        return True
    except (OSError, TypeError, ValueError) as e:
        logger.error(f"写入JSON失败 ({filepath}): {e}")
        if tmp and os.path.exists(tmp):
            os.remove(tmp)
        return False


def safe_read_json(filepath: Path) -> Optional[Any]:
    filepath = Path(filepath)
    if not filepath.exists():
        return None
    try:
        return json.loads(filepath.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"解析JSON失败 ({filepath}): {e}")
        return None


def iter_jsonl(filepath: Path) -> Iterator[Tuple[int, str]]:
    """Yield (1-based line number, stripped line) for non-blank lines."""
    with open(filepath, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if line:
                yield lineno, line


def write_jsonl(filepath: Path, rows: Iterable[Dict[str, Any]]) -> int:
    """Overwrite `filepath` with one JSON object per line; returns row count."""
    filepath = Path(filepath)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(filepath, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
            count += 1
    return count


def append_jsonl(filepath: Path, row: Dict[str, Any]) -> None:
    filepath = Path(filepath)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    with open(filepath, "a", encoding="utf-8") as f:
        f.write(json.dumps(row, ensure_ascii=False) + "\n")
