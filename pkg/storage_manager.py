#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
存储管理器 - 轨迹、旁路日志与报告的分层存储

设计理念 (CleanRL Philosophy):
- 单文件自包含: 完整的存储功能实现
- 透明的处理流程: 每次运行一个JSON轨迹文件
- 最小化抽象: 直接的文件操作
- 便于调试: 详细的存储日志

目录结构:
outputs/
├── traces/           # 每次重构运行的完整轨迹 (JSON)
├── sidecar/          # 批处理中未收敛/失败条目 (JSONL)
├── reports/          # 生成的报告 (Markdown / JSON)
└── logs/             # 日志文件
"""

import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger

from config import StorageConfig
from utils import append_jsonl, canonical_json, safe_read_json, safe_write_json


# ============================================================================
# 数据结构
# ============================================================================

@dataclass
class StorageStats:
    """存储统计信息"""
    traces_saved: int = 0
    sidecar_lines: int = 0
    reports_saved: int = 0
    total_size_bytes: int = 0
    by_status: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "traces_saved": self.traces_saved,
            "sidecar_lines": self.sidecar_lines,
            "reports_saved": self.reports_saved,
            "total_size_mb": round(self.total_size_bytes / (1024 * 1024), 2),
            "by_status": dict(self.by_status),
        }


def slugify(text: str, max_length: int = 40) -> str:
    """文件名安全的短名称"""
    slug = re.sub(r"[^A-Za-z0-9]+", "-", text or "").strip("-").lower()
    return slug[:max_length].rstrip("-") or "item"


# ============================================================================
# 存储管理器
# ============================================================================

class StorageManager:
    """
    存储管理器

    使用示例:
        storage = StorageManager(config.storage)
        path = storage.save_trace(trace, item_id="arg-001")
        storage.record_sidecar("batch", {"id": "arg-002", "status": "Exhausted"})
    """

    def __init__(self, config: Optional[StorageConfig] = None):
        self.config = config or StorageConfig()
        self.config.create_dirs()
        self._stats = StorageStats()
        logger.info(f"存储管理器初始化完成: {self.config.base_dir}")

    @property
    def stats(self) -> StorageStats:
        return self._stats

    # ------------------------------------------------------------------
    # 轨迹
    # ------------------------------------------------------------------

    def save_trace(self, trace, item_id: Optional[str] = None) -> Path:
        """
        保存一次运行的轨迹

        The file name carries the trace hash, so replaying a run writes to
        the same file with identical content.
        """
        data = trace.to_dict()
        trace_hash = trace.trace_hash()
        data["trace_hash"] = trace_hash
        name = f"{slugify(item_id or trace.input.topic)}_{trace_hash[:12]}.json"
        path = self.config.traces_path / name
        if not safe_write_json(path, data):
            raise OSError(f"could not write trace {path}")

        self._stats.traces_saved += 1
        self._stats.total_size_bytes += path.stat().st_size
        status = trace.status or "unknown"
        self._stats.by_status[status] = self._stats.by_status.get(status, 0) + 1
        logger.debug(f"轨迹已保存: {path} ({status})")
        return path

    def load_trace(self, path: Path) -> Dict[str, Any]:
        data = safe_read_json(Path(path))
        if data is None:
            raise FileNotFoundError(f"trace not readable: {path}")
        return data

    def list_traces(self) -> List[Path]:
        return sorted(self.config.traces_path.glob("*.json"))

    # ------------------------------------------------------------------
    # 旁路日志
    # ------------------------------------------------------------------

    def sidecar_file(self, name: str) -> Path:
        return self.config.sidecar_path / f"{slugify(name)}.sidecar.jsonl"

    def record_sidecar(self, name: str, entry: Dict[str, Any]) -> Path:
        path = self.sidecar_file(name)
        append_jsonl(path, entry)
        self._stats.sidecar_lines += 1
        return path

    # ------------------------------------------------------------------
    # 报告
    # ------------------------------------------------------------------

    def save_report(self, name: str, markdown: str, data: Optional[Dict[str, Any]] = None) -> Path:
        """保存Markdown报告, 可选同名JSON"""
        path = self.config.reports_path / f"{slugify(name)}.md"
        path.write_text(markdown, encoding="utf-8")
        if data is not None:
            safe_write_json(path.with_suffix(".json"), data)
        self._stats.reports_saved += 1
        logger.info(f"报告已保存: {path}")
        return path

    def write_manifest(self) -> Path:
        """记录本次会话的存储统计"""
        path = self.config.base_dir / "manifest.json"
        manifest = {
            "updated_at": datetime.now().isoformat(timespec="seconds"),
            "stats": self._stats.to_dict(),
            "traces": [p.name for p in self.list_traces()],
        }
        safe_write_json(path, manifest)
        logger.debug(f"manifest: {canonical_json(manifest['stats'])}")
        return path


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        storage = StorageManager(StorageConfig(base_dir=Path(tmp)))
        storage.record_sidecar("demo", {"id": "x", "status": "Failed"})
        print(storage.stats.to_dict())
