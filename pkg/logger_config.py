"""
日志配置模块 - 基于loguru的统一日志系统

设计理念 (CleanRL哲学):
- 单文件自包含: sink、上下文与进度统计都在这里
- 透明的处理流程: 每条日志带上当前论证与阶段
- 最小化抽象: 直接使用loguru的bind/contextualize/patch

stdout is reserved for machine-readable CLI output, so the console sink
always writes to stderr. Credentials read from the configured environment
variable are redacted from every record before any sink sees it.
"""

import os
import sys
import time
from collections import Counter
from contextlib import contextmanager
from datetime import datetime
from functools import wraps
from pathlib import Path
from typing import Iterator, Optional

from loguru import logger

from llm_client import scrub

# ============================================================================
# 日志格式
# ============================================================================

# {extra[run]} / {extra[stage]} come from stage_context; "-" outside a run
CONSOLE_FORMAT = (
    "<green>{time:HH:mm:ss}</green> | "
    "<level>{level: <8}</level> | "
    "<magenta>{extra[run]}</magenta>:<cyan>{extra[stage]}</cyan> | "
    "<level>{message}</level>"
)

FILE_FORMAT = (
    "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | "
    "{extra[run]}:{extra[stage]} | {name}:{function}:{line} | {message}"
)


def _redactor(credential_env: str):
    def patch(record):
        secret = os.environ.get(credential_env)
        if secret:
            record["message"] = scrub(record["message"], [secret])
    return patch


def setup_logger(
    log_dir: Optional[Path] = None,
    console_level: str = "WARNING",
    file_level: str = "DEBUG",
    credential_env: str = "OPENAI_API_KEY",
    prefix: str = "gaar",
) -> None:
    """
    配置日志系统

    Args:
        log_dir: 日志目录，None则只写stderr
        console_level: stderr级别 (CLI默认WARNING，--debug时DEBUG)
        file_level: 文件日志级别
        credential_env: 需要在日志中屏蔽其值的环境变量名
        prefix: 日志文件名前缀
    """
    logger.remove()
    logger.configure(extra={"run": "-", "stage": "-"}, patcher=_redactor(credential_env))
    logger.add(sys.stderr, format=CONSOLE_FORMAT, level=console_level, colorize=True)

    if log_dir:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        day = datetime.now().strftime("%Y%m%d")
        logger.add(
            str(log_dir / f"{prefix}_{day}.log"),
            format=FILE_FORMAT,
            level=file_level,
            rotation="10 MB",
            retention="7 days",
            encoding="utf-8",
            enqueue=True,
        )

    logger.debug(f"日志系统初始化完成 (控制台: {console_level}, 目录: {log_dir or '无'})")


# ============================================================================
# 上下文与计时
# ============================================================================

@contextmanager
def stage_context(stage: str, run: Optional[str] = None, **extra) -> Iterator[None]:
    """
    Tag every record logged inside the block with the run id and stage name.

    with stage_context("fallacy revision", iteration=2):
        ...
    """
    fields = {"stage": stage}
    if run is not None:
        fields["run"] = run
    with logger.contextualize(**fields):
        logger.debug(f"开始 {extra}" if extra else "开始")
        try:
            yield
        except Exception as e:
            logger.error(f"失败: {e}")
            raise
        logger.debug("完成")


def log_time(func):
    """函数执行时间日志装饰器"""

    @wraps(func)
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        try:
            return func(*args, **kwargs)
        finally:
            logger.debug(f"{func.__name__} 耗时 {time.perf_counter() - start:.3f}s")

    return wrapper


# ============================================================================
# 批量进度
# ============================================================================

class BatchProgress:
    """
    Counts batch outcomes by run status and logs a line per finished item.

    Only the consuming thread calls `update`; workers never touch it.
    """

    def __init__(self, total: int, desc: str = "批量重构"):
        self.total = total
        self.desc = desc
        self.statuses: Counter = Counter()
        self._start = time.perf_counter()

    @property
    def done(self) -> int:
        return sum(self.statuses.values())

    def update(self, status: str, message: str = "") -> None:
        self.statuses[status] += 1
        elapsed = time.perf_counter() - self._start
        rate = self.done / elapsed if elapsed > 0 else 0.0
        eta = (self.total - self.done) / rate if rate > 0 else 0.0
        line = f"{self.desc}: {self.done}/{self.total} | {status} | 剩余约 {eta:.0f}s"
        logger.info(f"{line} | {message}" if message else line)

    def finish(self) -> None:
        counts = ", ".join(f"{k}={v}" for k, v in sorted(self.statuses.items()))
        logger.success(f"{self.desc}完成: {counts or '无条目'} ({time.perf_counter() - self._start:.1f}s)")
