"""
配置管理模块 - 集中管理论证重构引擎的所有配置

设计理念 (CleanRL哲学):
- 单文件自包含: 所有配置集中在一个文件
- 透明的处理流程: 配置项清晰可见
- 最小化抽象: 直接使用dataclass，无复杂继承
- 便于调试: 支持配置打印和验证

Configuration sections:
- LLMConfig: chat-completion endpoint, decoding parameters, retry/rate-limit budget
- SolverConfig: premise enumeration cap and Herbrand fallback constant
- PipelineConfig: iteration caps, fallacy revision threshold, ablation toggles
- EvalConfig: Bradley-Terry / Elo scale, judge swap mode, statistics ddof
- StorageConfig: output directory layout
"""

import os
import sys
import json
import traceback
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Tuple
from pathlib import Path

from loguru import logger


# ============================================================================
# 错误处理工具
# ============================================================================

def get_err_message() -> str:
    """获取详细的错误信息"""
    exc_type, exc_value, exc_traceback = sys.exc_info()
    error_message = repr(
        traceback.format_exception(exc_type, exc_value, exc_traceback)
    )
    return error_message


class ConfigError(ValueError):
    """配置无效 (collects every violated constraint)"""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# ============================================================================
# 常量
# ============================================================================

CRITERIA: Tuple[str, ...] = ("accuracy", "completeness", "parsimony")
SCHEME_THEORIES: Tuple[str, ...] = ("general", "specific")


# ============================================================================
# 配置数据类
# ============================================================================

@dataclass
class LLMConfig:
    """LLM配置 (OpenAI兼容端点)"""
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-5.1"

    # 生成参数 (所有阶段 temperature=0)
    temperature: float = 0.0
    max_tokens: int = 4096
    timeout: int = 120

    # 重试配置
    max_retries: int = 3
    retry_delay: float = 1.0
    backoff_factor: float = 2.0

    # 限流: 两次实时请求之间的最小间隔 (秒)
    request_interval: float = 0.0

    # 凭证只从环境变量读取，配置中只保存变量名
    credential_env: str = "OPENAI_API_KEY"

    def resolve_api_key(self) -> Optional[str]:
        """从环境变量读取API key"""
        return os.environ.get(self.credential_env)


@dataclass
class SolverConfig:
    """求解器配置"""
    premise_cap: int = 16
    fresh_constant: str = "c0"
    strict_cap: bool = False  # True: 超过上限时抛出 CapExceededError


@dataclass
class PipelineConfig:
    """
    GAAR流程配置

    The toggles mirror the ablation rows: scheme instruction, coarse vs
    fine-grained faithfulness, each criterion removable, fallacy path
    removable, pruning removable.
    """
    max_iterations: int = 10
    fallacy_revision_threshold: int = 3
    max_fallacy_revisions: int = 2
    scheme_theory: str = "general"

    # 消融开关
    fallacy_path: bool = True
    fine_grained_faithfulness: bool = True
    criteria: Tuple[str, ...] = CRITERIA
    scheme_instruction: bool = True
    pruning: bool = True

    premise_cap: int = 16
    reprompt_budget: int = 1

    def validate(self) -> List[str]:
        """返回所有违反的约束"""
        errors = []
        if self.max_iterations < 1:
            errors.append("max_iterations必须大于0")
        if not (1 <= self.fallacy_revision_threshold < self.max_iterations):
            errors.append(
                f"fallacy_revision_threshold必须满足 1 <= N < max_iterations "
                f"(N={self.fallacy_revision_threshold}, max={self.max_iterations})"
            )
        if self.max_fallacy_revisions < 0:
            errors.append("max_fallacy_revisions不能为负")
        if self.scheme_theory not in SCHEME_THEORIES:
            errors.append(f"未知的scheme_theory: {self.scheme_theory}")
        unknown = [c for c in self.criteria if c not in CRITERIA]
        if unknown:
            errors.append(f"未知的faithfulness criteria: {unknown}")
        if len(set(self.criteria)) != len(self.criteria):
            errors.append("criteria包含重复项")
        if self.premise_cap < 1:
            errors.append("premise_cap必须大于0")
        if self.reprompt_budget < 0:
            errors.append("reprompt_budget不能为负")
        return errors

    def check(self) -> "PipelineConfig":
        errors = self.validate()
        if errors:
            for err in errors:
                logger.error(f"配置错误: {err}")
            raise ConfigError(errors)
        return self

    @property
    def active_criteria(self) -> Tuple[str, ...]:
        """Criteria judged in stage 6; coarse mode collapses them into one."""
        if not self.criteria:
            return ()
        if not self.fine_grained_faithfulness:
            return ("faithfulness",)
        return tuple(c for c in CRITERIA if c in self.criteria)


@dataclass
class EvalConfig:
    """评估配置 (Bradley-Terry / Elo-like scaling, TOPSIS)"""
    base: float = 10.0
    scale: float = 400.0
    initial_rating: float = 1000.0
    pseudo_count: float = 0.5
    max_bt_iterations: int = 10000
    bt_tolerance: float = 1e-12

    swap_positions: bool = False
    ddof: int = 0  # 0 = population std


@dataclass
class StorageConfig:
    """存储配置"""
    base_dir: Path = field(default_factory=lambda: Path("./outputs"))

    # 子目录结构
    traces_dir: str = "traces"
    reports_dir: str = "reports"
    logs_dir: str = "logs"
    sidecar_dir: str = "sidecar"

    def __post_init__(self):
        self.base_dir = Path(self.base_dir)

    @property
    def traces_path(self) -> Path:
        return self.base_dir / self.traces_dir

    @property
    def reports_path(self) -> Path:
        return self.base_dir / self.reports_dir

    @property
    def logs_path(self) -> Path:
        return self.base_dir / self.logs_dir

    @property
    def sidecar_path(self) -> Path:
        return self.base_dir / self.sidecar_dir

    def create_dirs(self):
        """创建所有必要的目录"""
        for path in [self.traces_path, self.reports_path,
                     self.logs_path, self.sidecar_path]:
            path.mkdir(parents=True, exist_ok=True)


@dataclass
class Config:
    """
    主配置类 - 聚合所有子配置

    使用方式:
        config = Config()
        config.pipeline.max_iterations = 5
        config.llm.model = "gpt-5"
        config.validate()
    """
    llm: LLMConfig = field(default_factory=LLMConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    storage: StorageConfig = field(default_factory=StorageConfig)

    debug: bool = False
    seed: int = 0

    def validate(self) -> bool:
        """验证配置有效性, 失败时抛出 ConfigError"""
        errors = list(self.pipeline.validate())

        if not self.llm.base_url:
            errors.append("LLM base_url不能为空")
        if not self.llm.credential_env:
            errors.append("credential_env不能为空")
        if self.llm.max_retries < 1:
            errors.append("max_retries必须大于0")
        if self.solver.premise_cap < 1:
            errors.append("solver premise_cap必须大于0")
        if self.evaluation.scale <= 0 or self.evaluation.base <= 1:
            errors.append("Elo scale必须为正且base必须大于1")
        if self.evaluation.pseudo_count < 0:
            errors.append("pseudo_count不能为负")
        if self.evaluation.ddof not in (0, 1):
            errors.append("ddof只能是0或1")

        if errors:
            for err in errors:
                logger.error(f"配置错误: {err}")
            raise ConfigError(errors)
        return True

    def to_dict(self) -> dict:
        """转换为字典格式"""
        data = asdict(self)
        data["storage"]["base_dir"] = str(self.storage.base_dir)
        data["pipeline"]["criteria"] = list(self.pipeline.criteria)
        return data

    def print_config(self):
        """打印当前配置 (stderr, stdout留给机器可读输出)"""
        print("=" * 60, file=sys.stderr)
        print("当前配置:", file=sys.stderr)
        print("=" * 60, file=sys.stderr)
        print(json.dumps(self.to_dict(), indent=2, ensure_ascii=False), file=sys.stderr)
        print("=" * 60, file=sys.stderr)


# ============================================================================
# 模块测试
# ============================================================================

if __name__ == "__main__":
    config = Config()
    config.print_config()

    print("\n验证配置...")
    try:
        config.validate()
        print("配置验证通过!")
    except ConfigError as e:
        print(f"配置验证失败: {e.errors}")

    print("active criteria:", config.pipeline.active_criteria)
