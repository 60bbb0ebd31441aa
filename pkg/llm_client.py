"""
LLM客户端模块 - 后端抽象、OpenAI兼容调用与cassette录制/回放

设计理念 (CleanRL哲学):
- 单文件自包含: 所有LLM交互逻辑集中管理
- 透明的处理流程: 请求/响应流程清晰, 每次调用都有快照
- 最小化抽象: 三种后端 (live / replay / scripted) 共享一个 complete() 接口
- 便于调试: 详细的请求日志, 离线回放保证确定性

后端:
- LiveBackend: openai包调用OpenAI兼容端点, 带重试、退避和请求间隔限流
- ReplayBackend: 只从cassette读取, 未命中即报错, 从不联网
- ScriptedBackend: 按顺序返回预设响应, 用完即报错
- RecordingBackend: 包装任意后端, 把每次请求/响应追加到cassette
"""

import json
import time
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

from loguru import logger
from openai import OpenAI, APIConnectionError, APIStatusError, APITimeoutError, RateLimitError

from config import LLMConfig
from utils import append_jsonl, hash_object, iter_jsonl


# ============================================================================
# 异常定义
# ============================================================================

class BackendError(RuntimeError):
    """后端调用失败 (pipeline attaches the partial trace as `.trace`)"""
    trace = None


class TransportError(BackendError):
    """网络/服务端错误, 重试预算耗尽"""


class RateLimitedError(BackendError):
    """限流, 重试预算耗尽"""


class CacheMissError(BackendError):
    """回放模式下cassette中没有该请求"""


class ScriptExhaustedError(BackendError):
    """脚本后端的响应已用完"""


class CassetteError(BackendError):
    """cassette文件损坏"""


# ============================================================================
# 数据结构
# ============================================================================

@dataclass
class CompletionRequest:
    """
    一次补全请求

    The cassette key covers the template name, the bindings and the decoding
    parameters; the rendered prompt and the model id are not part of it.
    """
    template: str
    bindings: Dict[str, str]
    prompt: str
    model: str
    temperature: float = 0.0
    max_tokens: int = 4096

    def key(self) -> str:
        return request_key(self.snapshot())

    def snapshot(self) -> Dict[str, Any]:
        return {
            "template": self.template,
            "model": self.model,
            "bindings": dict(self.bindings),
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass
class CompletionResponse:
    """补全结果"""
    text: str
    model: str = ""
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency: float = 0.0
    source: str = "live"  # live / replay / scripted

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token usage must be nonnegative")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def usage(self) -> Dict[str, int]:
        return {"prompt_tokens": self.prompt_tokens, "completion_tokens": self.completion_tokens}


def request_key(snapshot: Dict[str, Any]) -> str:
    """sha256 over (template, bindings, temperature, max_tokens)"""
    return hash_object({
        "template": snapshot["template"],
        "bindings": snapshot["bindings"],
        "temperature": snapshot["temperature"],
        "max_tokens": snapshot["max_tokens"],
    })


@dataclass
class UsageMeter:
    """线程安全的token用量统计"""
    calls: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, response: CompletionResponse):
        with self._lock:
            self.calls += 1
            self.prompt_tokens += response.prompt_tokens
            self.completion_tokens += response.completion_tokens

    def to_dict(self) -> Dict[str, int]:
        return {
            "calls": self.calls,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }


# ============================================================================
# 凭证清洗
# ============================================================================

REDACTED = "[REDACTED]"


def scrub(value: Any, secrets: Sequence[str]) -> Any:
    """Replace every occurrence of a secret in nested str/dict/list values."""
    secrets = [s for s in secrets if s]
    if not secrets:
        return value
    if isinstance(value, str):
        for secret in secrets:
            value = value.replace(secret, REDACTED)
        return value
    if isinstance(value, dict):
        return {k: scrub(v, secrets) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [scrub(v, secrets) for v in value]
    return value


# ============================================================================
# Cassette
# ============================================================================

class Cassette:
    """
    请求-响应记录 (JSON Lines)

    Record: {key, request: {template, model, bindings, temperature, max_tokens},
    response, usage}. The key is derived from the request snapshot; a stored
    key that disagrees with the snapshot is rejected. Records with the same
    key are replayed in the order they were written.
    """

    def __init__(self, path: Path, secrets: Sequence[str] = ()):
        self.path = Path(path)
        self.secrets = [s for s in secrets if s]
        self._lock = threading.Lock()
        self._entries: Dict[str, List[Dict[str, Any]]] = {}
        if self.path.exists():
            self._load()

    def _load(self):
        for lineno, line in iter_jsonl(self.path):
            try:
                record = json.loads(line)
                key = request_key(record["request"])
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise CassetteError(f"{self.path}:{lineno}: malformed record ({e})") from e
            stored = record.get("key")
            if stored is not None and stored != key:
                raise CassetteError(f"{self.path}:{lineno}: key does not match the request snapshot")
            record["key"] = key
            self._entries.setdefault(key, []).append(record)
        logger.debug(f"加载cassette {self.path}: {len(self)} 条记录")

    def __len__(self) -> int:
        return sum(len(v) for v in self._entries.values())

    def lookup(self, key: str, occurrence: int) -> Optional[Dict[str, Any]]:
        """The `occurrence`-th record for `key`, repeating the last one once exhausted."""
        records = self._entries.get(key)
        if not records:
            return None
        return records[min(occurrence, len(records) - 1)]

    def append(self, request: CompletionRequest, response: CompletionResponse):
        record = scrub({
            "key": request.key(),
            "request": request.snapshot(),
            "response": response.text,
            "usage": response.usage(),
        }, self.secrets)
        record["key"] = request_key(record["request"])
        with self._lock:
            append_jsonl(self.path, record)
            self._entries.setdefault(record["key"], []).append(record)


# ============================================================================
# 后端
# ============================================================================

class LLMBackend:
    """后端基类"""
    mode = "abstract"

    def __init__(self):
        self.usage = UsageMeter()

    def _complete(self, request: CompletionRequest) -> CompletionResponse:
        raise NotImplementedError

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        logger.debug(f"LLM请求 [{self.mode}] - 模板: {request.template}, 提示长度: {len(request.prompt)}")
        response = self._complete(request)
        self.usage.add(response)
        logger.debug(
            f"LLM响应 [{self.mode}] - 耗时: {response.latency:.2f}s, "
            f"输入tokens: {response.prompt_tokens}, 输出tokens: {response.completion_tokens}"
        )
        return response


class LiveBackend(LLMBackend):
    """
    OpenAI兼容端点

    使用方式:
        backend = LiveBackend(LLMConfig(model="gpt-5.1"))
        response = backend.complete(request)

    Retries transport and rate-limit failures with exponential backoff and
    spaces requests by `request_interval` seconds across threads.
    """
    mode = "live"

    def __init__(self, config: LLMConfig, client: Optional[Any] = None, sleep: Callable[[float], None] = time.sleep):
        super().__init__()
        self.config = config
        self._sleep = sleep
        self._rate_lock = threading.Lock()
        self._last_request = 0.0

        api_key = config.resolve_api_key()
        if client is None:
            if not api_key:
                raise BackendError(f"environment variable {config.credential_env} is not set")
            client = OpenAI(
                base_url=config.base_url,
                api_key=api_key,
                timeout=config.timeout,
                max_retries=0,
            )
        self.client = client
        self.secrets = [api_key] if api_key else []
        logger.info(f"LLM客户端初始化完成 (URL: {config.base_url}, 模型: {config.model})")

    def _wait_turn(self):
        if self.config.request_interval <= 0:
            return
        with self._rate_lock:
            wait = self._last_request + self.config.request_interval - time.monotonic()
            if wait > 0:
                self._sleep(wait)
            self._last_request = time.monotonic()

    def _complete(self, request: CompletionRequest) -> CompletionResponse:
        last_error: Optional[Exception] = None
        rate_limited = False
        delay = self.config.retry_delay

        for attempt in range(self.config.max_retries):
            self._wait_turn()
            try:
                start_time = time.time()
                response = self.client.chat.completions.create(
                    model=request.model,
                    messages=[{"role": "user", "content": request.prompt}],
                    temperature=request.temperature,
                    max_tokens=request.max_tokens,
                )
                elapsed = time.time() - start_time
                usage = response.usage
                text = response.choices[0].message.content or ""
                return CompletionResponse(
                    text=scrub(text, self.secrets),
                    model=response.model or request.model,
                    prompt_tokens=usage.prompt_tokens if usage else 0,
                    completion_tokens=usage.completion_tokens if usage else 0,
                    latency=elapsed,
                    source="live",
                )
            except RateLimitError as e:
                last_error, rate_limited = e, True
            except (APIConnectionError, APITimeoutError) as e:
                last_error, rate_limited = e, False
            except APIStatusError as e:
                if e.status_code is not None and e.status_code < 500:
                    raise TransportError(f"API错误 {e.status_code}: {scrub(str(e), self.secrets)}") from e
                last_error, rate_limited = e, False

            logger.warning(
                f"LLM请求失败 (尝试 {attempt + 1}/{self.config.max_retries}): "
                f"{scrub(str(last_error), self.secrets)}"
            )
            if attempt < self.config.max_retries - 1:
                self._sleep(delay)
                delay *= self.config.backoff_factor

        message = f"LLM请求失败，已重试{self.config.max_retries}次: {scrub(str(last_error), self.secrets)}"
        if rate_limited:
            raise RateLimitedError(message) from last_error
        raise TransportError(message) from last_error


class ReplayBackend(LLMBackend):
    """只读回放; never opens a network connection"""
    mode = "replay"

    def __init__(self, cassette: Cassette):
        super().__init__()
        self.cassette = cassette
        self._seen: Dict[str, int] = {}
        self._lock = threading.Lock()

    def _complete(self, request: CompletionRequest) -> CompletionResponse:
        key = request.key()
        with self._lock:
            occurrence = self._seen.get(key, 0)
            self._seen[key] = occurrence + 1
        record = self.cassette.lookup(key, occurrence)
        if record is None:
            raise CacheMissError(f"no cassette entry for template {request.template!r} (key {key[:12]})")
        usage = record.get("usage") or {}
        return CompletionResponse(
            text=record["response"],
            model=record["request"].get("model", request.model),
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            source="replay",
        )


class ScriptedBackend(LLMBackend):
    """
    按顺序返回预设响应

    Every request is kept in `requests` so tests can inspect rendered prompts.
    """
    mode = "scripted"

    def __init__(self, responses: Iterable[str]):
        super().__init__()
        self.responses = list(responses)
        self.requests: List[CompletionRequest] = []
        self._cursor = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: Path) -> "ScriptedBackend":
        """JSON Lines with a "response" field per line, in call order."""
        responses = []
        for lineno, line in iter_jsonl(Path(path)):
            try:
                responses.append(json.loads(line)["response"])
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise CassetteError(f"{path}:{lineno}: malformed script line ({e})") from e
        return cls(responses)

    @property
    def remaining(self) -> int:
        return len(self.responses) - self._cursor

    def _complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self.requests.append(request)
            if self._cursor >= len(self.responses):
                raise ScriptExhaustedError(
                    f"script exhausted after {len(self.responses)} responses (template {request.template!r})"
                )
            text = self.responses[self._cursor]
            self._cursor += 1
        return CompletionResponse(text=text, model=request.model, source="scripted")


class RecordingBackend(LLMBackend):
    """把内层后端的每次调用追加到cassette"""

    def __init__(self, inner: LLMBackend, cassette: Cassette):
        super().__init__()
        self.inner = inner
        self.cassette = cassette
        self.mode = f"record:{inner.mode}"
        self.cassette.secrets = list({*self.cassette.secrets, *getattr(inner, "secrets", [])})

    def _complete(self, request: CompletionRequest) -> CompletionResponse:
        response = self.inner.complete(request)
        self.cassette.append(request, response)
        return response


# ============================================================================
# 工厂函数
# ============================================================================

def create_backend(
    mode: str,
    config: Optional[LLMConfig] = None,
    cassette_path: Optional[Path] = None,
    script_path: Optional[Path] = None,
) -> LLMBackend:
    """
    创建后端实例

    Args:
        mode: live / replay / scripted
        config: LLM配置
        cassette_path: replay必需; live/scripted时表示录制目标
        script_path: scripted必需
    """
    config = config or LLMConfig()
    if mode == "replay":
        if not cassette_path:
            raise ValueError("replay mode requires a cassette path")
        if not Path(cassette_path).exists():
            raise ValueError(f"cassette not found: {cassette_path}")
        return ReplayBackend(Cassette(cassette_path))

    if mode == "live":
        backend: LLMBackend = LiveBackend(config)
    elif mode == "scripted":
        if not script_path:
            raise ValueError("scripted mode requires a script path")
        backend = ScriptedBackend.from_file(script_path)
    else:
        raise ValueError(f"unknown backend mode: {mode}")

    if cassette_path:
        logger.info(f"录制cassette到 {cassette_path}")
        backend = RecordingBackend(backend, Cassette(cassette_path, getattr(backend, "secrets", [])))
    return backend


# ============================================================================
# 模块测试
# ============================================================================

if __name__ == "__main__":
    backend = ScriptedBackend(["A", "B"])
    req = CompletionRequest("demo", {"TOPIC": "x"}, "prompt", "gpt-5.1")
    print(backend.complete(req).text, backend.complete(req).text)
    try:
        backend.complete(req)
    except ScriptExhaustedError as e:
        print(f"exhausted: {e}")
    print("key:", req.key())
