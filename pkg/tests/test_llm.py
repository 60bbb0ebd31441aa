"""
llm_client / prompts 测试 - 模板渲染、脚本后端、录制与回放、凭证清洗
"""

import json
from types import SimpleNamespace

import httpx
import pytest
from openai import APIConnectionError

from config import LLMConfig
from llm_client import (
    BackendError,
    CacheMissError,
    Cassette,
    CassetteError,
    CompletionRequest,
    LiveBackend,
    RecordingBackend,
    ReplayBackend,
    ScriptedBackend,
    ScriptExhaustedError,
    TransportError,
    create_backend,
    scrub,
)
from prompts import (
    CATALOG_SIZES,
    MissingPlaceholderError,
    PromptTemplate,
    load_scheme_catalog,
    load_template,
    render_prompt,
    render_scheme_block,
)

SECRET = "sk-test-0123456789abcdef"


def request(template="demo", topic="rain", prompt="prompt"):
    return CompletionRequest(template, {"TOPIC": topic}, prompt, "test-model")


class FakeCompletions:
    """Minimal stand-in for client.chat.completions used by LiveBackend."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = []

    def create(self, **kwargs):
        self.calls.append(kwargs)
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return SimpleNamespace(
            model=kwargs["model"],
            usage=SimpleNamespace(prompt_tokens=7, completion_tokens=3),
            choices=[SimpleNamespace(message=SimpleNamespace(content=reply))],
        )


def fake_client(replies):
    completions = FakeCompletions(replies)
    return SimpleNamespace(chat=SimpleNamespace(completions=completions)), completions


# ============================================================================
# 模板
# ============================================================================

def test_render_prompt_substitutes_once():
    template = PromptTemplate("t", "Topic: [[TOPIC]]\nText: [[TEXT]]")
    out = render_prompt(template, {"TOPIC": "[[TEXT]]", "TEXT": "body"})
    assert out == "Topic: [[TEXT]]\nText: body"


def test_render_prompt_missing_binding():
    template = PromptTemplate("t", "[[A]] [[B]]")
    with pytest.raises(MissingPlaceholderError) as info:
        render_prompt(template, {"A": "x"})
    assert info.value.missing == ["B"]


def test_render_prompt_ignores_extra_binding():
    assert render_prompt(PromptTemplate("t", "[[A]]"), {"A": "x", "B": "y"}) == "x"


@pytest.mark.parametrize("name, expected", [
    ("reconstruction", {"TOPIC", "BACKGROUND", "ARGUMENT", "SCHEMES", "FALLACY_NOTE",
                        "PREVIOUS_RECONSTRUCTION", "FEEDBACK"}),
    ("formalization", {"PREMISES", "CONCLUSION"}),
    ("streamlining", {"DEFINITION", "PREMISES", "CONCLUSION"}),
    ("format_reminder", {"ERROR"}),
])
def test_template_placeholders(name, expected):
    assert load_template(name).required == expected


def test_missing_template():
    with pytest.raises(FileNotFoundError):
        load_template("no_such_stage")


@pytest.mark.parametrize("theory", ["general", "specific"])
def test_scheme_catalog_sizes(theory):
    catalog = load_scheme_catalog(theory)
    assert len(catalog) == CATALOG_SIZES[theory]
    block = render_scheme_block(catalog)
    assert f"the {len(catalog)} argument types" in block
    assert "## Reconstruction Guidelines Based on Argument Types" in block


def test_empty_scheme_block():
    assert render_scheme_block([]) == ""


# ============================================================================
# 脚本后端
# ============================================================================

def test_scripted_backend_in_order():
    backend = ScriptedBackend(["one", "two"])
    assert backend.complete(request()).text == "one"
    assert backend.complete(request(topic="other")).text == "two"
    assert [r.bindings["TOPIC"] for r in backend.requests] == ["rain", "other"]
    with pytest.raises(ScriptExhaustedError):
        backend.complete(request())
    assert backend.usage.calls == 2


def test_scripted_backend_from_file(tmp_path):
    path = tmp_path / "script.jsonl"
    path.write_text('{"response": "a"}\n\n{"stage": "x", "response": "b"}\n', encoding="utf-8")
    assert ScriptedBackend.from_file(path).responses == ["a", "b"]

    path.write_text('{"text": "a"}\n', encoding="utf-8")
    with pytest.raises(CassetteError):
        ScriptedBackend.from_file(path)


# ============================================================================
# 录制与回放
# ============================================================================

def test_record_then_replay(tmp_path):
    cassette_path = tmp_path / "run.cassette.jsonl"
    recorder = RecordingBackend(ScriptedBackend(["first", "second", "third"]), Cassette(cassette_path))
    recorder.complete(request())
    recorder.complete(request(topic="snow"))
    recorder.complete(request())

    replay = ReplayBackend(Cassette(cassette_path))
    # same key replays in recorded order
    assert replay.complete(request()).text == "first"
    assert replay.complete(request()).text == "third"
    assert replay.complete(request(topic="snow")).text == "second"
    assert replay.complete(request(prompt="a different rendering")).text == "third"


def test_replay_cache_miss(tmp_path):
    cassette_path = tmp_path / "c.jsonl"
    RecordingBackend(ScriptedBackend(["x"]), Cassette(cassette_path)).complete(request())
    with pytest.raises(CacheMissError):
        ReplayBackend(Cassette(cassette_path)).complete(request(topic="fog"))


def test_tampered_cassette_is_rejected(tmp_path):
    cassette_path = tmp_path / "c.jsonl"
    RecordingBackend(ScriptedBackend(["x"]), Cassette(cassette_path)).complete(request())
    record = json.loads(cassette_path.read_text(encoding="utf-8"))
    record["request"]["temperature"] = 0.7
    cassette_path.write_text(json.dumps(record) + "\n", encoding="utf-8")
    with pytest.raises(CassetteError):
        Cassette(cassette_path)


def test_scrub_nested():
    data = {"a": f"key={SECRET}", "b": [SECRET, 3], "c": None}
    assert scrub(data, [SECRET]) == {"a": "key=[REDACTED]", "b": ["[REDACTED]", 3], "c": None}
    assert scrub("text", []) == "text"


def test_live_recording_never_stores_the_credential(tmp_path, monkeypatch):
    monkeypatch.setenv("GAAR_TEST_KEY", SECRET)
    config = LLMConfig(credential_env="GAAR_TEST_KEY")
    client, completions = fake_client([f"echo {SECRET}"])
    cassette_path = tmp_path / "live.jsonl"

    live = LiveBackend(config, client=client)
    backend = RecordingBackend(live, Cassette(cassette_path))
    response = backend.complete(CompletionRequest("demo", {"NOTE": SECRET}, "p", "m"))

    assert SECRET not in response.text
    assert SECRET not in cassette_path.read_text(encoding="utf-8")
    assert completions.calls[0]["temperature"] == 0.0
    assert live.usage.prompt_tokens == 7


def test_live_backend_needs_the_credential(monkeypatch):
    monkeypatch.delenv("GAAR_TEST_KEY", raising=False)
    with pytest.raises(BackendError, match="GAAR_TEST_KEY"):
        LiveBackend(LLMConfig(credential_env="GAAR_TEST_KEY"))


def test_live_backend_retries_with_backoff(monkeypatch):
    monkeypatch.setenv("GAAR_TEST_KEY", SECRET)
    error = APIConnectionError(message="boom", request=httpx.Request("POST", "http://localhost"))
    client, completions = fake_client([error, error, error])
    sleeps = []
    backend = LiveBackend(
        LLMConfig(credential_env="GAAR_TEST_KEY", max_retries=3, retry_delay=1.0, backoff_factor=2.0),
        client=client, sleep=sleeps.append,
    )
    with pytest.raises(TransportError):
        backend.complete(request())
    assert len(completions.calls) == 3
    assert sleeps == [1.0, 2.0]


def test_live_backend_recovers_after_one_failure(monkeypatch):
    monkeypatch.setenv("GAAR_TEST_KEY", SECRET)
    error = APIConnectionError(message="boom", request=httpx.Request("POST", "http://localhost"))
    client, _ = fake_client([error, "ok"])
    backend = LiveBackend(LLMConfig(credential_env="GAAR_TEST_KEY"), client=client, sleep=lambda s: None)
    assert backend.complete(request()).text == "ok"


# ============================================================================
# 工厂
# ============================================================================

def test_create_backend_modes(tmp_path):
    with pytest.raises(ValueError):
        create_backend("replay")
    with pytest.raises(ValueError):
        create_backend("replay", cassette_path=tmp_path / "missing.jsonl")
    with pytest.raises(ValueError):
        create_backend("scripted")
    with pytest.raises(ValueError):
        create_backend("carrier-pigeon")

    script = tmp_path / "s.jsonl"
    script.write_text('{"response": "hi"}\n', encoding="utf-8")
    backend = create_backend("scripted", script_path=script, cassette_path=tmp_path / "rec.jsonl")
    assert isinstance(backend, RecordingBackend)
    backend.complete(request())
    assert isinstance(create_backend("replay", cassette_path=tmp_path / "rec.jsonl"), ReplayBackend)
