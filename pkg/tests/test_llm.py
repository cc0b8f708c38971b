import json

import httpx
import pytest

from s2sg.errors import ConfigError, CredentialError, FixtureMiss, TransportError
from s2sg.llm import LlmClient, LlmConfig, LlmRequest, ScriptedResponder, prompt_hash, request_body

REQ = LlmRequest("m1", "system words", "user words ünïcode")


def echo(request: httpx.Request) -> httpx.Response:
    body = json.loads(request.content)
    text = body["messages"][-1]["content"]
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}], "usage": {"total_tokens": 7}})


def client(handler, sleeps=None, **kw):
    config = LlmConfig(endpoint="https://llm.invalid/v1/chat", api_key="k", **kw)
    sleep = sleeps.append if sleeps is not None else (lambda s: None)
    return LlmClient(config, http=httpx.Client(transport=httpx.MockTransport(handler)), sleep=sleep)


def sequence(*statuses):
    calls = []

    def handler(request):
        calls.append(request)
        status = statuses[min(len(calls) - 1, len(statuses) - 1)]
        if status == 200:
            return echo(request)
        return httpx.Response(status, text="nope")

    return handler, calls


def test_echo_is_byte_transparent():
    reply = client(echo).complete(REQ)
    assert reply.text == REQ.user_text
    assert reply.attempts == 1 and reply.usage == {"total_tokens": 7}
    assert reply.latency_ms >= 0


def test_retries_on_429_then_succeeds():
    handler, calls = sequence(429, 429, 200)
    sleeps = []
    reply = client(handler, sleeps).complete(REQ)
    assert reply.attempts == 3 and len(calls) == 3
    assert sleeps == [1.0, 2.0]


def test_retry_after_header_respected():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            return httpx.Response(503, headers={"Retry-After": "5"})
        return echo(request)

    sleeps = []
    client(handler, sleeps).complete(REQ)
    assert sleeps == [5.0]


def test_auth_failure_is_not_retried():
    handler, calls = sequence(401)
    with pytest.raises(CredentialError):
        client(handler).complete(REQ)
    assert len(calls) == 1


def test_other_4xx_is_not_retried():
    handler, calls = sequence(400)
    with pytest.raises(TransportError) as err:
        client(handler).complete(REQ)
    assert err.value.status == 400 and len(calls) == 1


def test_retries_exhausted_carry_last_status():
    handler, calls = sequence(500)
    sleeps = []
    with pytest.raises(TransportError) as err:
        client(handler, sleeps, max_retries=3).complete(REQ)
    assert err.value.status == 500 and err.value.attempts == 4
    assert len(calls) == 4 and sleeps == [1.0, 2.0, 4.0]


def test_backoff_is_capped():
    handler, _ = sequence(500)
    sleeps = []
    with pytest.raises(TransportError):
        client(handler, sleeps, max_retries=6, backoff_cap=5.0).complete(REQ)
    assert max(sleeps) == 5.0


def test_timeouts_are_retried():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            raise httpx.ReadTimeout("slow", request=request)
        return echo(request)

    assert client(handler).complete(REQ).attempts == 3


def test_request_body_is_pure():
    assert request_body(REQ) == request_body(LlmRequest("m1", "system words", "user words ünïcode"))
    body = json.loads(request_body(REQ))
    assert body["temperature"] == 0 and body["response_format"] == {"type": "json_object"}
    gem = json.loads(request_body(REQ, "gemini"))
    assert gem["contents"][0]["parts"][0]["text"] == REQ.user_text


def test_gemini_adapter_round_trip():
    def handler(request):
        assert request.headers["x-goog-api-key"] == "k"
        assert request.url.path.endswith("/m1:generateContent")
        text = json.loads(request.content)["contents"][0]["parts"][0]["text"]
        return httpx.Response(200, json={"candidates": [{"content": {"parts": [{"text": text}]}}]})

    config = LlmConfig("https://llm.invalid/models/{model}:generateContent", "k", provider="gemini")
    c = LlmClient(config, http=httpx.Client(transport=httpx.MockTransport(handler)))
    assert c.complete(REQ).text == REQ.user_text


def test_audit_log(tmp_path):
    handler, _ = sequence(429, 200)
    audit = tmp_path / "audit.jsonl"
    client(handler, audit_path=audit).complete(REQ)
    records = [json.loads(line) for line in audit.read_text().splitlines()]
    assert [r["status"] for r in records] == [429, 200]
    assert all(r["prompt_hash"] == REQ.prompt_hash for r in records)
    assert records[-1]["usage"] == {"total_tokens": 7}


def test_from_env():
    with pytest.raises(ConfigError):
        LlmConfig.from_env({})
    with pytest.raises(CredentialError):
        LlmConfig.from_env({"S2SG_LLM_ENDPOINT": "https://x"})
    cfg = LlmConfig.from_env({"S2SG_LLM_ENDPOINT": "https://x", "S2SG_LLM_API_KEY": "k", "S2SG_LLM_MODEL": "m"})
    assert (cfg.timeout, cfg.max_retries, cfg.backoff_base, cfg.model) == (60.0, 3, 1.0, "m")


def test_negative_temperature_rejected():
    with pytest.raises(ValueError):
        LlmRequest("m", "a", "b", temperature=-0.1)


def test_scripted_hit_and_miss(tmp_path):
    path = tmp_path / "f.json"
    path.write_text(json.dumps({"entries": {REQ.prompt_hash: {"reply": "hello", "label": "x"}}}))
    responder = ScriptedResponder.from_file(path)
    assert responder.complete(REQ).text == "hello"
    other = LlmRequest("m1", "system words", "different")
    with pytest.raises(FixtureMiss) as err:
        responder.complete(other)
    assert other.prompt_hash in str(err.value)
    assert responder.calls == [REQ.prompt_hash, other.prompt_hash]


def test_prompt_hash_ignores_model_and_temperature():
    assert LlmRequest("a", "s", "u", 0.5).prompt_hash == prompt_hash("s", "u") == LlmRequest("b", "s", "u").prompt_hash
