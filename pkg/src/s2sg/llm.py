"""Chat-completion transport and an offline scripted stand-in.

Both :class:`LlmClient` and :class:`ScriptedResponder` expose
``complete(LlmRequest) -> LlmReply``, which is all the grounding engine needs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import httpx

from .errors import ConfigError, CredentialError, FixtureMiss, TransportError

log = logging.getLogger(__name__)

ENV_ENDPOINT = "S2SG_LLM_ENDPOINT"
ENV_API_KEY = "S2SG_LLM_API_KEY"
ENV_MODEL = "S2SG_LLM_MODEL"

RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class LlmRequest:
    model_name: str
    system_text: str
    user_text: str
    temperature: float = 0.0
    response_format_hint: str = "json"

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.response_format_hint not in ("json", "free"):
            raise ValueError(f"response_format_hint must be 'json' or 'free', got {self.response_format_hint!r}")

    @property
    def prompt_hash(self) -> str:
        return prompt_hash(self.system_text, self.user_text)


@dataclass(frozen=True)
class LlmReply:
    text: str
    usage: Mapping[str, int] | None = None
    latency_ms: int = 0
    attempts: int = 1


def prompt_hash(system_text: str, user_text: str) -> str:
    payload = json.dumps([system_text, user_text], ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


# ---------------------------------------------------------------------------
# provider adapters


def _openai_body(req: LlmRequest) -> dict:
    body: dict[str, Any] = {
        "model": req.model_name,
        "temperature": req.temperature,
        "messages": [
            {"role": "system", "content": req.system_text},
            {"role": "user", "content": req.user_text},
        ],
    }
    if req.response_format_hint == "json":
        body["response_format"] = {"type": "json_object"}
    return body


def _openai_reply(data: Mapping) -> tuple[str, dict | None]:
    text = data["choices"][0]["message"]["content"]
    usage = data.get("usage")
    if usage:
        usage = {k: usage[k] for k in ("prompt_tokens", "completion_tokens", "total_tokens") if k in usage}
    return text, usage or None


def _gemini_body(req: LlmRequest) -> dict:
    config: dict[str, Any] = {"temperature": req.temperature}
    if req.response_format_hint == "json":
        config["responseMimeType"] = "application/json"
    return {
        "systemInstruction": {"parts": [{"text": req.system_text}]},
        "contents": [{"role": "user", "parts": [{"text": req.user_text}]}],
        "generationConfig": config,
    }


def _gemini_reply(data: Mapping) -> tuple[str, dict | None]:
    parts = data["candidates"][0]["content"]["parts"]
    text = "".join(p.get("text", "") for p in parts)
    meta = data.get("usageMetadata") or {}
    usage = {
        "prompt_tokens": meta.get("promptTokenCount"),
        "completion_tokens": meta.get("candidatesTokenCount"),
        "total_tokens": meta.get("totalTokenCount"),
    }
    return text, {k: v for k, v in usage.items() if v is not None} or None


@dataclass(frozen=True)
class _Adapter:
    body: Callable[[LlmRequest], dict]
    reply: Callable[[Mapping], tuple[str, dict | None]]
    auth: Callable[[str], dict[str, str]]


ADAPTERS = {
    "openai": _Adapter(_openai_body, _openai_reply, lambda key: {"Authorization": f"Bearer {key}"}),
    "gemini": _Adapter(_gemini_body, _gemini_reply, lambda key: {"x-goog-api-key": key}),
}


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str
    api_key: str
    model: str = ""
    provider: str = "openai"
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0
    backoff_cap: float = 30.0
    max_in_flight: int = 4
    audit_path: Path | None = None

    def __post_init__(self):
        if self.provider not in ADAPTERS:
            raise ConfigError(f"unknown provider {self.provider!r}; known: {sorted(ADAPTERS)}")
        if self.max_retries < 0 or self.max_in_flight < 1 or self.timeout <= 0:
            raise ConfigError("max_retries >= 0, max_in_flight >= 1 and timeout > 0 are required")

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None, **overrides) -> LlmConfig:
        env = os.environ if env is None else env
        values = {
            "endpoint": env.get(ENV_ENDPOINT, ""),
            "api_key": env.get(ENV_API_KEY, ""),
            "model": env.get(ENV_MODEL, ""),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        if not values["endpoint"]:
            raise ConfigError(f"no LLM endpoint configured; set {ENV_ENDPOINT}")
        if not values["api_key"]:
            raise CredentialError(f"no LLM credential configured; set {ENV_API_KEY}")
        return cls(**values)


def request_body(req: LlmRequest, provider: str = "openai") -> bytes:
    """Exact bytes POSTed for ``req``; a pure function of its inputs."""
    return json.dumps(ADAPTERS[provider].body(req), sort_keys=True, ensure_ascii=False).encode("utf-8")


class LlmClient:
    """Synchronous chat-completion client with bounded exponential backoff."""

    single_flight = False

    def __init__(
        self,
        config: LlmConfig,
        http: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._adapter = ADAPTERS[config.provider]
        self._http = http or httpx.Client(timeout=config.timeout)
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(config.max_in_flight)
        self._audit_lock = threading.Lock()

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _url(self, model: str) -> str:
        return self.config.endpoint.replace("{model}", model)

    def _delay(self, attempt: int, response: httpx.Response | None) -> float:
        delay = self.config.backoff_base * 2 ** (attempt - 1)
        if response is not None:
            try:
                delay = max(delay, float(response.headers.get("retry-after", 0)))
            except ValueError:
                pass
        return min(delay, self.config.backoff_cap)

    def complete(self, req: LlmRequest) -> LlmReply:
        body = request_body(req, self.config.provider)
        headers = {"Content-Type": "application/json", **self._adapter.auth(self.config.api_key)}
        url = self._url(req.model_name)
        attempts = 0
        last_status: int | None = None
        last_error = ""
        with self._gate:
            while True:
                attempts += 1
                started = time.monotonic()
                response = None
                try:
                    response = self._http.post(url, content=body, headers=headers, timeout=self.config.timeout)
                except httpx.TimeoutException as exc:
                    last_status, last_error = None, f"timeout: {exc}"
                except httpx.TransportError as exc:
                    last_status, last_error = None, f"transport: {exc}"
                else:
                    last_status = response.status_code
                    if last_status in (401, 403):
                        self._audit(req, attempts, started, last_status, None)
                        raise CredentialError(f"endpoint rejected credentials (HTTP {last_status})")
                    if last_status < 400:
                        latency = int((time.monotonic() - started) * 1000)
                        try:
                            text, usage = self._adapter.reply(response.json())
                        except (ValueError, KeyError, IndexError, TypeError) as exc:
                            raise TransportError(
                                f"unexpected response shape from provider: {exc}", last_status, attempts
                            ) from None
                        self._audit(req, attempts, started, last_status, usage)
                        return LlmReply(text, usage, latency, attempts)
                    last_error = response.text[:500]
                    if last_status not in RETRY_STATUSES:
                        self._audit(req, attempts, started, last_status, None)
                        raise TransportError(f"HTTP {last_status}: {last_error}", last_status, attempts)
                self._audit(req, attempts, started, last_status, None)
                if attempts > self.config.max_retries:
                    raise TransportError(
                        f"giving up after {attempts} attempts (last: {last_status or last_error})",
                        last_status,
                        attempts,
                    )
                delay = self._delay(attempts, response)
                log.info("LLM call failed (%s); retry %d in %.1fs", last_status or last_error, attempts, delay)
                self._sleep(delay)

    def _audit(self, req: LlmRequest, attempts: int, started: float, status, usage) -> None:
        if self.config.audit_path is None:
            return
        record = {
            "prompt_hash": req.prompt_hash,
            "model": req.model_name,
            "attempt": attempts,
            "status": status,
            "latency_ms": int((time.monotonic() - started) * 1000),
            "usage": usage,
        }
        with self._audit_lock, open(self.config.audit_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


@dataclass
class ScriptedResponder:
    """Replies looked up by prompt hash; for offline runs and tests."""

    replies: Mapping[str, str]
    calls: list[str] = field(default_factory=list)
    single_flight = False

    def __post_init__(self):
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedResponder:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = data.get("entries", data) if isinstance(data, dict) else {}
        replies = {}
        for key, value in entries.items():
            replies[key] = value["reply"] if isinstance(value, dict) else value
        return cls(replies)

    def complete(self, req: LlmRequest) -> LlmReply:
        key = req.prompt_hash
        with self._lock:
            self.calls.append(key)
        if key not in self.replies:
            raise FixtureMiss(key)
        return LlmReply(self.replies[key], None, 0, 1)
