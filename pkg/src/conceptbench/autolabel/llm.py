"""Chat endpoint client and a content-addressed response cache."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol

import requests

__all__ = [
    "CacheMiss",
    "CachedClient",
    "ChatClient",
    "EndpointError",
    "LlmRequest",
    "LlmResponse",
    "OpenAIChatClient",
]


@dataclass(frozen=True)
class LlmRequest:
    model_id: str
    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    max_tokens: int = 1024

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LlmResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


class ChatClient(Protocol):
    def complete(self, request: LlmRequest) -> LlmResponse: ...


class EndpointError(RuntimeError):
    """The chat endpoint failed; callers may retry."""


class CacheMiss(KeyError):
    pass


class OpenAIChatClient:
    """Minimal client for an OpenAI-compatible ``/chat/completions`` endpoint.

    Defaults come from ``CONCEPTBENCH_LLM_BASE_URL`` and
    ``CONCEPTBENCH_LLM_API_KEY``.
    """

    def __init__(self, base_url: str | None = None, api_key: str | None = None,
                 timeout: float = 120.0, max_retries: int = 3, backoff: float = 2.0,
                 session: requests.Session | None = None):
        self.base_url = (base_url or os.environ.get("CONCEPTBENCH_LLM_BASE_URL", "")).rstrip("/")
        if not self.base_url:
            raise EndpointError("no chat endpoint configured (CONCEPTBENCH_LLM_BASE_URL)")
        self.api_key = api_key if api_key is not None else os.environ.get("CONCEPTBENCH_LLM_API_KEY")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.session = session or requests.Session()

    def complete(self, request: LlmRequest) -> LlmResponse:
        payload = {
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self.session.post(f"{self.base_url}/chat/completions", json=payload,
                                         headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last = str(exc)
            else:
                if resp.status_code == 200:
                    body = resp.json()
                    usage = body.get("usage") or {}
                    return LlmResponse(body["choices"][0]["message"]["content"] or "",
                                       usage.get("prompt_tokens", 0),
                                       usage.get("completion_tokens", 0))
                last = f"HTTP {resp.status_code}: {resp.text[:200]}"
                if resp.status_code not in (429, 500, 502, 503, 504):
                    break
            if attempt < self.max_retries:
                time.sleep(self.backoff * 2**attempt)
        raise EndpointError(last or "chat endpoint failed")


class CachedClient:
    """Wraps a client with an on-disk cache keyed by request digest.

    Modes: ``record`` serves hits and records misses, ``replay`` serves hits
    and raises :class:`CacheMiss` otherwise (never touching the inner
    client), ``live`` always calls through and records the answer.
    """

    MODES = ("record", "replay", "live")

    def __init__(self, cache_dir: str | Path, mode: str = "record",
                 inner: ChatClient | None = None):
        if mode not in self.MODES:
            raise ValueError(f"cache mode must be one of {self.MODES}")
        if mode != "replay" and inner is None:
            raise ValueError(f"{mode} mode needs an inner client")
        self.cache_dir = Path(cache_dir)
        self.mode = mode
        self.inner = inner
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.cache_dir / key[:2] / f"{key}.json"

    def complete(self, request: LlmRequest) -> LlmResponse:
        key = request.digest()
        path = self._path(key)
        if self.mode != "live" and path.exists():
            with self._lock:
                self.hits += 1
            return LlmResponse(**json.loads(path.read_text(encoding="utf-8"))["response"])
        with self._lock:
            self.misses += 1
        if self.mode == "replay":
            raise CacheMiss(f"no cached response for request {key[:12]}")
        response = self.inner.complete(request)
        self._store(path, request, response)
        return response

    def _store(self, path: Path, request: LlmRequest, response: LlmResponse) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = {"request": asdict(request), "response": asdict(response)}
        data = json.dumps(doc, sort_keys=True, indent=1, ensure_ascii=False) + "\n"
        # identical keys carry identical values, so last writer wins safely
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
