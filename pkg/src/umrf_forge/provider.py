"""Completion backends: HTTP completions API, offline mock, on-disk cache.

Every backend exposes ``complete(request) -> CompletionResult`` so the search
and fragility code never needs to know which one it is talking to.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol

import httpx

from umrf_forge.umrf import make_graph, serialize_graph

logger = logging.getLogger(__name__)

API_KEY_ENV = "UMRF_FORGE_API_KEY"
CACHE_ENV = "UMRF_FORGE_CACHE"
DEFAULT_MODEL = "text-davinci-003"
DEFAULT_MAX_TOKENS = 1024
DEFAULT_FAN_OUT = 2
FINISH_REASONS = ("stop", "length", "error")

# Returned by the mock provider when no fixture entry matches.
FALLBACK_COMPLETION = serialize_graph(make_graph("scan", [{"name": "scan", "id": 0}]))


class ProviderError(Exception):
    pass


class ProviderConfigError(ProviderError):
    pass


class ProviderRequestError(ProviderError):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class ProviderUnavailableError(ProviderError):
    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = 0.0
    stop: tuple[str, ...] | None = None
    model_id: str = DEFAULT_MODEL

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.stop is not None:
            object.__setattr__(self, "stop", tuple(self.stop))

    def body(self) -> dict:
        return {
            "model": self.model_id,
            "prompt": self.prompt,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "stop": list(self.stop) if self.stop is not None else None,
        }


@dataclass(frozen=True)
class CompletionResult:
    text: str
    finish_reason: str = "stop"
    latency: float = 0.0
    from_cache: bool = False
    retries: int = 0
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.finish_reason not in FINISH_REASONS:
            raise ValueError(f"unknown finish_reason {self.finish_reason!r}")
        if self.finish_reason == "length" and not any("truncat" in w for w in self.warnings):
            object.__setattr__(
                self, "warnings", self.warnings + ("completion truncated at max_tokens",)
            )


@dataclass(frozen=True)
class ProviderConfig:
    base_url: str = "https://api.openai.com/v1"
    credential: str | None = field(default=None, repr=False)
    requests_per_minute: float = 20.0
    max_retries: int = 5
    backoff_base: float = 1.0
    timeout: float = 120.0
    fan_out: int = DEFAULT_FAN_OUT

    def __post_init__(self) -> None:
        if self.requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @classmethod
    def from_env(cls, **overrides) -> "ProviderConfig":
        overrides.setdefault("credential", os.environ.get(API_KEY_ENV))
        return cls(**overrides)


def cache_key(req: CompletionRequest) -> str:
    payload = json.dumps(
        [req.model_id, req.max_tokens, req.temperature, list(req.stop or []), req.prompt],
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CompletionProvider(Protocol):
    def complete(self, req: CompletionRequest) -> CompletionResult: ...


# --------------------------------------------------------------------------
# rate limiting


class TokenBucket:
    """Token bucket holding at most one token, refilled at rpm/60 per second.

    Over any 60 s window at most ``rpm + 1`` acquisitions succeed.
    """

    def __init__(
        self,
        requests_per_minute: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.rate = requests_per_minute / 60.0
        self.capacity = 1.0
        self._clock = clock
        self._sleep = sleep
        self._tokens = self.capacity
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


# --------------------------------------------------------------------------
# HTTP backend


def _retry_after(resp: httpx.Response) -> float | None:
    value = resp.headers.get("retry-after")
    try:
        return float(value) if value is not None else None
    except ValueError:
        return None


class HttpProvider:
    """Completions-style HTTP API with token-bucket pacing and retry/backoff."""

    def __init__(
        self,
        cfg: ProviderConfig,
        client: httpx.Client | None = None,
        bucket: TokenBucket | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        if not cfg.credential:
            raise ProviderConfigError(f"no API credential; set {API_KEY_ENV}")
        self.cfg = cfg
        self._client = client or httpx.Client(timeout=cfg.timeout)
        self._bucket = bucket or TokenBucket(cfg.requests_per_minute, clock=clock, sleep=sleep)
        self._sleep = sleep
        self._clock = clock
        self.requests_sent = 0

    def complete(self, req: CompletionRequest) -> CompletionResult:
        url = self.cfg.base_url.rstrip("/") + "/completions"
        headers = {"Authorization": f"Bearer {self.cfg.credential}"}
        start = self._clock()
        last_problem = ""
        hint = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                delay = max(self.cfg.backoff_base * 2 ** (attempt - 1), hint or 0.0)
                logger.info("retry %d after %.2fs (%s)", attempt, delay, last_problem)
                self._sleep(delay)
                hint = None
            self._bucket.acquire()
            self.requests_sent += 1
            try:
                resp = self._client.post(url, json=req.body(), headers=headers)
            except httpx.TransportError as exc:
                last_problem = f"transport error: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_problem = f"HTTP {resp.status_code}"
                hint = _retry_after(resp)
                continue
            if resp.status_code >= 400:
                raise ProviderRequestError(resp.status_code, resp.text)
            return _parse_completion(resp, self._clock() - start, attempt)
        raise ProviderUnavailableError(
            f"gave up after {self.cfg.max_retries + 1} attempts: {last_problem}",
            self.cfg.max_retries + 1,
        )

    def close(self) -> None:
        self._client.close()


def _parse_completion(resp: httpx.Response, latency: float, retries: int) -> CompletionResult:
    try:
        choice = resp.json()["choices"][0]
        text = choice["text"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ProviderRequestError(resp.status_code, f"unexpected response body ({exc}): {resp.text}")
    reason = choice.get("finish_reason") or "stop"
    if reason not in FINISH_REASONS:
        reason = "stop"
    return CompletionResult(text=text, finish_reason=reason, latency=latency, retries=retries)


def complete(req: CompletionRequest, cfg: ProviderConfig, **kwargs) -> CompletionResult:
    """One-off HTTP completion; see :class:`HttpProvider` for reuse."""
    return HttpProvider(cfg, **kwargs).complete(req)


# --------------------------------------------------------------------------
# cache


class CachingProvider:
    """Persists temperature-0 completions as one JSON file per request digest."""

    def __init__(self, inner: CompletionProvider, cache_dir: str | os.PathLike):
        self.inner = inner
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, req: CompletionRequest) -> Path:
        return self.cache_dir / f"{cache_key(req)}.json"

    def lookup(self, req: CompletionRequest) -> CompletionResult | None:
        path = self._path(req)
        if not path.exists():
            return None
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
            if entry["request"] != req.body():
                raise ValueError("request mismatch")
            return CompletionResult(
                text=entry["text"], finish_reason=entry["finish_reason"], from_cache=True
            )
        except (ValueError, KeyError, TypeError) as exc:
            logger.warning("corrupt cache entry %s (%s); refetching", path.name, exc)
            return None

    def store(self, req: CompletionRequest, result: CompletionResult) -> None:
        entry = {
            "request": req.body(),
            "text": result.text,
            "finish_reason": result.finish_reason,
        }
        path = self._path(req)
        with self._lock:
            fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, ensure_ascii=False, indent=1)
            os.replace(tmp, path)

    def complete(self, req: CompletionRequest) -> CompletionResult:
        if req.temperature > 0:
            return self.inner.complete(req)
        hit = self.lookup(req)
        if hit is not None:
            return hit
        result = self.inner.complete(req)
        if result.finish_reason != "error":
            self.store(req, result)
        return result


def cached_complete(
    req: CompletionRequest, cfg: ProviderConfig, cache_dir: str | os.PathLike, **kwargs
) -> CompletionResult:
    return CachingProvider(HttpProvider(cfg, **kwargs), cache_dir).complete(req)


# --------------------------------------------------------------------------
# offline mock


def query_block(prompt: str) -> str:
    """The last block of a built prompt, i.e. the query, without the cue line."""
    lines = prompt.rstrip().split("\n")
    if lines and lines[-1].strip() == "UMRF:":
        lines = lines[:-1]
    block = "\n".join(lines).rstrip()
    return block.rsplit("\n\n", 1)[-1].strip()


def mock_complete(req: CompletionRequest, fixture: Mapping[str, str]) -> CompletionResult:
    """Answer from ``fixture`` by longest suffix match on the query block."""
    block = query_block(req.prompt)
    best = None
    for key in fixture:
        k = key.strip()
        if k and block.endswith(k) and (best is None or len(k) > len(best.strip())):
            best = key
    text = fixture[best] if best is not None else FALLBACK_COMPLETION
    return CompletionResult(text=text, finish_reason="stop")


class MockProvider:
    """Deterministic offline provider; counts the calls it serves."""

    def __init__(self, fixture: Mapping[str, str] | None = None):
        self.fixture = dict(fixture or {})
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, req: CompletionRequest) -> CompletionResult:
        with self._lock:
            self.calls += 1
        return mock_complete(req, self.fixture)


class FunctionProvider:
    """Wraps ``fn(request) -> text`` as a provider, for simulations."""

    def __init__(self, fn: Callable[[CompletionRequest], str]):
        self.fn = fn
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, req: CompletionRequest) -> CompletionResult:
        with self._lock:
            self.calls += 1
        return CompletionResult(text=self.fn(req))
