"""Chat-completion clients: an HTTP backend, a scripted client and shared helpers."""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import requests

ROLES = ("system", "user", "assistant")


class ChatClientError(RuntimeError):
    pass


class ChatClient(Protocol):
    def complete(self, messages: Sequence[dict]) -> str: ...


def check_messages(messages: Sequence[dict]) -> list[dict]:
    out = []
    for i, m in enumerate(messages):
        if m.get("role") not in ROLES or not isinstance(m.get("content"), str):
            raise ValueError(f"message {i} needs role in {ROLES} and string content")
        out.append({"role": m["role"], "content": m["content"]})
    if not out:
        raise ValueError("no messages")
    return out


def user(content: str) -> dict:
    return {"role": "user", "content": content}


def system(content: str) -> dict:
    return {"role": "system", "content": content}


def assistant(content: str) -> dict:
    return {"role": "assistant", "content": content}


class TokenBucket:
    """Thread-safe limiter: ``rate_per_min`` requests per minute with a burst of ``burst``."""

    def __init__(self, rate_per_min: float, burst: int = 1, clock=time.monotonic, sleep=time.sleep):
        if rate_per_min <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate_per_min / 60.0
        self.capacity = float(burst)
        self.tokens = float(burst)
        self.clock, self.sleep = clock, sleep
        self.last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        with self._lock:
            now = self.clock()
            self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
            self.last = now
            # going negative reserves a future slot, so concurrent callers queue up
            self.tokens -= 1.0
            wait = -self.tokens / self.rate if self.tokens < 0 else 0.0
        if wait:
            self.sleep(wait)
        return wait


@dataclass
class HTTPChatClient:
    """OpenAI-style ``POST {model, messages}``; reply read from ``choices[0].message.content``."""

    endpoint: str
    model: str
    key_env: str = "HIRPF_API_KEY"
    timeout: float = 60.0
    max_retries: int = 5
    backoff: float = 1.0
    backoff_cap: float = 30.0
    rate_per_min: float | None = None
    session: object = None
    sleep: Callable[[float], None] = time.sleep
    _bucket: TokenBucket | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.session is None:
            self.session = requests.Session()
        if self.rate_per_min:
            self._bucket = TokenBucket(self.rate_per_min)

    def _headers(self) -> dict:
        h = {"Content-Type": "application/json"}
        key = os.environ.get(self.key_env)
        if key:
            h["Authorization"] = f"Bearer {key}"
        return h

    def complete(self, messages: Sequence[dict]) -> str:
        payload = {"model": self.model, "messages": check_messages(messages)}
        last_err: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(min(self.backoff_cap, self.backoff * 2 ** (attempt - 1)))
            if self._bucket:
                self._bucket.acquire()
            try:
                resp = self.session.post(self.endpoint, json=payload, headers=self._headers(),
                                         timeout=self.timeout)
            except requests.RequestException as exc:
                last_err = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_err = ChatClientError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ChatClientError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ChatClientError(f"malformed chat response: {exc}") from exc
        raise ChatClientError(f"gave up after {self.max_retries + 1} attempts: {last_err}")


class ScriptedClient:
    """Replies from a fixed list (cycled) or a function of the messages; records every call."""

    def __init__(self, replies: Sequence[str] | Callable[[list[dict]], str]):
        self.replies = replies
        self.calls: list[list[dict]] = []
        self._lock = threading.Lock()

    def complete(self, messages: Sequence[dict]) -> str:
        msgs = check_messages(messages)
        with self._lock:
            n = len(self.calls)
            self.calls.append(msgs)
        if callable(self.replies):
            return self.replies(msgs)
        return self.replies[n % len(self.replies)]
