"""Chat-completion provider abstraction with retry/backoff and offline test doubles.

Credentials come from the environment only (never from config files):
``SKILLROUTE_LLM_API_KEY`` and ``SKILLROUTE_LLM_API_BASE``. The HTTP client
speaks the common ``POST {base}/chat/completions`` shape so any compatible
gateway works; everything else in the toolkit sees only :class:`ChatClient`.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import httpx

from skillroute.core import ArgumentError, SkillrouteError

API_KEY_ENV = "SKILLROUTE_LLM_API_KEY"
API_BASE_ENV = "SKILLROUTE_LLM_API_BASE"


class TransportError(SkillrouteError):
    """Provider unreachable after retries; carries the attempt count."""

    def __init__(self, message: str, attempts: int):
        self.attempts = attempts
        super().__init__(f"{message} (after {attempts} attempt(s))")


@dataclass(frozen=True)
class ProviderProfile:
    """One provider's identity, decode parameters, and rate-limit policy."""

    name: str
    model: str
    temperature: float = 0.7
    max_output_tokens: int = 2048
    max_attempts: int = 3
    base_backoff_s: float = 1.0
    timeout_s: float = 60.0
    endpoint: str | None = None  # None -> SKILLROUTE_LLM_API_BASE

    def __post_init__(self) -> None:
        if not self.name:
            raise ArgumentError("provider profile needs a name")
        if self.max_attempts < 1:
            raise ArgumentError("max_attempts must be >= 1")


@dataclass(frozen=True)
class ChatResult:
    """One completed call: text plus how it was obtained."""

    text: str
    attempts: int = 1
    latency_s: float = 0.0
    backoff_s: float = 0.0


class ChatClient(Protocol):
    def complete(self, system: str, user: str, profile: ProviderProfile) -> ChatResult: ...


class HttpChatClient:
    """Chat-completions client with exponential backoff on transport and 429/5xx."""

    def __init__(self, api_key: str | None = None, api_base: str | None = None):
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self._api_base = api_base if api_base is not None else os.environ.get(API_BASE_ENV, "")

    def complete(self, system: str, user: str, profile: ProviderProfile) -> ChatResult:
        base = profile.endpoint or self._api_base
        if not base:
            raise TransportError(
                f"no endpoint for provider {profile.name!r}; set {API_BASE_ENV}", attempts=0
            )
        url = base.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        payload = {
            "model": profile.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": profile.temperature,
            "max_tokens": profile.max_output_tokens,
        }
        start = time.perf_counter()
        backoff_total = 0.0
        last_error = "unknown"
        for attempt in range(1, profile.max_attempts + 1):
            try:
                response = httpx.post(
                    url, json=payload, headers=headers, timeout=profile.timeout_s
                )
            except httpx.HTTPError as err:
                last_error = f"transport failure: {err}"
            else:
                if response.status_code == 200:
                    try:
                        text = response.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, ValueError) as err:
                        raise TransportError(
                            f"provider {profile.name!r} returned an unexpected body: {err}",
                            attempts=attempt,
                        ) from err
                    return ChatResult(
                        text=text,
                        attempts=attempt,
                        latency_s=time.perf_counter() - start - backoff_total,
                        backoff_s=backoff_total,
                    )
                if response.status_code not in (429, 500, 502, 503, 504):
                    raise TransportError(
                        f"provider {profile.name!r} rejected the request "
                        f"({response.status_code}): {response.text[:200]}",
                        attempts=attempt,
                    )
                last_error = f"status {response.status_code}"
            if attempt < profile.max_attempts:
                wait = profile.base_backoff_s * (2 ** (attempt - 1))
                backoff_total += wait
                time.sleep(wait)
        raise TransportError(
            f"provider {profile.name!r} unreachable: {last_error}", attempts=profile.max_attempts
        )


class CannedChatClient:
    """Replays scripted responses in call order. Single-threaded use only."""

    def __init__(self, responses: Sequence[str]):
        self._responses = list(responses)
        self._cursor = 0
        self._lock = threading.Lock()
        self.calls: list[tuple[str, str]] = []

    def complete(self, system: str, user: str, profile: ProviderProfile) -> ChatResult:
        with self._lock:
            if self._cursor >= len(self._responses):
                raise TransportError("canned responses exhausted", attempts=1)
            text = self._responses[self._cursor]
            self._cursor += 1
            self.calls.append((system, user))
        return ChatResult(text=text)


class FunctionChatClient:
    """Derives the response from the prompt; safe under concurrent calls."""

    def __init__(self, fn: Callable[[str, str], str]):
        self._fn = fn

    def complete(self, system: str, user: str, profile: ProviderProfile) -> ChatResult:
        return ChatResult(text=self._fn(system, user))
