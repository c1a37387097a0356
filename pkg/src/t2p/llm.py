"""Provider-agnostic chat-completion gateway with deterministic test backends.

Backends: `mock` answers from a rule table, `replay` serves recorded fixture
files keyed by prompt hash, `remote` POSTs to a configurable HTTP endpoint
with retries and exponential backoff. Every attempt, successful or not,
lands in the UsageLedger so token spend is observable (and provably zero
when only deterministic backends run).
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import httpx

from .errors import FixtureMiss, RemoteRejected, TimeoutExhausted, UnparseableResponse

PURPOSES = ("extraction", "refinement")

DEFAULT_MAX_RETRIES = 2
DEFAULT_BACKOFF_BASE_S = 0.25
DEFAULT_TIMEOUT_S = 10.0
DEFAULT_MAX_IN_FLIGHT = 8
# Retries stop once a stage has spent this long, so one pipeline stage cannot
# stall a request much past its budget.
DEFAULT_STAGE_BUDGET_S = 12.0


def prompt_hash(prompt: str) -> str:
    """Stable 64-bit hash of the prompt bytes, as 16 hex chars."""
    return hashlib.blake2b(prompt.encode("utf-8"), digest_size=8).hexdigest()


def approx_token_count(text: str) -> int:
    """ceil(bytes/4): consistent, tokenizer-free accounting for test backends."""
    return math.ceil(len(text.encode("utf-8")) / 4)


def recover_json_object(text: str) -> dict:
    """Best-effort extraction of a single JSON object from completion text.

    Tries the raw text, then a fenced ``` block, then the outermost braces.
    Raises UnparseableResponse when nothing yields an object.
    """
    candidates = [text.strip()]
    fenced = re.search(r"```(?:json)?\s*(.*?)```", text, re.DOTALL)
    if fenced:
        candidates.append(fenced.group(1).strip())
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        candidates.append(text[start : end + 1])
    for candidate in candidates:
        try:
            payload = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(payload, dict):
            return payload
    raise UnparseableResponse("no JSON object found in response")


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    purpose: str
    max_output_tokens: int = 512
    temperature: float = 0.0

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt is empty")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.purpose not in PURPOSES:
            raise ValueError(f"unknown purpose {self.purpose!r}")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    input_tokens: int
    output_tokens: int
    latency_ms: float
    backend: str


class UsageLedger:
    """Thread-safe, monotonically non-decreasing per-purpose counters."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts = {purpose: {"calls": 0, "input_tokens": 0, "output_tokens": 0} for purpose in PURPOSES}

    def record(self, purpose: str, input_tokens: int = 0, output_tokens: int = 0) -> None:
        if input_tokens < 0 or output_tokens < 0:
            raise ValueError("token counts must be >= 0")
        with self._lock:
            bucket = self._counts[purpose]
            bucket["calls"] += 1
            bucket["input_tokens"] += input_tokens
            bucket["output_tokens"] += output_tokens

    def report(self) -> dict:
        with self._lock:
            return {purpose: dict(bucket) for purpose, bucket in self._counts.items()}


def usage_report(ledger: UsageLedger) -> dict:
    return ledger.report()


class _TransportFailure(Exception):
    """Internal marker for retryable transport-level failures."""


class MockBackend:
    """Deterministic rule table keyed by (purpose, prompt hash)."""

    name = "mock"
    retryable = False

    def __init__(self, default: str | None = None):
        self._rules: dict[tuple[str, str], str] = {}
        self._default = default

    def register(self, purpose: str, prompt: str, text: str) -> None:
        self._rules[(purpose, prompt_hash(prompt))] = text

    def send(self, request: CompletionRequest) -> tuple[str, int | None, int | None]:
        key = (request.purpose, prompt_hash(request.prompt))
        text = self._rules.get(key, self._default)
        if text is None:
            raise FixtureMiss(f"{request.purpose}/{key[1]}")
        return text, None, None


class ReplayBackend:
    """Serves recorded responses from a directory of <prompt-hash>.txt files."""

    name = "replay"
    retryable = False

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def fixture_path(self, prompt: str) -> Path:
        return self.directory / f"{prompt_hash(prompt)}.txt"

    def record(self, prompt: str, text: str) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.fixture_path(prompt)
        path.write_text(text, encoding="utf-8")
        return path

    def send(self, request: CompletionRequest) -> tuple[str, int | None, int | None]:
        path = self.fixture_path(request.prompt)
        if not path.exists():
            raise FixtureMiss(prompt_hash(request.prompt))
        return path.read_text(encoding="utf-8"), None, None


class RemoteBackend:
    """HTTP chat-completion backend; the vendor is configuration, not code.

    Body shape: {model, messages, temperature, max_tokens}. The response is
    expected to carry choices[0].message.content and optionally usage token
    counts (approximated from bytes when absent).
    """

    name = "remote"
    retryable = True

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        model: str = "chat-default",
        timeout_s: float = DEFAULT_TIMEOUT_S,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout_s, headers=headers, transport=transport)

    def send(self, request: CompletionRequest) -> tuple[str, int | None, int | None]:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        try:
            response = self._client.post(self.endpoint, json=body)
        except httpx.TransportError as exc:
            raise _TransportFailure(str(exc) or type(exc).__name__) from exc
        if response.status_code != 200:
            raise RemoteRejected(response.status_code, response.text[:200])
        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise RemoteRejected(response.status_code, "unexpected response shape") from None
        usage = data.get("usage") or {}
        return text, usage.get("prompt_tokens"), usage.get("completion_tokens")

    def close(self) -> None:
        self._client.close()


class LlmGateway:
    """Drives a backend with retry, backoff, concurrency, and usage accounting."""

    def __init__(
        self,
        backend,
        ledger: UsageLedger | None = None,
        max_retries: int = DEFAULT_MAX_RETRIES,
        backoff_base_s: float = DEFAULT_BACKOFF_BASE_S,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        stage_budget_s: float = DEFAULT_STAGE_BUDGET_S,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self.stage_budget_s = stage_budget_s
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        attempts = 1 + (self.max_retries if self.backend.retryable else 0)
        with self._slots:
            started = time.perf_counter()
            for attempt in range(attempts):
                try:
                    text, input_tokens, output_tokens = self.backend.send(request)
                except _TransportFailure as exc:
                    self.ledger.record(request.purpose)
                    backoff = self.backoff_base_s * (2 ** attempt)
                    elapsed = time.perf_counter() - started
                    if attempt == attempts - 1 or elapsed + backoff >= self.stage_budget_s:
                        raise TimeoutExhausted(attempt + 1, str(exc)) from exc
                    self._sleep(backoff)
                    continue
                except (FixtureMiss, RemoteRejected):
                    self.ledger.record(request.purpose)
                    raise
                if input_tokens is None:
                    input_tokens = approx_token_count(request.prompt)
                if output_tokens is None:
                    output_tokens = approx_token_count(text)
                self.ledger.record(request.purpose, input_tokens, output_tokens)
                return CompletionResponse(
                    text=text,
                    input_tokens=input_tokens,
                    output_tokens=output_tokens,
                    latency_ms=(time.perf_counter() - started) * 1000.0,
                    backend=self.backend.name,
                )
        raise AssertionError("unreachable")
