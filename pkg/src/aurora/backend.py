"""Uniform access to chat-completion endpoints plus a deterministic mock.

The HTTP flavor speaks the OpenAI-compatible chat-completions shape. The
mock flavor answers from an ordered matcher script and falls back to a
seed-deterministic generator, so every downstream stage runs offline and
reproducibly: with kind=mock and fixed seeds the whole pipeline is
byte-identical across runs.
"""

from __future__ import annotations

import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import httpx

TOKEN_ENV_VAR = "AURORA_API_TOKEN"

GENERATION_MAX_TOKENS = 4096
JUDGING_MAX_TOKENS = 1024
SEGMENTATION_MAX_TOKENS = 8192


class BackendError(Exception):
    pass


class TransportError(BackendError):
    """Exhausted retries or unreachable endpoint; carries the attempt count."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class ProtocolError(BackendError):
    """Malformed request or upstream payload; never retried."""


@dataclass(frozen=True)
class DecodingConfig:
    mode: str  # "greedy" | "nucleus"
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = GENERATION_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.mode not in ("greedy", "nucleus"):
            raise ValueError(f"unknown decoding mode {self.mode!r}")
        if self.mode == "nucleus" and not (0.0 < self.top_p <= 1.0 and self.temperature > 0.0):
            raise ValueError("nucleus decoding needs 0 < top_p <= 1 and temperature > 0")


def generation_decoding() -> DecodingConfig:
    return DecodingConfig(mode="nucleus", temperature=0.7, top_p=0.85, max_tokens=GENERATION_MAX_TOKENS)


def judging_decoding() -> DecodingConfig:
    return DecodingConfig(mode="nucleus", temperature=0.7, top_p=0.85, max_tokens=JUDGING_MAX_TOKENS)


def segmentation_decoding() -> DecodingConfig:
    return DecodingConfig(mode="greedy", max_tokens=SEGMENTATION_MAX_TOKENS)


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    decoding: DecodingConfig
    seed: int

    def __post_init__(self) -> None:
        if not self.user:
            raise ValueError("user text must be non-empty")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base_ms: int = 100


MockFallback = Callable[[ChatRequest], str]


class MockBehavior:
    """Scripted responder: first matching substring wins, in declared order.

    A canned entry may be a list of texts; successive hits of the same
    matcher consume successive entries, last one repeating, which lets tests
    script retry sequences. Single-text entries and the fallback generator
    are pure functions of the request (seed included), so outside of
    list-valued entries the same (request, seed) always yields the same
    text. Thread-safe; tracks peak concurrent in-flight calls for
    concurrency assertions.
    """

    def __init__(
        self,
        script: Sequence[tuple[str, str | Sequence[str]]] = (),
        fallback: MockFallback | None = None,
        latency_ms_range: tuple[int, int] | None = None,
    ):
        self.script = [(m, c) for m, c in script]
        self.fallback = fallback if fallback is not None else default_mock_responder
        self.latency_ms_range = latency_ms_range
        self._lock = threading.Lock()
        self._hits: dict[int, int] = {}
        self._in_flight = 0
        self.peak_in_flight = 0
        self.calls = 0

    def respond(self, request: ChatRequest) -> str:
        with self._lock:
            self._in_flight += 1
            self.calls += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
        try:
            if self.latency_ms_range is not None:
                lo, hi = self.latency_ms_range
                jitter = random.Random(request.seed ^ 0xA5A5).uniform(lo, hi)
                time.sleep(jitter / 1000.0)
            haystack = request.system + "\n" + request.user
            for idx, (matcher, canned) in enumerate(self.script):
                if matcher in haystack:
                    if isinstance(canned, str):
                        return canned
                    with self._lock:
                        hit = self._hits.get(idx, 0)
                        self._hits[idx] = hit + 1
                    return canned[min(hit, len(canned) - 1)]
            return self.fallback(request)
        finally:
            with self._lock:
                self._in_flight -= 1


@dataclass
class BackendConfig:
    kind: str  # "http_openai_compatible" | "mock"
    model_name: str
    endpoint_url: str | None = None
    max_concurrency: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    timeout_ms: int = 60_000
    mock: MockBehavior | None = None
    _limiter: threading.BoundedSemaphore | None = field(
        default=None, init=False, repr=False, compare=False
    )
    _limiter_lock: threading.Lock = field(
        default_factory=threading.Lock, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        if self.kind not in ("http_openai_compatible", "mock"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http_openai_compatible" and not self.endpoint_url:
            raise ValueError("http backend requires endpoint_url")
        if self.kind == "mock" and self.mock is None:
            self.mock = MockBehavior()
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.retry.max_attempts < 1:
            raise ValueError("retry.max_attempts must be >= 1")

    @property
    def limiter(self) -> threading.BoundedSemaphore:
        with self._limiter_lock:
            if self._limiter is None:
                self._limiter = threading.BoundedSemaphore(self.max_concurrency)
            return self._limiter


def mock_behavior(
    script: Sequence[tuple[str, str | Sequence[str]]] = (),
    fallback: MockFallback | None = None,
    model_name: str = "mock",
    max_concurrency: int = 4,
    latency_ms_range: tuple[int, int] | None = None,
) -> BackendConfig:
    """BackendConfig(kind=mock) around a scripted MockBehavior."""
    return BackendConfig(
        kind="mock",
        model_name=model_name,
        max_concurrency=max_concurrency,
        mock=MockBehavior(script=script, fallback=fallback, latency_ms_range=latency_ms_range),
    )


@dataclass(frozen=True)
class CompletionResult:
    ok: bool
    text: str | None
    error: str | None
    attempts: int


# ---------------------------------------------------------------------------
# Deterministic fallback generator (pure function of the request)
# ---------------------------------------------------------------------------

_SEG_PAYLOAD_START = "**Text to process:**"
_SEG_PAYLOAD_END = "\nPlease output directly"
_STEP_KEY_RE = re.compile(r'"Step (\d+)"')

_WORDS = (
    "compute the total first",
    "apply the distributive rule",
    "substitute the known value",
    "simplify both sides",
    "collect the like terms",
    "divide by the coefficient",
    "check the boundary case",
    "therefore the result follows",
    "combine the partial sums",
    "verify against the estimate",
)


def _mock_generation_text(rng: random.Random) -> str:
    paragraphs = []
    for _ in range(2 + rng.randrange(4)):
        sentences = [
            _WORDS[rng.randrange(len(_WORDS))].capitalize() + "."
            for _ in range(1 + rng.randrange(3))
        ]
        paragraphs.append(" ".join(sentences))
    return "\n\n".join(paragraphs)


def _mock_segmentation_text(user: str) -> str:
    start = user.rfind(_SEG_PAYLOAD_START)
    payload = user[start + len(_SEG_PAYLOAD_START):] if start >= 0 else user
    end = payload.rfind(_SEG_PAYLOAD_END)
    if end >= 0:
        payload = payload[:end]
    blocks = [b.strip() for b in re.split(r"(?:\r?\n){2,}", payload) if b.strip()]
    if not blocks:
        blocks = [payload.strip() or "empty"]
    return json.dumps(
        {f"Step {i}": block for i, block in enumerate(blocks, start=1)},
        ensure_ascii=False,
    )


def _mock_judge_text(user: str, seed: int) -> str:
    indices = [int(m) for m in _STEP_KEY_RE.findall(user)]
    n = max(indices) if indices else 1
    rng = random.Random(seed ^ 0x5EED)
    bits = ["1" if rng.random() < 0.8 else "0" for _ in range(n)]
    return f"Checked each step against the standard answer. judge_result=[{', '.join(bits)}]"


def default_mock_responder(request: ChatRequest) -> str:
    """Stage-aware canned responses so the full pipeline runs offline."""
    if _SEG_PAYLOAD_START in request.user:
        return _mock_segmentation_text(request.user)
    if "judge_result" in request.user or "judge_result" in request.system:
        return _mock_judge_text(request.user, request.seed)
    return _mock_generation_text(random.Random(request.seed))


# ---------------------------------------------------------------------------
# Completion calls
# ---------------------------------------------------------------------------


def _http_body(request: ChatRequest, config: BackendConfig) -> dict:
    greedy = request.decoding.mode == "greedy"
    return {
        "model": config.model_name,
        "messages": [
            {"role": "system", "content": request.system},
            {"role": "user", "content": request.user},
        ],
        "temperature": 0.0 if greedy else request.decoding.temperature,
        "top_p": 1.0 if greedy else request.decoding.top_p,
        "max_tokens": request.decoding.max_tokens,
        "seed": request.seed,
    }


def _parse_http_payload(payload: dict) -> str:
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"malformed completion payload: {exc}") from exc
    if not isinstance(content, str):
        raise ProtocolError("completion content is not text")
    return content


def _http_once(request: ChatRequest, config: BackendConfig) -> str:
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(TOKEN_ENV_VAR)
    if token:
        headers["Authorization"] = f"Bearer {token}"
    assert config.endpoint_url is not None
    resp = httpx.post(
        config.endpoint_url,
        json=_http_body(request, config),
        headers=headers,
        timeout=config.timeout_ms / 1000.0,
    )
    if resp.status_code == 429 or resp.status_code >= 500:
        raise _Retryable(f"status {resp.status_code}")
    if resp.status_code >= 400:
        raise ProtocolError(f"non-retryable status {resp.status_code}")
    try:
        payload = resp.json()
    except (json.JSONDecodeError, ValueError) as exc:
        raise ProtocolError(f"non-JSON completion payload: {exc}") from exc
    return _parse_http_payload(payload)


class _Retryable(Exception):
    pass


def complete_detailed(request: ChatRequest, config: BackendConfig) -> CompletionResult:
    """One completion with retries on transient failures; never raises."""
    attempts = 0
    last_error = ""
    with config.limiter:
        if config.kind == "mock":
            assert config.mock is not None
            try:
                return CompletionResult(True, config.mock.respond(request), None, 1)
            except Exception as exc:  # scripted failure hooks may raise
                return CompletionResult(False, None, str(exc), 1)
        for attempt in range(1, config.retry.max_attempts + 1):
            attempts = attempt
            try:
                return CompletionResult(True, _http_once(request, config), None, attempt)
            except ProtocolError as exc:
                return CompletionResult(False, None, str(exc), attempt)
            except (_Retryable, httpx.TimeoutException, httpx.TransportError) as exc:
                last_error = str(exc) or type(exc).__name__
                if attempt < config.retry.max_attempts:
                    time.sleep(config.retry.backoff_base_ms * (2 ** (attempt - 1)) / 1000.0)
    return CompletionResult(False, None, f"exhausted retries: {last_error}", attempts)


def complete(request: ChatRequest, config: BackendConfig) -> str:
    """Returns the assistant text, or raises TransportError/ProtocolError."""
    result = complete_detailed(request, config)
    if result.ok:
        assert result.text is not None
        return result.text
    if result.error and result.error.startswith("exhausted retries"):
        raise TransportError(result.error, attempts=result.attempts)
    raise ProtocolError(result.error or "completion failed")


def complete_many(requests: Sequence[ChatRequest], config: BackendConfig) -> list[CompletionResult]:
    """Input-ordered results; per-item failures never abort the batch."""
    if not requests:
        return []
    if config.max_concurrency == 1 or len(requests) == 1:
        return [complete_detailed(req, config) for req in requests]
    from concurrent.futures import ThreadPoolExecutor

    workers = min(len(requests), config.max_concurrency)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(complete_detailed, req, config) for req in requests]
        return [f.result() for f in futures]
