"""Wire-level contracts for the three model capabilities the toolkit needs:
text generation, token log-probability scoring, and per-token embeddings.

The HTTP implementation speaks the common hosted chat/completion JSON format;
endpoint, model, and key come from GQ_API_BASE / GQ_MODEL / GQ_API_KEY.
Every operation is an idempotent read, so retrying is always safe.
"""
from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import requests

DEFAULT_ANNOTATION_TEMPERATURE = 0.2
DEFAULT_JUDGE_TEMPERATURE = 0.7

ENV_API_BASE = "GQ_API_BASE"
ENV_MODEL = "GQ_MODEL"
ENV_API_KEY = "GQ_API_KEY"


class BackendError(RuntimeError):
    """Base class for backend failures."""


class TransientBackendError(BackendError):
    """Retryable failure: connection trouble, 5xx, rate limiting."""


class RetryExhaustedError(BackendError):
    def __init__(self, attempts: int, last: Exception):
        self.attempts = attempts
        self.last = last
        super().__init__(f"backend failed after {attempts} attempts: {last}")


class AuthenticationError(BackendError):
    pass


class ContextLengthError(BackendError):
    pass


class CapabilityError(BackendError):
    """The backend does not support the requested capability."""


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    temperature: float = DEFAULT_ANNOTATION_TEMPERATURE
    max_tokens: int = 1024
    stop: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class TokenScore:
    token: str
    logprob: float

    def __post_init__(self):
        if not (self.logprob <= 0.0 and self.logprob == self.logprob):
            raise ValueError(f"logprob must be finite and <= 0, got {self.logprob}")


@dataclass(frozen=True)
class TokenEmbedding:
    token: str
    vector: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "vector", tuple(self.vector))


class GenerationBackend(Protocol):
    def generate_text(self, req: GenerationRequest) -> str: ...


class ScoringBackend(Protocol):
    def score_tokens(self, context: str, continuation: str) -> list[TokenScore]: ...


class EmbeddingBackend(Protocol):
    def embed_tokens(self, text: str) -> list[TokenEmbedding]: ...


def _check_scoring_args(continuation: str) -> None:
    if not continuation:
        raise ValueError("continuation must be non-empty")


def _check_embedding_args(text: str) -> None:
    if not text:
        raise ValueError("text must be non-empty")


@dataclass
class RetryPolicy:
    max_attempts: int = 4
    base_delay: float = 0.5
    max_delay: float = 8.0

    def run(self, fn):
        """Call fn with exponential backoff on TransientBackendError."""
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                return fn()
            except TransientBackendError as exc:
                last = exc
                if attempt + 1 < self.max_attempts:
                    time.sleep(min(self.base_delay * 2**attempt, self.max_delay))
        raise RetryExhaustedError(self.max_attempts, last)


@dataclass
class BackendConfig:
    api_base: str
    model: str
    api_key: str = ""
    max_in_flight: int = 4
    timeout: float = 120.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    @classmethod
    def from_env(cls, **overrides) -> "BackendConfig":
        base = os.environ.get(ENV_API_BASE, "")
        model = os.environ.get(ENV_MODEL, "")
        key = os.environ.get(ENV_API_KEY, "")
        cfg = cls(api_base=base, model=model, api_key=key)
        for k, v in overrides.items():
            setattr(cfg, k, v)
        if not cfg.api_base:
            raise BackendError(
                f"no backend endpoint configured: set {ENV_API_BASE} "
                f"(and usually {ENV_MODEL}, {ENV_API_KEY}) or use --backend stub"
            )
        return cfg


class HttpBackend:
    """Chat-completion-compatible HTTP backend implementing all three contracts.

    Scoring uses the echo+logprobs completions format; token embeddings use an
    embeddings endpoint queried once per whitespace token. Servers lacking
    those endpoints surface as CapabilityError.
    """

    def __init__(self, config: BackendConfig):
        self.config = config
        self._session = requests.Session()
        self._gate = threading.Semaphore(config.max_in_flight)

    # -- wire plumbing --

    def _headers(self) -> dict:
        h = {"Content-Type": "application/json"}
        if self.config.api_key:
            h["Authorization"] = f"Bearer {self.config.api_key}"
        return h

    def _post(self, path: str, payload: dict) -> dict:
        url = self.config.api_base.rstrip("/") + path

        def attempt() -> dict:
            with self._gate:
                try:
                    resp = self._session.post(
                        url, json=payload, headers=self._headers(), timeout=self.config.timeout
                    )
                except requests.RequestException as exc:
                    raise TransientBackendError(str(exc)) from exc
            if resp.status_code in (401, 403):
                raise AuthenticationError(f"{resp.status_code}: {resp.text[:200]}")
            if resp.status_code == 400 and "context" in resp.text.lower():
                raise ContextLengthError(resp.text[:200])
            if resp.status_code == 404:
                raise CapabilityError(f"endpoint {path} not supported by server")
            if resp.status_code == 429 or resp.status_code >= 500:
                raise TransientBackendError(f"{resp.status_code}: {resp.text[:200]}")
            if resp.status_code != 200:
                raise BackendError(f"{resp.status_code}: {resp.text[:200]}")
            return resp.json()

        return self.config.retry.run(attempt)

    # -- capabilities --

    def generate_text(self, req: GenerationRequest) -> str:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.stop:
            payload["stop"] = list(req.stop)
        data = self._post("/chat/completions", payload)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion response: {data!r}") from exc

    def score_tokens(self, context: str, continuation: str) -> list[TokenScore]:
        _check_scoring_args(continuation)
        payload = {
            "model": self.config.model,
            "prompt": (context + " " + continuation).strip(),
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
        }
        data = self._post("/completions", payload)
        try:
            lp = data["choices"][0]["logprobs"]
            tokens = lp["tokens"]
            logprobs = lp["token_logprobs"]
        except (KeyError, IndexError, TypeError) as exc:
            raise CapabilityError("server returned no logprobs") from exc
        # keep only the continuation's tail: align on the server's own token
        # text, since tokenizers carry leading spaces the raw prompt lacks
        boundary = sum(len(t) for t in tokens) - len(continuation)
        out, consumed = [], 0
        for tok, logp in zip(tokens, logprobs):
            consumed += len(tok)
            if consumed > boundary and logp is not None:
                out.append(TokenScore(token=tok, logprob=min(0.0, float(logp))))
        if not out:
            raise CapabilityError("no continuation tokens scored")
        return out

    def embed_tokens(self, text: str) -> list[TokenEmbedding]:
        _check_embedding_args(text)
        tokens = text.split()
        data = self._post("/embeddings", {"model": self.config.model, "input": tokens})
        try:
            vectors = [row["embedding"] for row in data["data"]]
        except (KeyError, TypeError) as exc:
            raise CapabilityError("server returned no embeddings") from exc
        if len(vectors) != len(tokens):
            raise BackendError("embedding count does not match token count")
        return [TokenEmbedding(token=t, vector=tuple(v)) for t, v in zip(tokens, vectors)]


def score_tokens_checked(backend: ScoringBackend, context: str, continuation: str) -> list[TokenScore]:
    """Precondition-checking wrapper shared by callers and stubs."""
    _check_scoring_args(continuation)
    return backend.score_tokens(context, continuation)


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    num = sum(a * b for a, b in zip(u, v))
    nu = sum(a * a for a in u) ** 0.5
    nv = sum(b * b for b in v) ** 0.5
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return num / (nu * nv)
