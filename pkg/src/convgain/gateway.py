"""Provider gateway: schema-validated completions, retries, disk cache, latency."""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import jsonschema
import numpy as np

from .providers import ChatProvider, EmbeddingProvider, LogprobProvider, ProviderCallError
from .schemas import SCHEMAS, UnknownSchemaError, validate_payload


class GatewayConfigError(ValueError):
    """Misconfiguration: unknown provider or schema id."""


class GatewayProviderError(RuntimeError):
    """Provider kept failing after all retries."""


class GatewayResponseError(RuntimeError):
    """Response never validated against its schema; raw text preserved."""

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class PromptRequest:
    provider_id: str
    model_id: str
    prompt_text: str
    params: tuple[tuple[str, Any], ...] = ()
    response_schema_id: str = ""
    # Structured payload for mock providers; excluded from the cache digest
    # (its content is derivable from prompt_text for real providers).
    context: Mapping[str, Any] | None = None

    @staticmethod
    def make(provider_id, model_id, prompt_text, params=None, schema_id="", context=None):
        items = tuple(sorted((params or {}).items()))
        return PromptRequest(provider_id, model_id, prompt_text, items, schema_id, context)


def cache_key(request: PromptRequest) -> str:
    import hashlib

    payload = json.dumps(
        {
            "provider_id": request.provider_id,
            "model_id": request.model_id,
            "prompt_text": request.prompt_text,
            "params": list(request.params),
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LatencyRecord:
    label: str
    seconds: float
    timestamp: float


@dataclass
class Gateway:
    chat_providers: dict[str, ChatProvider]
    embedder: EmbeddingProvider | None = None
    logprob_provider: LogprobProvider | None = None
    cache_dir: Path | None = None
    retries: int = 2
    backoff_base: float = 0.0  # seconds; exponential (base * 2**attempt)
    cache_policy: str = "use"  # default for complete() calls that pass None
    latency_records: list[LatencyRecord] = field(default_factory=list)
    provider_calls: dict[str, int] = field(default_factory=dict)

    def complete(self, request: PromptRequest, cache_policy: str | None = None) -> Any:
        """Return the schema-validated payload for a prompt request.

        cache_policy: "use" (read+write), "refresh" (write only), "off";
        None falls back to the gateway-wide default.
        """
        cache_policy = cache_policy or self.cache_policy
        if request.response_schema_id not in SCHEMAS:
            raise GatewayConfigError(f"unknown response schema {request.response_schema_id!r}")
        if request.provider_id not in self.chat_providers:
            raise GatewayConfigError(f"unknown provider {request.provider_id!r}")
        key = cache_key(request)
        if cache_policy == "use":
            cached = self._cache_read(key)
            if cached is not None:
                return cached["validated_payload"]

        provider = self.chat_providers[request.provider_id]
        label = f"complete:{request.response_schema_id}"
        last_error: Exception | None = None
        raw = None
        for attempt in range(self.retries + 1):
            if attempt and self.backoff_base:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            start = time.perf_counter()
            try:
                raw = provider.complete(request)
            except ProviderCallError as exc:
                last_error = exc
                continue
            finally:
                self._record(label, time.perf_counter() - start)
                self.provider_calls[request.provider_id] = (
                    self.provider_calls.get(request.provider_id, 0) + 1
                )
            try:
                payload = json.loads(raw)
                validate_payload(request.response_schema_id, payload)
            except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
                last_error = GatewayResponseError(str(exc), raw=raw)
                continue
            if cache_policy in ("use", "refresh"):
                self._cache_write(key, request, raw, payload)
            return payload
        if isinstance(last_error, GatewayResponseError):
            raise GatewayResponseError(
                f"schema-invalid response after {self.retries + 1} attempts: {last_error}",
                raw=last_error.raw,
            )
        raise GatewayProviderError(
            f"provider {request.provider_id!r} failed after {self.retries + 1} attempts: {last_error}"
        )

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("embed requires at least one text")
        if self.embedder is None:
            raise GatewayConfigError("no embedding provider configured")
        start = time.perf_counter()
        vectors = self.embedder.embed(texts)
        self._record("embed", time.perf_counter() - start)
        return vectors

    def logprobs(self, text: str) -> list[tuple[str, float]] | None:
        """Per-token base-2 log-probabilities, or None when no provider is set.

        Absence is explicit: downstream surprisal features become null.
        """
        if self.logprob_provider is None:
            return None
        start = time.perf_counter()
        trace = self.logprob_provider.logprobs(text)
        self._record("logprobs", time.perf_counter() - start)
        return trace

    def latency_report(self) -> dict[str, tuple[float, float, int]]:
        """Per-label (mean, sample std, N) over recorded latencies."""
        by_label: dict[str, list[float]] = {}
        for rec in self.latency_records:
            by_label.setdefault(rec.label, []).append(rec.seconds)
        report = {}
        for label, xs in sorted(by_label.items()):
            n = len(xs)
            mean = sum(xs) / n
            std = math.sqrt(sum((x - mean) ** 2 for x in xs) / (n - 1)) if n > 1 else 0.0
            report[label] = (mean, std, n)
        return report

    def _record(self, label: str, seconds: float) -> None:
        self.latency_records.append(LatencyRecord(label, seconds, time.time()))

    def _cache_path(self, key: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return Path(self.cache_dir) / f"{key}.json"

    def _cache_read(self, key: str) -> dict | None:
        path = self._cache_path(key)
        if path is None or not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def _cache_write(self, key: str, request: PromptRequest, raw: str, payload: Any) -> None:
        path = self._cache_path(key)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {
            "request": {
                "provider_id": request.provider_id,
                "model_id": request.model_id,
                "prompt_text": request.prompt_text,
                "params": list(request.params),
                "response_schema_id": request.response_schema_id,
            },
            "raw_response": raw,
            "validated_payload": payload,
            "latency": self.latency_records[-1].seconds if self.latency_records else None,
        }
        tmp = path.with_suffix(f".tmp.{os.getpid()}")
        tmp.write_text(json.dumps(entry, sort_keys=True), encoding="utf-8")
        tmp.rename(path)  # atomic on POSIX
