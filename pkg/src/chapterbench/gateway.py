"""Uniform access to chat-completion and embedding providers.

One gateway fronts every model call in the toolkit: it applies transport
retries with exponential backoff, records token usage and cost exactly once
per call, caches embeddings by content hash, and caps per-provider
concurrency. A fully scripted mock provider makes end-to-end runs
deterministic for tests.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import httpx

from .schema import extract_json

# Stage tags carried on gateway calls; mock scripts are keyed by them.
TAG_KNOWLEDGE = "knowledge_structuring"
TAG_SEED = "seed_generation"
TAG_SELF_CONTAINMENT = "self_containment"
TAG_TRACE_INTEGRITY = "trace_integrity"
TAG_CONCISENESS = "conciseness"
TAG_SOURCE_REF = "source_reference_removal"
TAG_SOUNDNESS = "soundness"
TAG_FINAL_VERIFICATION = "final_verification"
TAG_REPAIR_FORMAT = "repair_format"
TAG_REPAIR_CONTENT = "repair_content"
TAG_EVAL = "eval"
TAG_TSGUESS = "ts_guessing"
TAG_CLASSIFY = "classify"


class GatewayError(Exception):
    """Terminal gateway failure (after the retry budget, or a fatal error)."""

    def __init__(self, message: str, attempts: int = 1, retriable: bool = False):
        super().__init__(message)
        self.attempts = attempts
        self.retriable = retriable


class TransportError(Exception):
    """One failed provider attempt; ``retriable`` drives the backoff loop."""

    def __init__(self, message: str, retriable: bool, status: int | None = None):
        super().__init__(message)
        self.retriable = retriable
        self.status = status


@dataclass
class ChatRequest:
    model_id: str
    messages: list[dict[str, str]]
    temperature: float = 0.0
    max_output_tokens: int | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass
class ChatResponse:
    text: str
    input_tokens: int = 0
    output_tokens: int = 0
    provider_latency: float = 0.0


@dataclass(frozen=True)
class Rate:
    usd_per_1m_input: float
    usd_per_1m_output: float

    def __post_init__(self) -> None:
        for value in (self.usd_per_1m_input, self.usd_per_1m_output):
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"pricing rates must be finite and non-negative, got {value!r}")


class PricingTable:
    """model_id -> per-million-token USD rates; unknown models cost zero."""

    def __init__(self, rates: dict[str, Rate] | None = None):
        self._rates = dict(rates or {})

    @classmethod
    def from_dict(cls, doc: dict[str, dict[str, float]]) -> "PricingTable":
        return cls(
            {
                model: Rate(float(entry["usd_per_1m_input"]), float(entry["usd_per_1m_output"]))
                for model, entry in doc.items()
            }
        )

    def cost(self, model_id: str, input_tokens: int, output_tokens: int) -> float:
        rate = self._rates.get(model_id)
        if rate is None:
            return 0.0
        return input_tokens / 1e6 * rate.usd_per_1m_input + output_tokens / 1e6 * rate.usd_per_1m_output


class CostLedger:
    """Thread-safe per-model token/cost accumulators with grand totals."""

    def __init__(self, pricing: PricingTable | None = None):
        self._pricing = pricing or PricingTable()
        self._lock = threading.Lock()
        self._rows: dict[str, dict[str, float]] = {}

    def record(self, model_id: str, input_tokens: int, output_tokens: int) -> None:
        usd = self._pricing.cost(model_id, input_tokens, output_tokens)
        with self._lock:
            row = self._rows.setdefault(model_id, {"input_tokens": 0, "output_tokens": 0, "usd": 0.0})
            row["input_tokens"] += input_tokens
            row["output_tokens"] += output_tokens
            row["usd"] += usd

    def per_model(self) -> dict[str, dict[str, float]]:
        with self._lock:
            return {model: dict(row) for model, row in self._rows.items()}

    def totals(self) -> dict[str, float]:
        rows = self.per_model()
        return {
            "input_tokens": sum(r["input_tokens"] for r in rows.values()),
            "output_tokens": sum(r["output_tokens"] for r in rows.values()),
            "usd": sum(r["usd"] for r in rows.values()),
        }

    def to_dict(self) -> dict[str, Any]:
        return {"per_model": self.per_model(), "totals": self.totals()}


def ledger_report(ledger: CostLedger) -> str:
    """Human-readable per-model and total usage rows."""
    rows = sorted(ledger.per_model().items())
    totals = ledger.totals()
    width = max([len("model")] + [len(m) for m, _ in rows])
    lines = [f"{'model':<{width}}  {'input_tokens':>14}  {'output_tokens':>14}  {'usd':>10}"]
    for model, row in rows:
        lines.append(
            f"{model:<{width}}  {int(row['input_tokens']):>14,}  {int(row['output_tokens']):>14,}  {row['usd']:>10.2f}"
        )
    lines.append(
        f"{'TOTAL':<{width}}  {int(totals['input_tokens']):>14,}  {int(totals['output_tokens']):>14,}  {totals['usd']:>10.2f}"
    )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Providers


def _resolve_path(doc: Any, path: str) -> Any:
    value = doc
    for part in path.split("."):
        if isinstance(value, list):
            value = value[int(part)]
        elif isinstance(value, dict):
            if part not in value:
                raise KeyError(path)
            value = value[part]
        else:
            raise KeyError(path)
    return value


def _auth_headers(config: "HttpProviderConfig") -> dict[str, str]:
    headers = {"Content-Type": "application/json"}
    if config.auth_env_var:
        credential = os.environ.get(config.auth_env_var)
        if not credential:
            raise TransportError(
                f"credential environment variable {config.auth_env_var!r} is not set",
                retriable=False,
            )
        scheme = f"{config.auth_scheme} " if config.auth_scheme else ""
        headers[config.auth_header] = f"{scheme}{credential}"
    return headers


@dataclass
class HttpProviderConfig:
    name: str
    base_url: str
    model_id: str
    auth_env_var: str = ""
    auth_header: str = "Authorization"
    auth_scheme: str = "Bearer"
    request_template: dict[str, Any] = field(
        default_factory=lambda: {"model": "$model", "messages": "$messages", "temperature": "$temperature"}
    )
    response_text_path: str = "choices.0.message.content"
    usage_input_path: str = "usage.prompt_tokens"
    usage_output_path: str = "usage.completion_tokens"
    supports_temperature: bool = True
    timeout: float = 120.0
    # Embedding-specific knobs (ignored by chat providers).
    response_vectors_path: str = "data"
    vector_item_path: str = "embedding"


class HttpChatProvider:
    """Chat provider speaking a configurable HTTP JSON protocol."""

    def __init__(self, config: HttpProviderConfig, client: httpx.Client | None = None):
        self.config = config
        self.name = config.name
        self.model_id = config.model_id
        self._client = client or httpx.Client(timeout=config.timeout)

    def _build_body(self, request: ChatRequest) -> dict[str, Any]:
        def substitute(value: Any) -> Any:
            if value == "$messages":
                return request.messages
            if value == "$model":
                return self.model_id
            if value == "$temperature":
                return request.temperature
            if value == "$max_tokens":
                return request.max_output_tokens
            if isinstance(value, dict):
                return {k: substitute(v) for k, v in value.items()}
            if isinstance(value, list):
                return [substitute(v) for v in value]
            return value

        body = {}
        for key, value in self.config.request_template.items():
            if value == "$temperature" and not self.config.supports_temperature:
                continue
            if value == "$max_tokens" and request.max_output_tokens is None:
                continue
            body[key] = substitute(value)
        return body

    def chat_once(self, request: ChatRequest, tag: str = "default") -> ChatResponse:
        try:
            response = self._client.post(
                self.config.base_url, json=self._build_body(request), headers=_auth_headers(self.config)
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"transport failure: {exc}", retriable=True) from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransportError(f"HTTP {response.status_code}", retriable=True, status=response.status_code)
        if response.status_code >= 400:
            raise TransportError(f"HTTP {response.status_code}", retriable=False, status=response.status_code)
        try:
            payload = response.json()
            text = str(_resolve_path(payload, self.config.response_text_path))
        except (ValueError, KeyError, IndexError) as exc:
            raise TransportError(f"malformed provider payload: {exc!r}", retriable=False) from exc
        return ChatResponse(
            text=text,
            input_tokens=_usage_or_zero(payload, self.config.usage_input_path),
            output_tokens=_usage_or_zero(payload, self.config.usage_output_path),
        )


def _usage_or_zero(payload: Any, path: str) -> int:
    try:
        return int(_resolve_path(payload, path))
    except (KeyError, IndexError, TypeError, ValueError):
        return 0


class HttpEmbeddingProvider:
    """Embedding provider over a configurable HTTP JSON protocol."""

    def __init__(self, config: HttpProviderConfig, client: httpx.Client | None = None):
        self.config = config
        self.name = config.name
        self.model_id = config.model_id
        self._client = client or httpx.Client(timeout=config.timeout)

    def embed_once(self, texts: list[str]) -> tuple[list[list[float]], int]:
        """Returns (vectors, input_tokens as reported by the provider or 0)."""
        body = {"model": self.model_id, "input": texts}
        headers = _auth_headers(self.config)
        try:
            response = self._client.post(self.config.base_url, json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(f"transport failure: {exc}", retriable=True) from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransportError(f"HTTP {response.status_code}", retriable=True, status=response.status_code)
        if response.status_code >= 400:
            raise TransportError(f"HTTP {response.status_code}", retriable=False, status=response.status_code)
        try:
            payload = response.json()
            items = _resolve_path(payload, self.config.response_vectors_path)
            vectors = [[float(x) for x in _resolve_path(item, self.config.vector_item_path)] for item in items]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed provider payload: {exc!r}", retriable=False) from exc
        if len(vectors) != len(texts):
            raise TransportError(
                f"provider returned {len(vectors)} vectors for {len(texts)} inputs", retriable=False
            )
        return vectors, _usage_or_zero(payload, self.config.usage_input_path)


class HashEmbeddingProvider:
    """Deterministic local embedder: text -> unit vector derived from its hash.

    Identical texts map to identical vectors and distinct texts to
    near-orthogonal ones, which is exactly what deduplication tests need.
    """

    def __init__(self, name: str = "hash-embedder", dimension: int = 32):
        self.name = name
        self.model_id = name
        self.dimension = dimension

    def embed_once(self, texts: list[str]) -> tuple[list[list[float]], int]:
        vectors = []
        for text in texts:
            seed = hashlib.sha256(text.encode("utf-8")).digest()
            rng = random.Random(int.from_bytes(seed[:8], "big"))
            raw = [rng.uniform(-1.0, 1.0) for _ in range(self.dimension)]
            norm = math.sqrt(sum(x * x for x in raw))
            vectors.append([x / norm for x in raw])
        return vectors, 0


# ---------------------------------------------------------------------------
# Scripted mock provider


_MINIMAL_KNOWLEDGE = {
    "core_concepts": [{"name": "Core rule", "description": "The chapter's central rule."}],
    "definitions": [],
    "theorems_or_rules": [],
    "procedures": [],
    "algorithms": [],
    "derived_relationships": [],
    "subtle_constraints_or_caveats": [],
    "dependency_graph": {
        "nodes": [{"id": "C1", "label": "Core rule", "type": "concept"}],
        "edges": [],
    },
}


def _mock_seed_candidate(ordinal: int) -> dict[str, Any]:
    # Every 8th seed repeats its predecessor's content so embedding dedup
    # has realistic work to do in large scripted runs.
    base = ordinal - 1 if ordinal % 8 == 7 else ordinal
    return {
        "solution_graph": {
            "nodes": [
                {"id": "V1", "content": f"Set up quantity {base} from the premise."},
                {"id": "V2", "content": f"Derive result {base}.2 by applying the core rule."},
            ],
            "edges": [{"from": "V1", "to": "V2", "operation": "apply core rule"}],
        },
        "question": f"Scripted question {base}: applying the core rule to setup {base}, which result follows?",
        "options": {
            "A": f"Result {base}.1",
            "B": f"Result {base}.2",
            "C": f"Result {base}.3",
            "D": f"Result {base}.4",
            "E": "None of the above",
        },
        "correct_answer": "B",
        "complete_solution": f"Applying the core rule to setup {base} yields result {base}.2.",
    }


_PASS_REPORT = {
    "json_format_valid": "Yes",
    "mcq_integrity": "Yes",
    "blooms_alignment": "Yes",
    "constraint_compliance": "Yes",
    "overall_verdict": "Pass",
    "explanation": "Scripted pass.",
    "question_evaluation": {"distractors_plausible": "Yes", "main_issues": [], "fix": ""},
}


def _fail_report(dims: list[str], explanation: str) -> dict[str, Any]:
    report = dict(_PASS_REPORT)
    for dim in dims:
        report[dim] = "No"
    report["overall_verdict"] = "Fail"
    report["explanation"] = explanation
    report["question_evaluation"] = {"distractors_plausible": "No", "main_issues": [explanation], "fix": ""}
    return report


class MockChatProvider:
    """Deterministic scripted chat provider keyed by (stage tag, call ordinal).

    Script format (JSON file or dict)::

        {
          "stages": {
            "<tag>": [item, ...],                      # consumed in call order
            "<tag>": {"responses": [...], "cycle": true}
          }
        }

    Items are either ``{"text": ...}`` verbatim responses or behaviors:
    ``{"behavior": "echo" | "pass" | "seed" | "knowledge" | "answer" |
    "error" | "fail", ...}``. Tags without a script fall back to a built-in
    behavior (seed generation produces valid unique candidates, refinement
    stages echo their input, final verification passes), so a small script
    can drive a large run.
    """

    DEFAULT_BEHAVIORS = {
        TAG_KNOWLEDGE: {"behavior": "knowledge"},
        TAG_SEED: {"behavior": "seed"},
        TAG_FINAL_VERIFICATION: {"behavior": "pass"},
    }

    def __init__(self, script: dict[str, Any] | None = None, name: str = "mock", model_id: str = "mock-model"):
        self.name = name
        self.model_id = model_id
        self._stages: dict[str, dict[str, Any]] = {}
        for tag, entry in ((script or {}).get("stages") or {}).items():
            if isinstance(entry, list):
                entry = {"responses": entry, "cycle": False}
            self._stages[tag] = {"responses": list(entry.get("responses", [])), "cycle": bool(entry.get("cycle"))}
        self._ordinals: dict[str, int] = {}
        self._lock = threading.Lock()
        self.calls: list[tuple[str, int]] = []

    @classmethod
    def from_file(cls, path: Path | str, **kwargs: Any) -> "MockChatProvider":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")), **kwargs)

    def _next_item(self, tag: str) -> tuple[dict[str, Any], int]:
        with self._lock:
            ordinal = self._ordinals.get(tag, 0)
            self._ordinals[tag] = ordinal + 1
            self.calls.append((tag, ordinal))
        stage = self._stages.get(tag)
        if stage and stage["responses"]:
            responses = stage["responses"]
            if ordinal < len(responses):
                return responses[ordinal], ordinal
            if stage["cycle"]:
                return responses[ordinal % len(responses)], ordinal
        default = self.DEFAULT_BEHAVIORS.get(tag, {"behavior": "echo"})
        return default, ordinal

    def chat_once(self, request: ChatRequest, tag: str = "default") -> ChatResponse:
        item, ordinal = self._next_item(tag)
        if "text" in item and "behavior" not in item:
            text = str(item["text"])
        else:
            text = self._render_behavior(item, request, tag, ordinal)
        input_tokens = int(item.get("input_tokens", sum(len(m["content"]) for m in request.messages) // 4))
        output_tokens = int(item.get("output_tokens", max(1, len(text) // 4)))
        return ChatResponse(text=text, input_tokens=input_tokens, output_tokens=output_tokens)

    def _render_behavior(self, item: dict[str, Any], request: ChatRequest, tag: str, ordinal: int) -> str:
        behavior = item.get("behavior", "echo")
        if behavior == "fixed":
            return str(item.get("text", ""))
        if behavior == "echo":
            user_messages = [m["content"] for m in request.messages if m["role"] == "user"]
            source = user_messages[-1] if user_messages else request.messages[-1]["content"]
            try:
                return json.dumps(extract_json(source), ensure_ascii=False)
            except ValueError:
                return "ECHO-FOUND-NO-JSON"
        if behavior == "pass":
            return json.dumps(_PASS_REPORT)
        if behavior == "fail":
            dims = list(item.get("dims", ["mcq_integrity"]))
            return json.dumps(_fail_report(dims, str(item.get("explanation", "Scripted failure."))))
        if behavior == "seed":
            return json.dumps(_mock_seed_candidate(ordinal), ensure_ascii=False)
        if behavior == "knowledge":
            return json.dumps(_MINIMAL_KNOWLEDGE)
        if behavior == "answer":
            return f"Answer: {item.get('letter', 'A')}"
        if behavior == "error":
            raise TransportError(
                f"scripted transport error (HTTP {item.get('status', 500)})",
                retriable=bool(item.get("retriable", True)),
                status=int(item.get("status", 500)),
            )
        raise ValueError(f"unknown mock behavior {behavior!r} for tag {tag!r}")


# ---------------------------------------------------------------------------
# Gateway


class Gateway:
    """Front door for all provider calls: retries, accounting, caching, caps."""

    def __init__(
        self,
        providers: dict[str, Any] | None = None,
        pricing: PricingTable | None = None,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
        in_flight_limit: int = 4,
        embed_cache_path: Path | None = None,
    ):
        self._providers: dict[str, Any] = dict(providers or {})
        self.ledger = CostLedger(pricing)
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self._in_flight_limit = in_flight_limit
        self._semaphores: dict[str, threading.BoundedSemaphore] = {}
        self.transport_retries: dict[str, int] = {}
        self._embed_cache: dict[str, list[float]] = {}
        self._embed_cache_path = embed_cache_path
        self._cache_lock = threading.Lock()
        if embed_cache_path is not None and embed_cache_path.exists():
            with embed_cache_path.open("r", encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if line:
                        entry = json.loads(line)
                        self._embed_cache[entry["key"]] = entry["vector"]

    def add_provider(self, name: str, provider: Any) -> None:
        self._providers[name] = provider

    def provider(self, name: str) -> Any:
        if name not in self._providers:
            raise GatewayError(f"no provider configured under name {name!r}")
        return self._providers[name]

    def _semaphore(self, name: str) -> threading.BoundedSemaphore:
        if name not in self._semaphores:
            self._semaphores[name] = threading.BoundedSemaphore(self._in_flight_limit)
        return self._semaphores[name]

    def _sleep_backoff(self, attempt: int) -> None:
        if self.backoff_base <= 0:
            return
        delay = min(self.backoff_cap, self.backoff_base * (2 ** (attempt - 1)))
        time.sleep(delay * (0.5 + random.random() / 2))

    def chat(self, provider_name: str, request: ChatRequest, tag: str = "default") -> ChatResponse:
        """Send one chat request; ledger is charged exactly once per call."""
        provider = self.provider(provider_name)
        attempts = 0
        last_error: TransportError | None = None
        with self._semaphore(provider_name):
            while attempts < self.max_attempts:
                attempts += 1
                started = time.perf_counter()
                try:
                    response = provider.chat_once(request, tag)
                except TransportError as err:
                    last_error = err
                    if err.retriable and attempts < self.max_attempts:
                        self.transport_retries[provider_name] = self.transport_retries.get(provider_name, 0) + 1
                        self._sleep_backoff(attempts)
                        continue
                    break
                response.provider_latency = time.perf_counter() - started
                self.ledger.record(provider.model_id, response.input_tokens, response.output_tokens)
                return response
        # Eventual failure still charges the ledger (usage unknown -> 0).
        self.ledger.record(provider.model_id, 0, 0)
        raise GatewayError(
            f"provider {provider_name!r} failed after {attempts} attempt(s): {last_error}",
            attempts=attempts,
            retriable=bool(last_error and last_error.retriable),
        )

    # -- embeddings --------------------------------------------------------

    @staticmethod
    def _cache_key(provider_name: str, text: str) -> str:
        return provider_name + ":" + hashlib.sha256(text.encode("utf-8")).hexdigest()

    def embed(self, provider_name: str, texts: list[str]) -> list[list[float]]:
        """Embed texts in order; repeats are served from the content-hash cache.

        The ledger is charged exactly once per call, with whatever usage the
        provider reported for the uncached portion (0 for full cache hits).
        """
        if not texts:
            raise ValueError("embed requires at least one text")
        provider = self.provider(provider_name)
        keys = [self._cache_key(provider_name, t) for t in texts]
        with self._cache_lock:
            missing = [(i, t) for i, (k, t) in enumerate(zip(keys, texts)) if k not in self._embed_cache]
        usage = 0
        if missing:
            batch = [t for _, t in missing]
            attempts = 0
            last_error: TransportError | None = None
            vectors: list[list[float]] | None = None
            with self._semaphore(provider_name):
                while attempts < self.max_attempts:
                    attempts += 1
                    try:
                        vectors, usage = provider.embed_once(batch)
                        break
                    except TransportError as err:
                        last_error = err
                        if err.retriable and attempts < self.max_attempts:
                            self.transport_retries[provider_name] = self.transport_retries.get(provider_name, 0) + 1
                            self._sleep_backoff(attempts)
                            continue
                        break
            if vectors is None:
                self.ledger.record(provider.model_id, 0, 0)
                raise GatewayError(
                    f"embedding provider {provider_name!r} failed after {attempts} attempt(s): {last_error}",
                    attempts=attempts,
                )
            dims = {len(v) for v in vectors}
            if len(dims) > 1:
                self.ledger.record(provider.model_id, usage, 0)
                raise GatewayError(f"dimension mismatch across embedding batch: {sorted(dims)}")
            with self._cache_lock:
                for (index, text), vector in zip(missing, vectors):
                    key = keys[index]
                    self._embed_cache[key] = vector
                    if self._embed_cache_path is not None:
                        self._embed_cache_path.parent.mkdir(parents=True, exist_ok=True)
                        with self._embed_cache_path.open("a", encoding="utf-8") as handle:
                            handle.write(json.dumps({"key": key, "vector": vector}) + "\n")
        self.ledger.record(provider.model_id, usage, 0)
        with self._cache_lock:
            return [list(self._embed_cache[k]) for k in keys]
