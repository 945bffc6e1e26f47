"""Run configuration: a single JSON document plus flag overrides.

Credentials never live in the config file; providers name an environment
variable instead. The run id defaults to a content hash of the effective
config, so differently-configured runs can never collide on disk.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .gateway import (
    Gateway,
    HashEmbeddingProvider,
    HttpChatProvider,
    HttpEmbeddingProvider,
    HttpProviderConfig,
    MockChatProvider,
    PricingTable,
)
from .schema import BloomLevel, parse_bloom


class ConfigError(ValueError):
    """Configuration is missing, malformed, or references absent files."""


DEFAULT_CONFIG: dict[str, Any] = {
    "run_id": None,
    "seed": 0,
    "runs_root": "runs",
    "corpus": {"taxonomy": None, "manifest": None},
    "providers": {
        "designer": {"kind": "mock", "model_id": "mock-designer"},
        "verifier": {"kind": "mock", "model_id": "mock-verifier"},
        "embedder": {"kind": "hash"},
        "classifier": {"kind": "mock", "model_id": "mock-classifier"},
        "subjects": [],
    },
    "generation": {
        "quota": 5,
        "categories": ["Apply", "Analyze", "Evaluate", "Create"],
        "max_repairs": 3,
        "concurrency": 1,
        "exemplars": None,
    },
    "dedup": {"threshold": 0.90},
    "eval": {"template": None, "temperature": 0.0, "frontier_models": []},
    "analysis": {"review_fraction": 0.10},
    "pricing": {},
    "gateway": {"max_attempts": 5, "backoff_base": 0.5, "backoff_cap": 30.0, "in_flight_limit": 4},
}


def _deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


@dataclass
class RunConfig:
    """Validated, effective configuration for one run."""

    doc: dict[str, Any]
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path: Path | str, overrides: dict[str, Any] | None = None) -> "RunConfig":
        path = Path(path)
        try:
            user_doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(user_doc, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")
        doc = _deep_merge(DEFAULT_CONFIG, user_doc)
        if overrides:
            doc = _deep_merge(doc, overrides)
        config = cls(doc=doc, base_dir=path.parent.resolve())
        config.validate()
        return config

    @classmethod
    def from_dict(cls, doc: dict[str, Any], base_dir: Path | None = None) -> "RunConfig":
        config = cls(doc=_deep_merge(DEFAULT_CONFIG, doc), base_dir=(base_dir or Path.cwd()).resolve())
        config.validate()
        return config

    # -- accessors ----------------------------------------------------------

    def _resolve(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def runs_root(self) -> Path:
        return self._resolve(str(self.doc["runs_root"]))

    @property
    def taxonomy_path(self) -> Path:
        value = self.doc["corpus"]["taxonomy"]
        if not value:
            raise ConfigError("corpus.taxonomy is not set")
        return self._resolve(value)

    @property
    def manifest_path(self) -> Path:
        value = self.doc["corpus"]["manifest"]
        if not value:
            raise ConfigError("corpus.manifest is not set")
        return self._resolve(value)

    @property
    def categories(self) -> tuple[BloomLevel, ...]:
        return tuple(parse_bloom(name) for name in self.doc["generation"]["categories"])

    @property
    def quota(self) -> int:
        return int(self.doc["generation"]["quota"])

    @property
    def max_repairs(self) -> int:
        return int(self.doc["generation"]["max_repairs"])

    @property
    def concurrency(self) -> int:
        return int(self.doc["generation"]["concurrency"])

    @property
    def dedup_threshold(self) -> float:
        return float(self.doc["dedup"]["threshold"])

    @property
    def eval_temperature(self) -> float:
        return float(self.doc["eval"]["temperature"])

    @property
    def frontier_models(self) -> list[str]:
        return [str(m) for m in self.doc["eval"].get("frontier_models", [])]

    @property
    def review_fraction(self) -> float:
        return float(self.doc["analysis"]["review_fraction"])

    def eval_template(self) -> str | None:
        value = self.doc["eval"].get("template")
        if not value:
            return None
        return self._resolve(value).read_text(encoding="utf-8")

    def exemplars(self) -> list[str]:
        value = self.doc["generation"].get("exemplars")
        if not value:
            return []
        doc = json.loads(self._resolve(value).read_text(encoding="utf-8"))
        if not isinstance(doc, list):
            raise ConfigError("exemplars file must contain a JSON array of strings")
        return [str(item) for item in doc]

    def run_id(self) -> str:
        explicit = self.doc.get("run_id")
        if explicit:
            return str(explicit)
        return self.content_hash()

    def content_hash(self) -> str:
        canonical = json.dumps(self.doc, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def run_dir(self) -> Path:
        return self.runs_root / self.run_id()

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        gen = self.doc["generation"]
        if int(gen["quota"]) <= 0:
            raise ConfigError("generation.quota must be a positive integer")
        if int(gen["max_repairs"]) < 0:
            raise ConfigError("generation.max_repairs must be >= 0")
        for name in gen["categories"]:
            try:
                parse_bloom(str(name))
            except Exception:
                raise ConfigError(f"generation.categories: unknown bloom level {name!r}")
        threshold = float(self.doc["dedup"]["threshold"])
        if not -1.0 <= threshold <= 1.0:
            raise ConfigError("dedup.threshold must lie in [-1, 1]")
        providers = self.doc["providers"]
        for role in ("designer", "verifier", "embedder"):
            if role not in providers or not isinstance(providers[role], dict):
                raise ConfigError(f"providers.{role} must be configured")
        for entry in providers.get("subjects", []):
            if "name" not in entry:
                raise ConfigError("every providers.subjects entry needs a 'name'")
        # Referenced files must exist at validation time.
        for key in ("taxonomy", "manifest"):
            value = self.doc["corpus"].get(key)
            if value and not self._resolve(value).exists():
                raise ConfigError(f"corpus.{key} path does not exist: {value}")
        exemplars = gen.get("exemplars")
        if exemplars and not self._resolve(exemplars).exists():
            raise ConfigError(f"generation.exemplars path does not exist: {exemplars}")
        template = self.doc["eval"].get("template")
        if template and not self._resolve(template).exists():
            raise ConfigError(f"eval.template path does not exist: {template}")
        for role, entry in providers.items():
            entries = entry if isinstance(entry, list) else [entry]
            for item in entries:
                script = item.get("mock_script")
                if script and not self._resolve(script).exists():
                    raise ConfigError(f"providers.{role}: mock_script does not exist: {script}")

    # -- provider construction -------------------------------------------------

    def _build_provider(self, role: str, entry: dict[str, Any]) -> Any:
        kind = entry.get("kind", "http")
        name = str(entry.get("name", role))
        if kind == "mock":
            script = entry.get("mock_script")
            if script:
                return MockChatProvider.from_file(
                    self._resolve(script), name=name, model_id=str(entry.get("model_id", f"mock-{role}"))
                )
            return MockChatProvider(name=name, model_id=str(entry.get("model_id", f"mock-{role}")))
        if kind == "hash":
            return HashEmbeddingProvider(name=name)
        if kind in ("http", "http_embedding"):
            for required in ("base_url", "model_id"):
                if not entry.get(required):
                    raise ConfigError(f"providers.{role}: http provider needs {required!r}")
            http_config = HttpProviderConfig(
                name=name,
                base_url=str(entry["base_url"]),
                model_id=str(entry["model_id"]),
                auth_env_var=str(entry.get("auth_env_var", "")),
                auth_header=str(entry.get("auth_header", "Authorization")),
                auth_scheme=str(entry.get("auth_scheme", "Bearer")),
                request_template=entry.get(
                    "request_template",
                    {"model": "$model", "messages": "$messages", "temperature": "$temperature"},
                ),
                response_text_path=str(entry.get("response_text_path", "choices.0.message.content")),
                usage_input_path=str(entry.get("usage_input_path", "usage.prompt_tokens")),
                usage_output_path=str(entry.get("usage_output_path", "usage.completion_tokens")),
                supports_temperature=bool(entry.get("supports_temperature", True)),
                timeout=float(entry.get("timeout", 120.0)),
                response_vectors_path=str(entry.get("response_vectors_path", "data")),
                vector_item_path=str(entry.get("vector_item_path", "embedding")),
            )
            if kind == "http_embedding":
                return HttpEmbeddingProvider(http_config)
            return HttpChatProvider(http_config)
        raise ConfigError(f"providers.{role}: unknown provider kind {kind!r}")

    def build_gateway(self, embed_cache_path: Path | None = None) -> tuple[Gateway, list[str]]:
        """Construct the gateway with all configured providers.

        Returns the gateway and the list of subject-provider names.
        """
        gw_conf = self.doc["gateway"]
        gateway = Gateway(
            pricing=PricingTable.from_dict(self.doc.get("pricing", {})),
            max_attempts=int(gw_conf["max_attempts"]),
            backoff_base=float(gw_conf["backoff_base"]),
            backoff_cap=float(gw_conf["backoff_cap"]),
            in_flight_limit=int(gw_conf["in_flight_limit"]),
            embed_cache_path=embed_cache_path,
        )
        providers = self.doc["providers"]
        for role in ("designer", "verifier", "embedder", "classifier"):
            if role in providers and isinstance(providers[role], dict):
                gateway.add_provider(role, self._build_provider(role, providers[role]))
        subject_names: list[str] = []
        for entry in providers.get("subjects", []):
            name = str(entry["name"])
            gateway.add_provider(name, self._build_provider(name, entry))
            subject_names.append(name)
        return gateway, subject_names
