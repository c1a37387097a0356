"""Service configuration: file keys plus environment overrides for the LLM."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

ENV_ENDPOINT = "T2P_LLM_ENDPOINT"
ENV_API_KEY = "T2P_LLM_API_KEY"
ENV_MODEL = "T2P_LLM_MODEL"


@dataclass
class ServiceConfig:
    catalog_path: str = ""
    embeddings_path: str = ""
    store_path: str = "t2p-store.jsonl"
    taxonomy_path: str | None = None  # None: packaged default
    lexicon_path: str | None = None   # None: packaged default

    target_length: int = 30
    artist_cap: int = 3
    min_candidates: int = 20
    retrieval_limit: int = 200

    extraction_backend: str = "rule"          # rule | llm | replay
    refinement_backend: str = "deterministic"  # deterministic | llm | replay

    llm_endpoint: str = ""
    llm_api_key: str = ""
    llm_model: str = "chat-default"
    llm_timeout_s: float = 10.0
    llm_max_retries: int = 2
    llm_backoff_base_s: float = 0.25
    llm_stage_budget_s: float = 12.0
    llm_max_in_flight: int = 8
    llm_max_output_tokens: int = 512
    fixtures_dir: str | None = None

    cors_origins: list[str] = field(default_factory=lambda: ["*"])
    ui_dir: str | None = None

    def __post_init__(self):
        self.llm_endpoint = os.environ.get(ENV_ENDPOINT, self.llm_endpoint)
        self.llm_api_key = os.environ.get(ENV_API_KEY, self.llm_api_key)
        self.llm_model = os.environ.get(ENV_MODEL, self.llm_model)
        if self.extraction_backend not in ("rule", "llm", "replay"):
            raise ValueError(f"extraction_backend must be rule|llm|replay, got {self.extraction_backend!r}")
        if self.refinement_backend not in ("deterministic", "llm", "replay"):
            raise ValueError(
                f"refinement_backend must be deterministic|llm|replay, got {self.refinement_backend!r}"
            )
        for attr in ("target_length", "artist_cap", "min_candidates", "retrieval_limit"):
            if getattr(self, attr) < 1:
                raise ValueError(f"{attr} must be >= 1")

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        config = cls(**data)
        # Relative paths resolve against the config file location.
        base = Path(path).parent
        for attr in ("catalog_path", "embeddings_path", "store_path", "taxonomy_path", "lexicon_path", "fixtures_dir", "ui_dir"):
            value = getattr(config, attr)
            if value and not Path(value).is_absolute():
                setattr(config, attr, str(base / value))
        return config
