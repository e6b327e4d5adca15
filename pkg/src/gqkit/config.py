"""Run configuration: JSON config file, environment overrides, flag overrides
(in that precedence order), and a stable hash embedded in every output.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

from .backends import ENV_API_BASE, ENV_API_KEY, ENV_MODEL


@dataclass
class RunConfig:
    backend: str = "http"                 # "http" or "stub"
    api_base: str = ""
    model: str = ""
    api_key: str = ""
    require_api_key: bool = True
    annotation_temperature: float = 0.2
    judge_temperature: float = 0.7
    zero_shot_temperature: float = 0.7
    seed: int = 0
    noise_rate: float = 0.01
    triage_threshold: int = 1
    concurrency: int = 4
    min_questions: int = 3
    evidence_max_sentences: int = 5
    keyword_k: int = 8
    max_input_tokens: int | None = None
    template_dir: str | None = None
    abbrev_file: str | None = None
    force: bool = False

    def validate(self) -> list[str]:
        problems = []
        if self.backend not in ("http", "stub"):
            problems.append(f"backend must be 'http' or 'stub', got {self.backend!r}")
        for name in ("annotation_temperature", "judge_temperature", "zero_shot_temperature"):
            t = getattr(self, name)
            if not 0.0 <= t <= 2.0:
                problems.append(f"{name} {t} outside [0, 2]")
        if not 0.0 <= self.noise_rate <= 1.0:
            problems.append(f"noise_rate {self.noise_rate} outside [0, 1]")
        if not 1 <= self.triage_threshold <= 5:
            problems.append(f"triage_threshold {self.triage_threshold} outside 1..5")
        if self.concurrency < 1:
            problems.append("concurrency must be >= 1")
        if self.min_questions < 1:
            problems.append("min_questions must be >= 1")
        return problems

    def config_hash(self) -> str:
        """Stable digest of everything that affects outputs (secrets excluded)."""
        payload = asdict(self)
        payload.pop("api_key", None)
        payload.pop("force", None)
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash(), "backend": self.backend,
                "model": self.model or None}


def load_config(config_file: str | None = None, flag_overrides: dict | None = None) -> RunConfig:
    """defaults < config file < environment < flags."""
    cfg = RunConfig()
    if config_file:
        data = json.loads(Path(config_file).read_text(encoding="utf-8"))
        for k, v in data.items():
            if not hasattr(cfg, k):
                raise ValueError(f"unknown config key {k!r}")
            setattr(cfg, k, v)
    if os.environ.get(ENV_API_BASE):
        cfg.api_base = os.environ[ENV_API_BASE]
    if os.environ.get(ENV_MODEL):
        cfg.model = os.environ[ENV_MODEL]
    if os.environ.get(ENV_API_KEY):
        cfg.api_key = os.environ[ENV_API_KEY]
    for k, v in (flag_overrides or {}).items():
        if v is not None:
            setattr(cfg, k, v)
    return cfg
