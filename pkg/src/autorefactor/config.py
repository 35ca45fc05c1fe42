"""Configuration: a single JSON file with five sections, unknown keys rejected.

Sections and defaults mirror the module design decisions: llm (endpoint,
model, api_key_env, timeout), retrieval (store_dir, n, rrf_k), pipeline
(max_review_rounds, max_repair_attempts), build (kind, compile_cmd, test_cmd,
timeout_secs), style (rule_set).
"""

from __future__ import annotations

import json
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .agents import PipelineConfig
from .build_harness import BuildConfig, BuildSystemKind


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())


class LlmSettings(_Section):
    endpoint: str = ""
    model: str = ""
    api_key_env: str = ""
    timeout: float = 60.0


class RetrievalSettings(_Section):
    store_dir: str = ""
    n: int = Field(default=3, ge=1)
    rrf_k: int = Field(default=60, ge=1)


class PipelineSettings(_Section):
    max_review_rounds: int = Field(default=5, ge=1)
    max_repair_attempts: int = Field(default=20, ge=1)


class BuildSettings(_Section):
    kind: str = ""  # "" = auto-detect; else maven | gradle | command
    compile_cmd: str = ""
    test_cmd: str = ""
    timeout_secs: int = Field(default=600, ge=1)


class StyleSettings(_Section):
    rule_set: str = "default"


class CliConfig(_Section):
    llm: LlmSettings = Field(default_factory=LlmSettings)
    retrieval: RetrievalSettings = Field(default_factory=RetrievalSettings)
    pipeline: PipelineSettings = Field(default_factory=PipelineSettings)
    build: BuildSettings = Field(default_factory=BuildSettings)
    style: StyleSettings = Field(default_factory=StyleSettings)

    @classmethod
    def load(cls, path: Optional[str]) -> "CliConfig":
        if path is None:
            return cls()
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(data, source=path)

    @classmethod
    def from_dict(cls, data: dict, source: str = "<dict>") -> "CliConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(f"{source}: {exc}") from exc

    def build_config(self) -> BuildConfig:
        kind: Optional[BuildSystemKind] = None
        if self.build.kind:
            try:
                kind = BuildSystemKind(self.build.kind)
            except ValueError as exc:
                raise ConfigError(f"unknown build kind: {self.build.kind!r}") from exc
        return BuildConfig(
            kind=kind,
            compile_cmd=self.build.compile_cmd,
            test_cmd=self.build.test_cmd,
            timeout_secs=self.build.timeout_secs,
        )

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            max_review_rounds=self.pipeline.max_review_rounds,
            max_repair_attempts=self.pipeline.max_repair_attempts,
            retrieval_n=self.retrieval.n,
            style_rules=self.style.rule_set,
            build=self.build_config(),
        )
