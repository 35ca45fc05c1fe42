"""Request/response models for the HTTP service."""

from __future__ import annotations

from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())


class IndexRequest(_Model):
    records_path: str
    store_dir: str
    description_field: str = ""
    strict: bool = False
    script_path: str = ""


class IndexResponse(_Model):
    admitted: int
    rejected: int
    rejected_reasons: List[str]
    store_dir: str
    exit_code: int


class RefactorRequest(_Model):
    repo: str
    class_name: str
    method: str
    arity: int
    type: str
    out_report: str
    script_path: str = ""
    store_dir: str = ""
    config: Optional[Dict[str, object]] = None


class RefactorResponse(_Model):
    status: str
    exit_code: int
    report_dir: str
    rounds: int
    episode_count: int


class DetectRequest(_Model):
    before_dir: str
    after_dir: str
    expect: str = ""


class DetectResponse(_Model):
    instances: List[Dict[str, object]]
    verified: Optional[bool] = None
    report: str = ""
    exit_code: int = 0


class EvalRequest(_Model):
    before_dir: str
    candidate_dir: str
    reference_dir: str


class EvalResponse(_Model):
    code_bleu: Dict[str, object]
    ast: Dict[str, object]
    exit_code: int = 0


class ReplayRequest(_Model):
    report_dir: str


class ReplayResponse(_Model):
    identical: bool
    status: str
    exit_code: int
    detail: str = ""
