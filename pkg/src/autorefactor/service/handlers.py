"""Service operation handlers: the core package wired to request models."""

from __future__ import annotations

import json
import os
import shutil
from typing import Dict, List, Optional, Tuple

from ..agents import (
    PipelineError,
    RefactoringTask,
    run_pipeline,
    workspace_files,
)
from ..build_harness import ToolchainError
from ..config import CliConfig, ConfigError
from ..llm_gateway import (
    Backend,
    HttpBackend,
    ReplayBackend,
    ReplayDivergenceError,
    ScriptedBackend,
    Transcript,
)
from ..metrics import MetricsError, ast_precision_recall, code_bleu
from ..refactoring_detect import RefactoringType, ast_diff, detect, purity, verify
from ..retrieval import (
    IndexedCorpus,
    RefactoringRecord,
    build_index,
    describe_for_index,
    load_store,
    save_store,
)
from ..source_model import (
    MethodRef,
    ParseError,
    SourceLookupError,
    build_call_graph,
    direct_callees,
    direct_callers,
    find_class,
    method_text,
    parse_source,
    parse_tree,
    resolve_method,
)
from .schemas import (
    DetectRequest,
    DetectResponse,
    EvalRequest,
    EvalResponse,
    IndexRequest,
    IndexResponse,
    RefactorRequest,
    RefactorResponse,
    ReplayRequest,
    ReplayResponse,
)

EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_NOINPUT = 66


class HandlerError(Exception):
    """Maps to an HTTP 400 carrying the CLI exit code."""

    def __init__(self, exit_code: int, message: str):
        super().__init__(message)
        self.exit_code = exit_code


def _require_dir(path: str, what: str) -> None:
    if not os.path.isdir(path):
        raise HandlerError(EXIT_NOINPUT, f"{what} not found: {path}")


def _load_script(path: str) -> ScriptedBackend:
    if not os.path.isfile(path):
        raise HandlerError(EXIT_NOINPUT, f"script file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise HandlerError(EXIT_USAGE, "script file must be a JSON list of responses")
    return ScriptedBackend(data)


def _make_backend(cfg: CliConfig, script_path: str) -> Backend:
    if script_path:
        return _load_script(script_path)
    if cfg.llm.endpoint:
        return HttpBackend(cfg.llm.endpoint, cfg.llm.model,
                           cfg.llm.api_key_env, cfg.llm.timeout)
    raise HandlerError(EXIT_USAGE,
                       "no backend configured: set llm.endpoint or pass a script")


def _deep_merge(base: Dict[str, object], override: Dict[str, object]) -> Dict[str, object]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _tree_units(path: str):
    try:
        return parse_tree(path).units
    except ParseError as exc:
        raise HandlerError(EXIT_DATA, f"parse error: {exc}") from exc


# ---------------------------------------------------------------------------
# index
# ---------------------------------------------------------------------------

def _record_from_line(
    line_no: int,
    data: Dict[str, object],
    description_field: str,
    backend_factory,
) -> Tuple[Optional[RefactoringRecord], Optional[str]]:
    record_id = str(data.get("id") or f"r{line_no:04d}")
    try:
        before_units = [parse_source(p, str(t))
                        for p, t in sorted(dict(data["before_files"]).items())]
        after_units = [parse_source(p, str(t))
                       for p, t in sorted(dict(data["after_files"]).items())]
    except KeyError as exc:
        return None, f"line {line_no}: missing field {exc}"
    except ParseError as exc:
        return None, f"line {line_no}: {exc}"

    instances = detect(before_units, after_units)
    if not instances:
        return None, f"line {line_no} ({record_id}): no refactoring detected"
    verdict = purity(before_units, after_units, instances)
    if not verdict.pure:
        kinds = ", ".join(e.kind for e in verdict.residual_edits[:3])
        return None, (f"line {line_no} ({record_id}): impure, "
                      f"{len(verdict.residual_edits)} residual edits ({kinds})")

    primary = instances[0]
    before_code = method_text(before_units, primary.source)
    after_code = "\n\n".join(method_text(after_units, t) for t in primary.targets)

    graph = build_call_graph(before_units)
    neighbors = (direct_callers(graph, primary.source)
                 + direct_callees(graph, primary.source))
    pairs = []
    for ref in neighbors:
        try:
            pairs.append((ref, method_text(before_units, ref)))
        except SourceLookupError:
            continue
    unit, cls = find_class(before_units, primary.source.qualified_class)
    class_info = (unit.package, cls.name, cls.signature())

    if description_field:
        description = str(data.get(description_field, ""))
        if not description.strip():
            return None, (f"line {line_no} ({record_id}): "
                          f"description field {description_field!r} empty")
    else:
        description = describe_for_index(before_code, pairs, class_info,
                                         backend_factory())

    provenance = (str(data.get("project", "")), str(data.get("commit", "")))
    return RefactoringRecord(
        id=record_id, type=primary.type, before_code=before_code,
        after_code=after_code, description=description,
        callers_callees=pairs, class_info=class_info,
        provenance=provenance, pure=True,
    ), None


def do_index(cfg: CliConfig, req: IndexRequest) -> IndexResponse:
    if not os.path.isfile(req.records_path):
        raise HandlerError(EXIT_NOINPUT, f"records file not found: {req.records_path}")
    if not req.description_field and not req.script_path and not cfg.llm.endpoint:
        raise HandlerError(EXIT_USAGE,
                           "descriptions need a backend or a description field")

    backend_holder: List[Backend] = []

    def backend_factory() -> Backend:
        if not backend_holder:
            backend_holder.append(_make_backend(cfg, req.script_path))
        return backend_holder[0]

    admitted: List[RefactoringRecord] = []
    reasons: List[str] = []
    seen_ids = set()
    with open(req.records_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                reasons.append(f"line {line_no}: parse error: {exc}")
                continue
            record, reason = _record_from_line(
                line_no, data, req.description_field, backend_factory)
            if record is None:
                reasons.append(reason)
                continue
            if record.id in seen_ids:
                reasons.append(f"line {line_no}: duplicate id {record.id}")
                continue
            seen_ids.add(record.id)
            admitted.append(record)

    corpus = build_index(admitted)
    save_store(corpus, req.store_dir)
    exit_code = EXIT_DATA if (req.strict and reasons) else 0
    return IndexResponse(
        admitted=len(admitted), rejected=len(reasons),
        rejected_reasons=reasons, store_dir=req.store_dir, exit_code=exit_code,
    )


# ---------------------------------------------------------------------------
# refactor
# ---------------------------------------------------------------------------

def _copy_repo(src: str, dst: str) -> None:
    shutil.copytree(src, dst, ignore=shutil.ignore_patterns(".git"))


def do_refactor(cfg: CliConfig, req: RefactorRequest) -> RefactorResponse:
    _require_dir(req.repo, "repository")
    try:
        rtype = RefactoringType.from_text(req.type)
    except ValueError as exc:
        raise HandlerError(EXIT_USAGE, str(exc)) from exc
    if req.config:
        try:
            cfg = CliConfig.from_dict(_deep_merge(cfg.model_dump(), req.config),
                                      source="request config")
        except ConfigError as exc:
            raise HandlerError(EXIT_USAGE, str(exc)) from exc

    report_dir = os.path.abspath(req.out_report)
    if os.path.exists(report_dir):
        raise HandlerError(EXIT_USAGE, f"report directory already exists: {report_dir}")
    os.makedirs(report_dir)
    workspace = os.path.join(report_dir, "workspace")
    baseline_dir = os.path.join(report_dir, "baseline")
    _copy_repo(req.repo, workspace)
    _copy_repo(req.repo, baseline_dir)

    units = _tree_units(workspace)
    try:
        _, cls = find_class(units, req.class_name)
        target = MethodRef(cls.qualified_name, req.method, req.arity)
        resolve_method(units, target)
    except SourceLookupError as exc:
        shutil.rmtree(report_dir)
        raise HandlerError(EXIT_USAGE, str(exc)) from exc

    store_dir = req.store_dir or cfg.retrieval.store_dir
    corpus: Optional[IndexedCorpus] = None
    if store_dir and os.path.isdir(store_dir):
        corpus = load_store(store_dir)

    backend = _make_backend(cfg, req.script_path)
    task = RefactoringTask(
        workspace=workspace, target=target, requested_type=rtype,
        config=cfg.pipeline_config(),
    )
    try:
        result = run_pipeline(task, backend, corpus)
    except PipelineError as exc:
        shutil.rmtree(report_dir)
        raise HandlerError(EXIT_USAGE, str(exc)) from exc
    except ToolchainError as exc:
        shutil.rmtree(report_dir)
        raise HandlerError(EXIT_USAGE, str(exc)) from exc
    finally:
        backend.close()

    with open(os.path.join(report_dir, "task.json"), "w", encoding="utf-8") as fh:
        json.dump({
            "target": target.to_dict(),
            "type": rtype.value,
            "config": cfg.model_dump(),
            "store_dir": store_dir,
        }, fh, indent=2, sort_keys=True)
    result.transcript.save(os.path.join(report_dir, "transcript.jsonl"))
    with open(os.path.join(report_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
    with open(os.path.join(report_dir, "diff.patch"), "w", encoding="utf-8") as fh:
        fh.write(result.final_code)

    return RefactorResponse(
        status=result.status, exit_code=result.exit_code,
        report_dir=report_dir, rounds=result.rounds,
        episode_count=len(result.episodes),
    )


# ---------------------------------------------------------------------------
# detect / eval
# ---------------------------------------------------------------------------

def do_detect(cfg: CliConfig, req: DetectRequest) -> DetectResponse:
    _require_dir(req.before_dir, "before directory")
    _require_dir(req.after_dir, "after directory")
    before_units = _tree_units(req.before_dir)
    after_units = _tree_units(req.after_dir)
    instances = detect(before_units, after_units)
    response = DetectResponse(
        instances=[inst.to_dict() for inst in instances],
        exit_code=0,
    )
    if req.expect:
        try:
            expected = RefactoringType.from_text(req.expect)
        except ValueError as exc:
            raise HandlerError(EXIT_USAGE, str(exc)) from exc
        verified, report = verify(before_units, after_units, expected)
        response.verified = verified
        response.report = report
        response.exit_code = 0 if verified else 1
    else:
        response.report = ("no refactoring detected" if not instances else
                           "; ".join(i.type.value for i in instances))
    return response


def _concat_java(units) -> str:
    return "\n".join(u.text for u in sorted(units, key=lambda u: u.path))


def do_eval(cfg: CliConfig, req: EvalRequest) -> EvalResponse:
    _require_dir(req.before_dir, "before directory")
    _require_dir(req.candidate_dir, "candidate directory")
    _require_dir(req.reference_dir, "reference directory")
    before_units = _tree_units(req.before_dir)
    candidate_units = _tree_units(req.candidate_dir)
    reference_units = _tree_units(req.reference_dir)
    try:
        bleu = code_bleu(_concat_java(reference_units), _concat_java(candidate_units))
    except MetricsError as exc:
        raise HandlerError(EXIT_DATA, str(exc)) from exc
    tool_mappings = ast_diff(before_units, candidate_units)
    reference_mappings = ast_diff(before_units, reference_units)
    score = ast_precision_recall(tool_mappings, reference_mappings)
    return EvalResponse(code_bleu=bleu.to_dict(), ast=score.to_dict(), exit_code=0)


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

def do_replay(cfg: CliConfig, req: ReplayRequest) -> ReplayResponse:
    report_dir = os.path.abspath(req.report_dir)
    _require_dir(report_dir, "report directory")
    transcript_path = os.path.join(report_dir, "transcript.jsonl")
    if not os.path.isfile(transcript_path):
        raise HandlerError(EXIT_NOINPUT, f"transcript not found: {transcript_path}")
    task_path = os.path.join(report_dir, "task.json")
    if not os.path.isfile(task_path):
        raise HandlerError(EXIT_NOINPUT, f"task file not found: {task_path}")
    baseline_dir = os.path.join(report_dir, "baseline")
    recorded_workspace = os.path.join(report_dir, "workspace")
    _require_dir(baseline_dir, "baseline directory")
    _require_dir(recorded_workspace, "recorded workspace")

    with open(task_path, "r", encoding="utf-8") as fh:
        task_data = json.load(fh)
    run_cfg = CliConfig.from_dict(task_data.get("config", {}), source=task_path)
    target = MethodRef.from_dict(task_data["target"])
    rtype = RefactoringType.from_text(task_data["type"])

    replay_root = os.path.join(report_dir, "replay")
    if os.path.isdir(replay_root):
        shutil.rmtree(replay_root)
    os.makedirs(replay_root)
    # Same basename as the recorded run so workspace-relative prompts match.
    replay_workspace = os.path.join(replay_root, "workspace")
    _copy_repo(baseline_dir, replay_workspace)

    corpus: Optional[IndexedCorpus] = None
    store_dir = str(task_data.get("store_dir", ""))
    if store_dir and os.path.isdir(store_dir):
        corpus = load_store(store_dir)

    backend = ReplayBackend(Transcript.load(transcript_path))
    task = RefactoringTask(
        workspace=replay_workspace, target=target, requested_type=rtype,
        config=run_cfg.pipeline_config(),
    )
    try:
        result = run_pipeline(task, backend, corpus)
    except ReplayDivergenceError as exc:
        return ReplayResponse(identical=False, status="replay_divergence",
                              exit_code=4, detail=str(exc))
    except PipelineError as exc:
        return ReplayResponse(identical=False, status="pipeline_error",
                              exit_code=4, detail=str(exc))

    recorded = workspace_files(recorded_workspace)
    replayed = workspace_files(replay_workspace)
    identical = recorded == replayed
    if identical:
        detail = "final workspace is byte-identical to the recorded run"
    else:
        diff_paths = sorted(
            set(recorded) ^ set(replayed)
            | {p for p in set(recorded) & set(replayed)
               if recorded[p] != replayed[p]})
        detail = "differs: " + ", ".join(diff_paths[:10])
    return ReplayResponse(
        identical=identical, status=result.status,
        exit_code=0 if identical else 1, detail=detail,
    )
