"""Two-layer multi-agent pipeline: Developer, Reviewer, and Repair agents.

Layer 1 loops Developer (tool-calling generation with retrieved few-shot
examples) against Reviewer (refactoring verification, then style, then a
compile/test trigger) for up to max_review_rounds. Build failures drop into
Layer 2, a Reflexion-style repair loop capped at max_repair_attempts. The
workspace is reset to its baseline between review rounds, so candidates never
contaminate each other.
"""

from __future__ import annotations

import difflib
import os
import re
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from . import build_harness, prompts, style_check
from .build_harness import BuildConfig, BuildReport
from .llm_gateway import (
    Backend,
    BackendError,
    ChatMessage,
    CompletionRequest,
    RecordingBackend,
    ToolCall,
    ToolParam,
    ToolSpec,
    Transcript,
    extract_tool_calls,
)
from .refactoring_detect import RefactoringType, verify
from .retrieval import IndexedCorpus, describe_for_index, retrieve_similar
from .source_model import (
    MethodRef,
    ParseError,
    SourceLookupError,
    SourceUnit,
    build_call_graph,
    class_content,
    direct_callees,
    direct_callers,
    find_class,
    method_text,
    parse_source,
    resolve_method,
)

STATUS_SUCCESS = "success"
STATUS_REVIEW_EXHAUSTED = "review_exhausted"
STATUS_REPAIR_EXHAUSTED = "repair_exhausted"
STATUS_BACKEND_ERROR = "backend_error"

EXIT_CODES = {
    STATUS_SUCCESS: 0,
    STATUS_REVIEW_EXHAUSTED: 2,
    STATUS_REPAIR_EXHAUSTED: 3,
    STATUS_BACKEND_ERROR: 4,
}

MAX_TOOL_ROUNDS = 15


class PipelineError(RuntimeError):
    """Pipeline precondition failed (e.g. baseline build not green)."""


@dataclass
class PipelineConfig:
    max_review_rounds: int = 5
    max_repair_attempts: int = 20
    retrieval_n: int = 3
    style_rules: str = "default"
    build: BuildConfig = field(default_factory=BuildConfig)

    def __post_init__(self) -> None:
        for name in ("max_review_rounds", "max_repair_attempts", "retrieval_n"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class RefactoringTask:
    workspace: str
    target: MethodRef
    requested_type: RefactoringType
    config: PipelineConfig = field(default_factory=PipelineConfig)


@dataclass
class FeedbackReport:
    stage: str  # verification | style
    passed: bool
    findings: List[Tuple[str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.passed and self.findings:
            raise ValueError("a passed report cannot carry findings")

    def to_dict(self) -> Dict[str, object]:
        return {
            "stage": self.stage,
            "passed": self.passed,
            "findings": [{"location": loc, "message": msg}
                         for loc, msg in self.findings],
        }

    def render(self) -> str:
        if self.passed:
            return f"{self.stage}: passed"
        lines = [f"{self.stage}: failed"]
        lines += [f"  {loc}: {msg}" for loc, msg in self.findings]
        return "\n".join(lines)


@dataclass
class RepairEpisode:
    attempt: int
    error_log: str
    reflection: str
    plan: str
    patch: List[Tuple[str, str]]
    build_after: BuildReport

    def to_dict(self) -> Dict[str, object]:
        return {
            "attempt": self.attempt,
            "error_log": self.error_log,
            "reflection": self.reflection,
            "plan": self.plan,
            "patch_files": [path for path, _ in self.patch],
            "build_after": self.build_after.to_dict(),
        }


@dataclass
class PipelineResult:
    status: str
    final_code: str
    episodes: List[RepairEpisode]
    feedback_history: List[FeedbackReport]
    transcript: Transcript
    metrics_inputs: Tuple[List[SourceUnit], List[SourceUnit]]
    rounds: int = 0
    duration: float = 0.0

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def to_dict(self) -> Dict[str, object]:
        return {
            "status": self.status,
            "exit_code": self.exit_code,
            "rounds": self.rounds,
            "episodes": [e.to_dict() for e in self.episodes],
            "feedback": [f.to_dict() for f in self.feedback_history],
            "diff": self.final_code,
            "duration": round(self.duration, 6),
        }


# ---------------------------------------------------------------------------
# Workspace bookkeeping
# ---------------------------------------------------------------------------

def workspace_files(workspace: str) -> Dict[str, bytes]:
    files: Dict[str, bytes] = {}
    for dirpath, dirnames, filenames in os.walk(workspace):
        dirnames[:] = sorted(d for d in dirnames if d != ".git")
        for name in sorted(filenames):
            if name == ".build.lock":
                continue
            full = os.path.join(dirpath, name)
            rel = os.path.relpath(full, workspace)
            with open(full, "rb") as fh:
                files[rel] = fh.read()
    return files


def _restore_workspace(workspace: str, snapshot: Dict[str, bytes]) -> None:
    current = workspace_files(workspace)
    for rel in current:
        if rel not in snapshot:
            os.remove(os.path.join(workspace, rel))
    for rel, blob in snapshot.items():
        full = os.path.join(workspace, rel)
        if current.get(rel) != blob:
            os.makedirs(os.path.dirname(full) or workspace, exist_ok=True)
            with open(full, "wb") as fh:
                fh.write(blob)


def _safe_relpath(workspace: str, rel: str) -> Optional[str]:
    if os.path.isabs(rel):
        return None
    full = os.path.abspath(os.path.join(workspace, rel))
    root = os.path.abspath(workspace)
    if full == root or not full.startswith(root + os.sep):
        return None
    return full


def _java_units(files: Dict[str, bytes]) -> List[SourceUnit]:
    units = []
    for rel in sorted(files):
        if rel.endswith(".java"):
            units.append(parse_source(rel, files[rel].decode("utf-8")))
    return units


def _write_files(workspace: str, edits: Dict[str, str]) -> None:
    for rel, content in edits.items():
        full = _safe_relpath(workspace, rel)
        if full is None:
            raise PipelineError(f"edit escapes the workspace: {rel}")
        os.makedirs(os.path.dirname(full) or workspace, exist_ok=True)
        with open(full, "w", encoding="utf-8") as fh:
            fh.write(content)


def workspace_diff(baseline: Dict[str, bytes], current: Dict[str, bytes]) -> str:
    """Unified diff over .java files between two workspace snapshots."""
    chunks: List[str] = []
    paths = sorted(set(baseline) | set(current))
    for rel in paths:
        if not rel.endswith(".java"):
            continue
        old = baseline.get(rel, b"").decode("utf-8", errors="replace").splitlines(keepends=True)
        new = current.get(rel, b"").decode("utf-8", errors="replace").splitlines(keepends=True)
        if old == new:
            continue
        chunks.extend(difflib.unified_diff(old, new,
                                           fromfile=f"a/{rel}", tofile=f"b/{rel}"))
    return "".join(chunks)


# ---------------------------------------------------------------------------
# Candidate parsing
# ---------------------------------------------------------------------------

_FENCE = re.compile(r"```([a-zA-Z0-9_+-]*)[ \t]*\n(.*?)```", re.DOTALL)
_FILE_MARK = re.compile(r"^\s*//\s*FILE:\s*(\S+)[ \t]*\n")


def parse_candidate(text: str, default_path: str) -> Optional[Dict[str, str]]:
    """Whole-file replacements from fenced blocks; `// FILE: <path>` first
    lines name the file, an untagged block targets the method's own file."""
    files: Dict[str, str] = {}
    for lang, block in _FENCE.findall(text):
        if lang.lower() == "json":
            continue
        mark = _FILE_MARK.match(block)
        if mark:
            files[mark.group(1)] = block[mark.end():]
        else:
            files[default_path] = block
    return files or None


_REFLECTION = re.compile(r"REFLECTION:\s*(.*?)(?=PLAN:|```|$)", re.DOTALL)
_PLAN = re.compile(r"PLAN:\s*(.*?)(?=```|$)", re.DOTALL)


def _parse_repair_sections(text: str) -> Tuple[str, str]:
    reflection_match = _REFLECTION.search(text)
    plan_match = _PLAN.search(text)
    reflection = reflection_match.group(1).strip() if reflection_match else ""
    plan = plan_match.group(1).strip() if plan_match else ""
    return reflection, plan


# ---------------------------------------------------------------------------
# Task context and developer tools
# ---------------------------------------------------------------------------

TOOL_SPECS = [
    ToolSpec("get_refactoring_operation",
             "The requested refactoring operation and its definition."),
    ToolSpec("get_method_to_be_refactored",
             "Source code of the method to be refactored."),
    ToolSpec("get_class_content",
             "Full source text of a class (defaults to the target's class).",
             [ToolParam("class_name", "string", required=False)]),
    ToolSpec("get_project_structure", "The project directory tree."),
    ToolSpec("get_similar_refactoring",
             "Similar refactoring examples retrieved from the store."),
    ToolSpec("get_file_content", "Content of one project file.",
             [ToolParam("path", "string", required=True)]),
    ToolSpec("get_call_graph",
             "Direct callers and callees of the target method."),
]


@dataclass
class _TaskContext:
    task: RefactoringTask
    baseline: Dict[str, bytes]
    before_units: List[SourceUnit]
    target_text: str
    target_file: str
    examples_text: str
    structure_text: str
    call_graph_text: str


def _build_context(
    task: RefactoringTask,
    baseline: Dict[str, bytes],
    before_units: List[SourceUnit],
    examples_text: str,
) -> _TaskContext:
    target_text = method_text(before_units, task.target)
    unit, _ = find_class(before_units, task.target.qualified_class)

    graph = build_call_graph(before_units)
    callers = direct_callers(graph, task.target)
    callees = direct_callees(graph, task.target)
    call_lines = ["Callers:"]
    call_lines += [f"  {r}" for r in callers] or ["  (none)"]
    call_lines.append("Callees:")
    call_lines += [f"  {r}" for r in callees] or ["  (none)"]

    return _TaskContext(
        task=task,
        baseline=baseline,
        before_units=before_units,
        target_text=target_text,
        target_file=unit.path,
        examples_text=examples_text,
        structure_text=_render_structure(task.workspace),
        call_graph_text="\n".join(call_lines),
    )


def _render_structure(workspace: str) -> str:
    lines = [os.path.basename(os.path.abspath(workspace)) + "/"]
    for dirpath, dirnames, filenames in os.walk(workspace):
        dirnames[:] = sorted(d for d in dirnames if not d.startswith("."))
        rel = os.path.relpath(dirpath, workspace)
        depth = 0 if rel == "." else rel.count(os.sep) + 1
        if rel != ".":
            lines.append("  " * depth + os.path.basename(dirpath) + "/")
        for name in sorted(filenames):
            if name.startswith(".") or name == "build.log":
                continue
            lines.append("  " * (depth + 1) + name)
    return "\n".join(lines)


def _dispatch_tool(ctx: _TaskContext, call: ToolCall) -> str:
    task = ctx.task
    if call.name == "get_refactoring_operation":
        return (f"{task.requested_type.value}\n"
                + prompts.OPERATION_NOTES[task.requested_type])
    if call.name == "get_method_to_be_refactored":
        return f"{task.target}\n{ctx.target_text}"
    if call.name == "get_class_content":
        name = call.arguments.get("class_name") or task.target.qualified_class
        try:
            return class_content(ctx.before_units, name)
        except SourceLookupError as exc:
            return f"ERROR: {exc}"
    if call.name == "get_project_structure":
        return ctx.structure_text
    if call.name == "get_similar_refactoring":
        return ctx.examples_text
    if call.name == "get_file_content":
        rel = call.arguments.get("path", "")
        full = _safe_relpath(task.workspace, rel)
        if full is None or not os.path.isfile(full):
            return f"ERROR: file not found: {rel}"
        with open(full, "r", encoding="utf-8", errors="replace") as fh:
            return fh.read()
    if call.name == "get_call_graph":
        return ctx.call_graph_text
    return f"ERROR: unknown tool: {call.name}"


# ---------------------------------------------------------------------------
# Developer agent
# ---------------------------------------------------------------------------

@dataclass
class DeveloperOutcome:
    candidate: Optional[Dict[str, str]]
    tool_rounds: int
    error: str = ""


def developer_generate(ctx: _TaskContext, backend: Backend,
                       feedback: Optional[str] = None) -> DeveloperOutcome:
    """One Developer conversation: tool loop until a candidate code block."""
    task = ctx.task
    messages = [
        ChatMessage(role="system", content=prompts.DEVELOPER_SYSTEM),
        ChatMessage(role="user", content=prompts.developer_prompt(
            task.requested_type, ctx.target_text, str(task.target),
            ctx.examples_text, feedback)),
    ]
    tool_rounds = 0
    for _ in range(MAX_TOOL_ROUNDS):
        response = backend.complete(CompletionRequest(
            messages=list(messages), tools=list(TOOL_SPECS)))
        calls = extract_tool_calls(response)
        if calls:
            tool_rounds += 1
            for call in calls:
                messages.append(ChatMessage(role="assistant",
                                            content=response.content,
                                            tool_call=call))
                result = _dispatch_tool(ctx, call)
                messages.append(ChatMessage(role="tool", content=result,
                                            tool_call=ToolCall(call.name, {})))
            continue
        candidate = parse_candidate(response.content, ctx.target_file)
        if candidate:
            return DeveloperOutcome(candidate=candidate, tool_rounds=tool_rounds)
        messages.append(ChatMessage(role="assistant", content=response.content))
        messages.append(ChatMessage(role="user", content=prompts.nudge_prompt()))
    return DeveloperOutcome(candidate=None, tool_rounds=tool_rounds,
                            error=f"no candidate after {MAX_TOOL_ROUNDS} rounds")


# ---------------------------------------------------------------------------
# Reviewer agent
# ---------------------------------------------------------------------------

def reviewer_review(
    ctx: _TaskContext,
    candidate: Dict[str, str],
) -> Tuple[List[FeedbackReport], bool, Optional[List[SourceUnit]]]:
    """Fixed stage order: verification, then style, then the build trigger.
    The candidate is checked on a virtual overlay; nothing touches disk here."""
    task = ctx.task
    findings: List[Tuple[str, str]] = []
    for rel in sorted(candidate):
        if _safe_relpath(task.workspace, rel) is None:
            findings.append((rel, "candidate path escapes the workspace"))
    if findings:
        return [FeedbackReport("verification", False, findings)], False, None

    overlay = dict(ctx.baseline)
    for rel, content in candidate.items():
        overlay[rel] = content.encode("utf-8")
    try:
        after_units = _java_units(overlay)
    except ParseError as exc:
        report = FeedbackReport("verification", False,
                                [(f"{exc.path}:{exc.line}", exc.message)])
        return [report], False, None

    verified, detail = verify(ctx.before_units, after_units, task.requested_type)
    if not verified:
        report = FeedbackReport("verification", False, [
            ("detector", f"expected {task.requested_type.value}; {detail}")])
        return [report], False, after_units
    reports = [FeedbackReport("verification", True, [])]

    changed_units = [u for u in after_units if u.path in candidate]
    style_findings = style_check.check(changed_units, task.config.style_rules)
    if style_findings:
        reports.append(FeedbackReport("style", False, [
            (f"{f.path}:{f.line}", f"{f.rule_id} {f.message}")
            for f in style_findings]))
        return reports, False, after_units
    reports.append(FeedbackReport("style", True, []))
    return reports, True, after_units


# ---------------------------------------------------------------------------
# Repair agent
# ---------------------------------------------------------------------------

def _format_files(workspace: str, paths: Sequence[str]) -> str:
    blocks = []
    for rel in sorted(set(paths)):
        full = _safe_relpath(workspace, rel)
        if full is None or not os.path.isfile(full):
            continue
        with open(full, "r", encoding="utf-8", errors="replace") as fh:
            content = fh.read()
        blocks.append(f"```java\n// FILE: {rel}\n{content}\n```")
    return "\n\n".join(blocks)


def _error_log_of(report: BuildReport) -> str:
    parts = []
    for path, line, message in report.compile_errors:
        parts.append(f"{path}:{line}: error: {message}")
    for failure in report.failures:
        parts.append(f"FAILED: {failure.test_id}"
                     + (f" - {failure.message}" if failure.message else ""))
    parts.append(report.raw_log.strip())
    return "\n".join(p for p in parts if p)


def _class_context_text(ctx: _TaskContext) -> str:
    try:
        files = workspace_files(ctx.task.workspace)
        units = _java_units(files)
        return class_content(units, ctx.task.target.qualified_class)
    except (ParseError, SourceLookupError):
        return "(class context unavailable)"


def _run_build(workspace: str, config: BuildConfig) -> BuildReport:
    report = build_harness.compile(workspace, config)
    if not report.compiled:
        return report
    return build_harness.run_tests(workspace, config)


def repair_loop(
    ctx: _TaskContext,
    backend: Backend,
    first_build: BuildReport,
    touched_paths: Sequence[str],
) -> Tuple[List[RepairEpisode], BuildReport]:
    """Reflexion loop: analyze, reflect (from attempt 2 on), plan, act.
    Stops on a green build or when max_repair_attempts is spent."""
    task = ctx.task
    episodes: List[RepairEpisode] = []
    last_report = first_build
    previous_patch_paths: List[str] = list(touched_paths)
    previous_error_log = ""

    for attempt in range(1, task.config.max_repair_attempts + 1):
        error_log = _error_log_of(last_report)
        files_text = _format_files(task.workspace, previous_patch_paths)
        if attempt == 1:
            prompt = prompts.repair_initial_prompt(
                error_log, files_text, _class_context_text(ctx))
        else:
            prompt = prompts.repair_reflection_prompt(
                attempt, previous_error_log,
                ", ".join(sorted(set(previous_patch_paths))) or "(nothing)",
                error_log, files_text)
        response = backend.complete(CompletionRequest(messages=[
            ChatMessage(role="system", content=prompts.REPAIR_SYSTEM),
            ChatMessage(role="user", content=prompt),
        ]))
        reflection, plan = _parse_repair_sections(response.content)
        if attempt == 1:
            reflection = ""  # initial analysis: nothing to reflect on yet
        elif not reflection:
            reflection = ("previous patch left the build red; "
                          "re-deriving the fix from the current error log")

        patch = parse_candidate(response.content, ctx.target_file)
        if not patch:
            build_after = BuildReport(
                compiled=False, tests_passed=False,
                raw_log="patch application error: no code block in repair response")
            episodes.append(RepairEpisode(attempt, error_log, reflection, plan,
                                          [], build_after))
            previous_error_log = error_log
            continue
        bad_paths = [rel for rel in patch
                     if _safe_relpath(task.workspace, rel) is None]
        if bad_paths:
            build_after = BuildReport(
                compiled=False, tests_passed=False,
                raw_log="patch application error: path escapes workspace: "
                        + ", ".join(bad_paths))
            episodes.append(RepairEpisode(attempt, error_log, reflection, plan,
                                          sorted(patch.items()), build_after))
            previous_error_log = error_log
            continue

        _write_files(task.workspace, patch)
        previous_patch_paths = sorted(set(previous_patch_paths) | set(patch))
        build_after = _run_build(task.workspace, task.config.build)
        episodes.append(RepairEpisode(attempt, error_log, reflection, plan,
                                      sorted(patch.items()), build_after))
        last_report = build_after
        previous_error_log = error_log
        if build_after.tests_passed:
            break
    return episodes, last_report


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def _gather_examples(
    ctx_units: List[SourceUnit],
    target: MethodRef,
    backend: Backend,
    corpus: Optional[IndexedCorpus],
    n: int,
) -> str:
    if corpus is None or len(corpus) == 0:
        return prompts.format_examples([])
    method_code = method_text(ctx_units, target)
    graph = build_call_graph(ctx_units)
    neighbors = direct_callers(graph, target) + direct_callees(graph, target)
    pairs = []
    for ref in neighbors:
        try:
            pairs.append((ref, method_text(ctx_units, ref)))
        except SourceLookupError:
            continue
    unit, cls = find_class(ctx_units, target.qualified_class)
    class_info = (unit.package, cls.name, cls.signature())
    description = describe_for_index(method_code, pairs, class_info, backend)
    examples = retrieve_similar(
        corpus, (method_code, description, [body for _, body in pairs]), n)
    return prompts.format_examples(examples)


def run_pipeline(
    task: RefactoringTask,
    backend: Backend,
    corpus: Optional[IndexedCorpus] = None,
) -> PipelineResult:
    """Drive one refactoring task to its strongest achievable status."""
    started = time.monotonic()
    recorder = RecordingBackend(backend, {
        "target": str(task.target),
        "type": task.requested_type.value,
    })

    baseline_build = _run_build(task.workspace, task.config.build)
    if not baseline_build.tests_passed:
        raise PipelineError(
            "workspace not green: baseline compile/test failed:\n"
            + _error_log_of(baseline_build))

    baseline = workspace_files(task.workspace)
    before_units = _java_units(baseline)
    resolve_method(before_units, task.target)  # unresolved target fails early

    feedback_history: List[FeedbackReport] = []
    episodes: List[RepairEpisode] = []
    status = STATUS_REVIEW_EXHAUSTED
    rounds = 0
    final_after_units: Optional[List[SourceUnit]] = None

    try:
        examples_text = _gather_examples(before_units, task.target, recorder,
                                         corpus, task.config.retrieval_n)
        ctx = _build_context(task, baseline, before_units, examples_text)
        feedback: Optional[str] = None

        for round_no in range(1, task.config.max_review_rounds + 1):
            rounds = round_no
            outcome = developer_generate(ctx, recorder, feedback)
            if outcome.candidate is None:
                report = FeedbackReport("verification", False,
                                        [("developer", outcome.error)])
                feedback_history.append(report)
                feedback = report.render()
                continue

            reports, build_trigger, after_units = reviewer_review(ctx, outcome.candidate)
            feedback_history.extend(reports)
            if not build_trigger:
                feedback = "\n".join(r.render() for r in reports)
                continue

            _write_files(task.workspace, outcome.candidate)
            build_report = _run_build(task.workspace, task.config.build)
            if not build_report.tests_passed:
                new_episodes, build_report = repair_loop(
                    ctx, recorder, build_report, sorted(outcome.candidate))
                episodes.extend(new_episodes)
                if not build_report.tests_passed:
                    status = STATUS_REPAIR_EXHAUSTED
                    break

            # Post-build (and post-repair) re-verification on the real tree.
            current_units = _try_units(task.workspace)
            verified = False
            if current_units is not None:
                verified, _detail = verify(before_units, current_units,
                                           task.requested_type)
            if verified:
                status = STATUS_SUCCESS
                final_after_units = current_units
                break
            report = FeedbackReport("verification", False, [
                ("detector", "refactoring no longer present after build/repair")])
            feedback_history.append(report)
            feedback = report.render()
            _restore_workspace(task.workspace, baseline)
    except BackendError:
        status = STATUS_BACKEND_ERROR

    if status == STATUS_REVIEW_EXHAUSTED:
        _restore_workspace(task.workspace, baseline)

    final_files = workspace_files(task.workspace)
    diff = workspace_diff(baseline, final_files)
    if final_after_units is None:
        final_after_units = _try_units(task.workspace) or []

    return PipelineResult(
        status=status,
        final_code=diff,
        episodes=episodes,
        feedback_history=feedback_history,
        transcript=recorder.transcript,
        metrics_inputs=(before_units, final_after_units),
        rounds=rounds,
        duration=time.monotonic() - started,
    )


def _try_units(workspace: str) -> Optional[List[SourceUnit]]:
    try:
        return _java_units(workspace_files(workspace))
    except ParseError:
        return None
