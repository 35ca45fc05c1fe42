"""Prompt assembly for the Developer, Reviewer feedback, and Repair agents.

The developer prompt walks four steps (code analysis, refactoring method
reference, structure information extraction, refactoring execution) and always
embeds the mandatory context up front: the target method, the requested
operation, and the retrieved examples. Repair prompts carry the hard
constraint that behavior must not change.
"""

from __future__ import annotations

from typing import List, Optional, Sequence

from .refactoring_detect import RefactoringType

CODE_FENCE_HINT = (
    "Reply with the complete content of every file you change, each in its own "
    "fenced code block whose first line is `// FILE: <path relative to the "
    "project root>`. Unchanged files must not be included."
)

NO_FUNCTIONAL_CHANGE = (
    "You should not modify the code's functionality: the change must be a pure "
    "refactoring with identical behavior."
)

OPERATION_NOTES = {
    RefactoringType.EXTRACT_METHOD:
        "Extract Method: move a contiguous group of statements out of the "
        "target method into a new method in the same class, replacing them "
        "with a single call to it.",
    RefactoringType.INLINE_METHOD:
        "Inline Method: replace the single call to the target method with the "
        "method's body and delete the method.",
    RefactoringType.MOVE_METHOD:
        "Move Method: relocate the target method to another class, keeping "
        "its name, parameters, and body unchanged.",
    RefactoringType.EXTRACT_AND_MOVE_METHOD:
        "Extract and Move Method: extract a contiguous group of statements "
        "into a new method declared in a different class, replacing them with "
        "a single call to it.",
    RefactoringType.MOVE_AND_INLINE_METHOD:
        "Move and Inline Method: inline the target method into its caller in "
        "another class and delete the method.",
    RefactoringType.MOVE_AND_RENAME_METHOD:
        "Move and Rename Method: relocate the target method to another class "
        "under a new name, keeping its parameters and body unchanged.",
}

DEVELOPER_SYSTEM = (
    "You are the Developer Agent of an automated refactoring pipeline. You "
    "perform exactly one method-level refactoring at a time, producing fully "
    "compilable, readable, test-passing code. Use the provided tools to "
    "inspect the project when needed."
)

REPAIR_SYSTEM = (
    "You are the Repair Agent of an automated refactoring pipeline. You fix "
    "compile and test failures introduced by a refactoring. "
    + NO_FUNCTIONAL_CHANGE
)


def format_examples(examples: Sequence[object]) -> str:
    if not examples:
        return "(no similar refactorings found in the store)"
    parts: List[str] = []
    for i, record in enumerate(examples, start=1):
        parts.append(
            f"Example {i} ({record.type.value}):\n"
            f"Before:\n{record.before_code}\n"
            f"After:\n{record.after_code}"
        )
    return "\n\n".join(parts)


def developer_prompt(
    operation: RefactoringType,
    method_text: str,
    method_ref: str,
    examples_text: str,
    feedback: Optional[str] = None,
) -> str:
    sections = [
        "Perform the refactoring below in four steps.",
        "Step 1: Code Analysis. Examine the method to be refactored and how "
        "it is used.",
        f"Refactoring operation: {operation.value}.\n{OPERATION_NOTES[operation]}",
        f"Method to be refactored ({method_ref}):\n```java\n{method_text}\n```",
        "Step 2: Refactoring Method Reference. Similar refactorings retrieved "
        "from past examples; imitate their style where it applies.\n"
        + examples_text,
        "Step 3: Structure Information Extraction. Call the available tools "
        "(get_project_structure, get_class_content, get_file_content, "
        "get_call_graph, get_method_to_be_refactored, "
        "get_refactoring_operation, get_similar_refactoring) for any further "
        "context you need.",
        "Step 4: Refactoring Execution. Apply the requested refactoring and "
        "nothing else. " + NO_FUNCTIONAL_CHANGE + " " + CODE_FENCE_HINT,
    ]
    if feedback:
        sections.append("Reviewer feedback on your previous attempt; address "
                        "every finding:\n" + feedback)
    return "\n\n".join(sections)


def nudge_prompt() -> str:
    return ("No code block was detected in your reply. " + CODE_FENCE_HINT)


def repair_initial_prompt(
    error_log: str,
    changed_files: str,
    class_context: str,
) -> str:
    return "\n\n".join([
        "The refactored code fails to build or to pass its tests. Analyze the "
        "error log and fix the problem. " + NO_FUNCTIONAL_CHANGE,
        f"Error log:\n```\n{error_log}\n```",
        f"Current content of the files you may edit:\n{changed_files}",
        f"Class context:\n{class_context}",
        CODE_FENCE_HINT,
    ])


def repair_reflection_prompt(
    attempt: int,
    previous_error_log: str,
    previous_patch_summary: str,
    error_log: str,
    changed_files: str,
) -> str:
    return "\n\n".join([
        f"Repair attempt {attempt}. Your previous patch did not fix the build. "
        + NO_FUNCTIONAL_CHANGE,
        "First write a section starting with `REFLECTION:` comparing the "
        "previous error log with your previous patch and stating why it "
        "failed. Then write a section starting with `PLAN:` describing the "
        "next fix. Then emit the corrected files.",
        f"Previous error log:\n```\n{previous_error_log}\n```",
        f"Previous patch touched:\n{previous_patch_summary}",
        f"Current error log:\n```\n{error_log}\n```",
        f"Current content of the files you may edit:\n{changed_files}",
        CODE_FENCE_HINT,
    ])
