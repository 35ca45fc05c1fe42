"""Deterministic five-rule style checker feeding the Reviewer Agent.

Rule set "default":
  R1  line length <= 120
  R2  method names lowerCamelCase (constructors exempt)
  R3  class names UpperCamelCase
  R4  no two consecutive blank lines
  R5  opening brace sits on the declaration line, never alone on its own line
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, Iterable, List

from .source_model import SourceUnit

MAX_LINE_LENGTH = 120

_LOWER_CAMEL = re.compile(r"^[a-z][a-zA-Z0-9]*$")
_UPPER_CAMEL = re.compile(r"^[A-Z][a-zA-Z0-9]*$")


class StyleConfigError(ValueError):
    """Unknown rule-set id."""


@dataclass(frozen=True)
class StyleFinding:
    rule_id: str
    path: str
    line: int
    message: str

    def __str__(self) -> str:
        return f"{self.path}:{self.line} {self.rule_id} {self.message}"

    def to_dict(self) -> Dict[str, object]:
        return {"rule_id": self.rule_id, "path": self.path,
                "line": self.line, "message": self.message}


def _check_line_length(unit: SourceUnit) -> List[StyleFinding]:
    findings = []
    for i, line in enumerate(unit.text.splitlines(), start=1):
        if len(line) > MAX_LINE_LENGTH:
            findings.append(StyleFinding(
                "R1", unit.path, i,
                f"line is {len(line)} characters (max {MAX_LINE_LENGTH})"))
    return findings


def _check_method_names(unit: SourceUnit) -> List[StyleFinding]:
    findings = []
    for cls in unit.classes:
        for method in cls.methods:
            if method.name == cls.name:
                continue  # constructor
            if not _LOWER_CAMEL.match(method.name):
                findings.append(StyleFinding(
                    "R2", unit.path, method.span[0],
                    f"method name '{method.name}' is not lowerCamelCase"))
    return findings


def _check_class_names(unit: SourceUnit) -> List[StyleFinding]:
    findings = []
    for cls in unit.classes:
        if not _UPPER_CAMEL.match(cls.name):
            findings.append(StyleFinding(
                "R3", unit.path, cls.span[0],
                f"class name '{cls.name}' is not UpperCamelCase"))
    return findings


def _check_blank_runs(unit: SourceUnit) -> List[StyleFinding]:
    findings = []
    prev_blank = False
    for i, line in enumerate(unit.text.splitlines(), start=1):
        blank = not line.strip()
        if blank and prev_blank:
            findings.append(StyleFinding(
                "R4", unit.path, i, "two or more consecutive blank lines"))
        prev_blank = blank
    return findings


def _check_brace_placement(unit: SourceUnit) -> List[StyleFinding]:
    findings = []
    for i, line in enumerate(unit.text.splitlines(), start=1):
        if line.strip() == "{":
            findings.append(StyleFinding(
                "R5", unit.path, i, "opening brace must sit on the declaration line"))
    return findings


_DEFAULT_RULES = [
    _check_line_length,
    _check_method_names,
    _check_class_names,
    _check_blank_runs,
    _check_brace_placement,
]

RULE_SETS = {"default": _DEFAULT_RULES}


def check(units: Iterable[SourceUnit], rule_set: str = "default") -> List[StyleFinding]:
    """Run the named rule set over parsed units; empty result means pass."""
    if rule_set not in RULE_SETS:
        raise StyleConfigError(f"unknown style rule set: {rule_set!r}")
    findings: List[StyleFinding] = []
    for unit in units:
        for rule in RULE_SETS[rule_set]:
            findings.extend(rule(unit))
    findings.sort(key=lambda f: (f.path, f.line, f.rule_id))
    return findings
