"""Compile/test execution in task workspaces with structured log parsing.

Maven and Gradle projects are detected from their descriptor files; the
`command` kind runs explicitly configured compile/test command lines, which is
what keeps the test suite hermetic (no JDK required). Logs are parsed for
javac-style compile errors plus Surefire, Gradle, and generic `FAILED: <id>`
test failure shapes.
"""

from __future__ import annotations

import os
import re
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

DEFAULT_TIMEOUT_SECS = 600


class BuildSystemKind(Enum):
    MAVEN = "maven"
    GRADLE = "gradle"
    COMMAND = "command"


class BuildConfigError(ValueError):
    """Missing or contradictory build configuration."""


class ToolchainError(EnvironmentError):
    """The build tool itself is absent, as opposed to the build failing."""


@dataclass(frozen=True)
class TestFailure:
    __test__ = False  # keep pytest from collecting this as a test class

    test_id: str
    message: str = ""
    stack_excerpt: str = ""

    def to_dict(self) -> Dict[str, str]:
        return {"test_id": self.test_id, "message": self.message,
                "stack_excerpt": self.stack_excerpt}


@dataclass
class BuildReport:
    compiled: bool
    tests_passed: bool
    failures: List[TestFailure] = field(default_factory=list)
    compile_errors: List[Tuple[str, int, str]] = field(default_factory=list)
    raw_log: str = ""
    duration: float = 0.0

    def __post_init__(self) -> None:
        if self.tests_passed and not self.compiled:
            raise ValueError("tests_passed requires compiled")
        if self.tests_passed and self.failures:
            raise ValueError("tests_passed requires no failures")

    def to_dict(self) -> Dict[str, object]:
        return {
            "compiled": self.compiled,
            "tests_passed": self.tests_passed,
            "failures": [f.to_dict() for f in self.failures],
            "compile_errors": [
                {"path": p, "line": l, "message": m} for p, l, m in self.compile_errors
            ],
            "duration": round(self.duration, 6),
        }


@dataclass
class BuildConfig:
    kind: Optional[BuildSystemKind] = None
    compile_cmd: str = ""
    test_cmd: str = ""
    timeout_secs: int = DEFAULT_TIMEOUT_SECS


def detect_build_system(workspace: str) -> BuildSystemKind:
    has_maven = os.path.isfile(os.path.join(workspace, "pom.xml"))
    has_gradle = any(os.path.isfile(os.path.join(workspace, name))
                     for name in ("build.gradle", "build.gradle.kts"))
    if has_maven and has_gradle:
        raise BuildConfigError(
            "both Maven and Gradle descriptors present; set build.kind explicitly")
    if has_maven:
        return BuildSystemKind.MAVEN
    if has_gradle:
        return BuildSystemKind.GRADLE
    return BuildSystemKind.COMMAND


_DEFAULT_COMMANDS = {
    BuildSystemKind.MAVEN: ("mvn -q -B compile", "mvn -q -B test"),
    BuildSystemKind.GRADLE: ("gradle -q compileJava", "gradle -q test"),
}


def _command_for(config: BuildConfig, kind: BuildSystemKind, phase: str) -> str:
    if kind is BuildSystemKind.COMMAND:
        cmd = config.compile_cmd if phase == "compile" else config.test_cmd
        if not cmd:
            raise BuildConfigError(
                f"command build kind requires an explicit {phase} command")
        return cmd
    default_compile, default_test = _DEFAULT_COMMANDS[kind]
    if phase == "compile":
        return config.compile_cmd or default_compile
    return config.test_cmd or default_test


def _run(workspace: str, command: str, timeout_secs: int) -> Tuple[int, str, float, bool]:
    env = {
        "PATH": os.environ.get("PATH", ""),
        "LANG": os.environ.get("LANG", "C.UTF-8"),
        "HOME": workspace,
    }
    lock_path = os.path.join(workspace, ".build.lock")
    started = time.monotonic()
    timed_out = False
    try:
        with open(lock_path, "w", encoding="utf-8") as lock:
            lock.write(str(os.getpid()))
        try:
            proc = subprocess.run(
                shlex.split(command), cwd=workspace, env=env,
                stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
                timeout=timeout_secs, check=False,
            )
            log = proc.stdout.decode("utf-8", errors="replace")
            code = proc.returncode
        except subprocess.TimeoutExpired as exc:
            partial = (exc.stdout or b"").decode("utf-8", errors="replace")
            log = partial + f"\nTIMEOUT: command exceeded {timeout_secs}s\n"
            code = -1
            timed_out = True
        except FileNotFoundError as exc:
            raise ToolchainError(f"build tool not found: {command.split()[0]}") from exc
    finally:
        if os.path.exists(lock_path):
            os.remove(lock_path)
    duration = time.monotonic() - started
    with open(os.path.join(workspace, "build.log"), "a", encoding="utf-8") as fh:
        fh.write(f"$ {command}\n{log}\n")
    return code, log, duration, timed_out


_COMPILE_ERROR = re.compile(r"^(?:\[ERROR\]\s*)?(\S+\.java):(\d+):\s*error:\s*(.*)$")
_SUREFIRE_FAILURE = re.compile(r"^(?:\[ERROR\]\s*)?(\w[\w$]*)\(([\w.$]+)\).*<<<\s*(?:FAILURE|ERROR)!")
_GRADLE_FAILURE = re.compile(r"^([\w.$]+)\s+>\s+(\w[\w$]*)\s+FAILED\s*$")
_GENERIC_FAILURE = re.compile(r"^FAILED:\s*(\S.*?)(?:\s+-\s+(.*))?$")


def parse_log(raw_log: str, kind: BuildSystemKind) -> Tuple[List[Tuple[str, int, str]], List[TestFailure]]:
    compile_errors: List[Tuple[str, int, str]] = []
    failures: List[TestFailure] = []
    lines = raw_log.splitlines()
    for i, line in enumerate(lines):
        m = _COMPILE_ERROR.match(line.strip())
        if m:
            compile_errors.append((m.group(1), int(m.group(2)), m.group(3).strip()))
            continue
        test_id = message = None
        m = _SUREFIRE_FAILURE.match(line.strip())
        if m:
            test_id = f"{m.group(2)}#{m.group(1)}"
        else:
            m = _GRADLE_FAILURE.match(line.strip())
            if m:
                test_id = f"{m.group(1)}#{m.group(2)}"
            else:
                m = _GENERIC_FAILURE.match(line.strip())
                if m:
                    test_id = m.group(1).strip()
                    message = m.group(2) or ""
        if test_id:
            excerpt_lines = []
            for follow in lines[i + 1:i + 6]:
                if follow.startswith((" ", "\t")) and follow.strip():
                    excerpt_lines.append(follow.strip())
                else:
                    break
            if message is None:
                message = excerpt_lines[0] if excerpt_lines else ""
            failures.append(TestFailure(test_id=test_id, message=message,
                                        stack_excerpt="\n".join(excerpt_lines)))
    return compile_errors, failures


def compile(workspace: str, config: BuildConfig) -> BuildReport:  # noqa: A001
    kind = config.kind or detect_build_system(workspace)
    command = _command_for(config, kind, "compile")
    code, log, duration, timed_out = _run(workspace, command, config.timeout_secs)
    compile_errors, _ = parse_log(log, kind)
    return BuildReport(
        compiled=(code == 0 and not timed_out and not compile_errors),
        tests_passed=False,
        failures=[],
        compile_errors=compile_errors,
        raw_log=log,
        duration=duration,
    )


def run_tests(workspace: str, config: BuildConfig) -> BuildReport:
    kind = config.kind or detect_build_system(workspace)
    command = _command_for(config, kind, "test")
    code, log, duration, timed_out = _run(workspace, command, config.timeout_secs)
    compile_errors, failures = parse_log(log, kind)
    if timed_out or compile_errors:
        compiled = False
        green = False
    else:
        # a nonzero exit with parsed test failures still means the code compiled;
        # a nonzero exit with nothing parsed is an unknown crash, claim nothing
        compiled = code == 0 or bool(failures)
        green = code == 0 and not failures
    return BuildReport(
        compiled=compiled,
        tests_passed=green,
        failures=failures if not green else [],
        compile_errors=compile_errors,
        raw_log=log,
        duration=duration,
    )
