"""Shared fixture material: Java sources, fixture repos, scripted responses."""

from __future__ import annotations

import json
import os
import re
from typing import Dict, List, Tuple

from autorefactor.build_harness import BuildConfig, BuildSystemKind
from autorefactor.refactoring_detect import RefactoringType
from autorefactor.source_model import SourceUnit, parse_source

# ---------------------------------------------------------------------------
# A tiny deterministic "compiler" so build tests run hermetically: balanced
# braces per file plus declared-vs-invoked symbol checking, with javac-style
# error lines. Unqualified calls must resolve to a method declared somewhere
# in the checked tree; qualified calls (x.y()) are ignored.
# ---------------------------------------------------------------------------

JAVACHECK = r'''
import os, re, sys

KEYWORDS = {"if", "for", "while", "switch", "catch", "return", "new",
            "super", "this", "do", "else", "try", "synchronized",
            "assert", "throw"}

def scan(path, text):
    errors = []
    decls = set()
    calls = []
    depth = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if "#" in line:
            errors.append((path, lineno, "illegal character: '#'"))
            continue
        stripped = line.strip()
        if (stripped.startswith("//") or stripped.startswith("*")
                or stripped.startswith("/*")):
            continue
        code = re.sub(r'"(?:[^"\\]|\\.)*"', '""', line)
        m = re.match(r"\s*(?:(?:public|private|protected|static|final|abstract)\s+)*"
                     r"[\w<>\[\],\s]+?\s(\w+)\s*\([^)]*\)\s*\{", code)
        if m and m.group(1) not in KEYWORDS:
            decls.add(m.group(1))
        for call in re.finditer(r"(?<![\w.])(\w+)\s*\(", code):
            name = call.group(1)
            if name in KEYWORDS:
                continue
            if m and name == m.group(1):
                continue
            calls.append((path, lineno, name))
        depth += code.count("{") - code.count("}")
    if depth != 0:
        errors.append((path, len(text.splitlines()),
                       "reached end of file while parsing"))
    return decls, calls, errors

def main():
    root = sys.argv[1]
    files = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            if name.endswith(".java"):
                files.append(os.path.join(dirpath, name))
    all_decls = set()
    all_calls = []
    errors = []
    for path in files:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        decls, calls, errs = scan(path, text)
        all_decls |= decls
        all_calls.extend(calls)
        errors.extend(errs)
    for path, lineno, name in all_calls:
        if name not in all_decls:
            errors.append((path, lineno, "cannot find symbol: " + name))
    errors.sort()
    for path, lineno, message in errors:
        print("%s:%d: error: %s" % (path, lineno, message))
    if errors:
        sys.exit(1)
    print("checked %d files" % len(files))

main()
'''.lstrip()

COMPILE_CMD = "python3 tools/javacheck.py src"
TEST_CMD = "python3 tools/javacheck.py src"

# ---------------------------------------------------------------------------
# The standard green repository used by pipeline, CLI, and service tests.
# ---------------------------------------------------------------------------

CALC_BEFORE = """package app;

public class Calc {
    private int total;
    private int count;

    public int sum(int[] xs) {
        int acc = 0;
        for (int x : xs) {
            acc = acc + x;
        }
        total = acc;
        log();
        count = count + 1;
        return acc;
    }

    public void log() {
        System.out.println("sum");
    }
}
"""

CALC_AFTER_EXTRACT = """package app;

public class Calc {
    private int total;
    private int count;

    public int sum(int[] xs) {
        int acc = 0;
        for (int x : xs) {
            acc = acc + x;
        }
        total = acc;
        publish();
        return acc;
    }

    private void publish() {
        log();
        count = count + 1;
    }

    public void log() {
        System.out.println("sum");
    }
}
"""

# The same extract with an injected compile error: the hermetic checker
# rejects '#' anywhere (javac-style "illegal character"), while the comment
# is invisible to the detector's normalized statements and to the style rules.
CALC_AFTER_EXTRACT_MARKED = CALC_AFTER_EXTRACT.replace(
    "        log();\n        count = count + 1;\n    }",
    "        log();\n        count = count + 1;\n"
    "        // #review-pending\n    }")

NOTES_BROKEN = """package app;

public class Notes {
    public void record() {
        rcord();
    }
}
"""

NOTES_FIXED = """package app;

public class Notes {
    public void record() {
        System.out.println("noted");
    }
}
"""


def write_tree(root: str, files: Dict[str, str]) -> None:
    for rel, text in files.items():
        full = os.path.join(root, rel)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        with open(full, "w", encoding="utf-8") as fh:
            fh.write(text)


def make_green_repo(root: str) -> str:
    """Build the Calc fixture repository with the hermetic build tool."""
    write_tree(root, {
        "src/app/Calc.java": CALC_BEFORE,
        "tools/javacheck.py": JAVACHECK,
    })
    return root


def command_build_config(timeout: int = 60) -> BuildConfig:
    return BuildConfig(kind=BuildSystemKind.COMMAND,
                       compile_cmd=COMPILE_CMD,
                       test_cmd=TEST_CMD,
                       timeout_secs=timeout)


# ---------------------------------------------------------------------------
# Scripted-response builders
# ---------------------------------------------------------------------------

def code_block(path: str, text: str) -> str:
    return f"```java\n// FILE: {path}\n{text}```\n"


def dev_response(files: Dict[str, str], note: str = "Applying the refactoring.") -> str:
    parts = [note, ""]
    for path in sorted(files):
        parts.append(code_block(path, files[path]))
    return "\n".join(parts)


def repair_response(reflection: str, plan: str, files: Dict[str, str]) -> str:
    parts = []
    if reflection:
        parts.append(f"REFLECTION: {reflection}")
    parts.append(f"PLAN: {plan}")
    parts.append("")
    for path in sorted(files):
        parts.append(code_block(path, files[path]))
    return "\n".join(parts)


def write_script(path: str, responses: List[str]) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(responses, fh)
    return path


# ---------------------------------------------------------------------------
# Eighteen detector fixture pairs: three per refactoring type, each pure.
# ---------------------------------------------------------------------------

Pair = Tuple[str, RefactoringType, Dict[str, str], Dict[str, str]]


def _pair(label, rtype, before, after) -> Pair:
    return (label, rtype, before, after)


def detector_pairs() -> List[Pair]:
    pairs: List[Pair] = []

    # --- ExtractMethod -----------------------------------------------------
    pairs.append(_pair(
        "extract_tail", RefactoringType.EXTRACT_METHOD,
        {"Calc.java": CALC_BEFORE},
        {"Calc.java": CALC_AFTER_EXTRACT}))

    pairs.append(_pair(
        "extract_param_rename", RefactoringType.EXTRACT_METHOD,
        {"Cart.java": """package shop;

public class Cart {
    private int total;

    public void checkout(int price, int qty) {
        int line = price * qty;
        total = total + line;
        System.out.println("item " + price);
        System.out.println("qty " + qty);
        System.out.println(total);
    }
}
"""},
        {"Cart.java": """package shop;

public class Cart {
    private int total;

    public void checkout(int price, int qty) {
        int line = price * qty;
        total = total + line;
        printItem(price, qty);
        System.out.println(total);
    }

    private void printItem(int cost, int count) {
        System.out.println("item " + cost);
        System.out.println("qty " + count);
    }
}
"""}))

    pairs.append(_pair(
        "extract_loop_block", RefactoringType.EXTRACT_METHOD,
        {"Report.java": """package fmt;

public class Report {
    public void render(int[] rows) {
        System.out.println("begin");
        for (int r : rows) {
            System.out.println(r);
        }
        System.out.println("end");
    }
}
"""},
        {"Report.java": """package fmt;

public class Report {
    public void render(int[] rows) {
        System.out.println("begin");
        printRows(rows);
        System.out.println("end");
    }

    private void printRows(int[] rows) {
        for (int r : rows) {
            System.out.println(r);
        }
    }
}
"""}))

    # --- ExtractAndMoveMethod ----------------------------------------------
    pairs.append(_pair(
        "extract_move_static", RefactoringType.EXTRACT_AND_MOVE_METHOD,
        {"A.java": """package em1;

public class A {
    public void run(int n) {
        int y = n + 1;
        System.out.println(y * 2);
        System.out.println(y * 3);
        System.out.println("done");
    }
}
""",
         "Util.java": """package em1;

public class Util {
    public void misc() {
        System.out.println("misc");
    }
}
"""},
        {"A.java": """package em1;

public class A {
    public void run(int n) {
        int y = n + 1;
        Util.dump(y);
        System.out.println("done");
    }
}
""",
         "Util.java": """package em1;

public class Util {
    public void misc() {
        System.out.println("misc");
    }

    public static void dump(int y) {
        System.out.println(y * 2);
        System.out.println(y * 3);
    }
}
"""}))

    pairs.append(_pair(
        "extract_move_rename_params", RefactoringType.EXTRACT_AND_MOVE_METHOD,
        {"Orders.java": """package store;

public class Orders {
    public void process(int id) {
        System.out.println("processing " + id);
        System.out.println("audit " + id);
        System.out.println("audited " + id);
        System.out.println("done " + id);
    }
}
""",
         "Audit.java": """package store;

public class Audit {
    public void ping() {
        System.out.println("ping");
    }
}
"""},
        {"Orders.java": """package store;

public class Orders {
    public void process(int id) {
        System.out.println("processing " + id);
        Audit.trail(id);
        System.out.println("done " + id);
    }
}
""",
         "Audit.java": """package store;

public class Audit {
    public void ping() {
        System.out.println("ping");
    }

    public static void trail(int orderId) {
        System.out.println("audit " + orderId);
        System.out.println("audited " + orderId);
    }
}
"""}))

    pairs.append(_pair(
        "extract_move_instance_call", RefactoringType.EXTRACT_AND_MOVE_METHOD,
        {"Server.java": """package net;

public class Server {
    public void start(int port) {
        System.out.println("starting");
        System.out.println("port=" + port);
        System.out.println("listening");
        System.out.println("ready");
    }
}
""",
         "Logger.java": """package net;

public class Logger {
    public void flush() {
        System.out.println("flush");
    }
}
"""},
        {"Server.java": """package net;

public class Server {
    public void start(int port) {
        System.out.println("starting");
        logger.banner(port);
        System.out.println("ready");
    }
}
""",
         "Logger.java": """package net;

public class Logger {
    public void flush() {
        System.out.println("flush");
    }

    public void banner(int port) {
        System.out.println("port=" + port);
        System.out.println("listening");
    }
}
"""}))

    # --- InlineMethod -------------------------------------------------------
    pairs.append(_pair(
        "inline_two_statements", RefactoringType.INLINE_METHOD,
        {"A.java": """package in1;

public class A {
    public void run(int n) {
        int y = n + 1;
        helper(y);
        System.out.println(y);
    }

    private void helper(int v) {
        System.out.println(v * 2);
        System.out.println(v * 3);
    }
}
"""},
        {"A.java": """package in1;

public class A {
    public void run(int n) {
        int y = n + 1;
        System.out.println(y * 2);
        System.out.println(y * 3);
        System.out.println(y);
    }
}
"""}))

    pairs.append(_pair(
        "inline_single_statement", RefactoringType.INLINE_METHOD,
        {"Ops.java": """package calc;

public class Ops {
    private int counter;

    public int apply(int a, int b) {
        int s = a + b;
        bump();
        return s;
    }

    private void bump() {
        counter = counter + 1;
    }
}
"""},
        {"Ops.java": """package calc;

public class Ops {
    private int counter;

    public int apply(int a, int b) {
        int s = a + b;
        counter = counter + 1;
        return s;
    }
}
"""}))

    pairs.append(_pair(
        "inline_two_params", RefactoringType.INLINE_METHOD,
        {"Shape.java": """package geo;

public class Shape {
    public int area(int w, int h) {
        int result = 0;
        scale(w, h);
        return result;
    }

    private void scale(int x, int y) {
        System.out.println(x * y);
        System.out.println(x + y);
    }
}
"""},
        {"Shape.java": """package geo;

public class Shape {
    public int area(int w, int h) {
        int result = 0;
        System.out.println(w * h);
        System.out.println(w + h);
        return result;
    }
}
"""}))

    # --- MoveAndInlineMethod -------------------------------------------------
    pairs.append(_pair(
        "move_inline_static", RefactoringType.MOVE_AND_INLINE_METHOD,
        {"A.java": """package mi1;

public class A {
    public void run(int n) {
        int y = n + 1;
        Util.dump(y);
        System.out.println("done");
    }
}
""",
         "Util.java": """package mi1;

public class Util {
    public void misc() {
        System.out.println("misc");
    }

    public static void dump(int v) {
        System.out.println(v * 2);
        System.out.println(v * 3);
    }
}
"""},
        {"A.java": """package mi1;

public class A {
    public void run(int n) {
        int y = n + 1;
        System.out.println(y * 2);
        System.out.println(y * 3);
        System.out.println("done");
    }
}
""",
         "Util.java": """package mi1;

public class Util {
    public void misc() {
        System.out.println("misc");
    }
}
"""}))

    pairs.append(_pair(
        "move_inline_string_arg", RefactoringType.MOVE_AND_INLINE_METHOD,
        {"Client.java": """package io;

public class Client {
    public void send(String msg) {
        System.out.println("open");
        Codec.frame(msg);
        System.out.println("close");
    }
}
""",
         "Codec.java": """package io;

public class Codec {
    public void reset() {
        System.out.println("reset");
    }

    public static void frame(String data) {
        System.out.println("len=" + data.length());
        System.out.println(data);
    }
}
"""},
        {"Client.java": """package io;

public class Client {
    public void send(String msg) {
        System.out.println("open");
        System.out.println("len=" + msg.length());
        System.out.println(msg);
        System.out.println("close");
    }
}
""",
         "Codec.java": """package io;

public class Codec {
    public void reset() {
        System.out.println("reset");
    }
}
"""}))

    pairs.append(_pair(
        "move_inline_single", RefactoringType.MOVE_AND_INLINE_METHOD,
        {"Reader.java": """package fs;

public class Reader {
    public void load(String path) {
        System.out.println("loading");
        Paths.show(path);
    }
}
""",
         "Paths.java": """package fs;

public class Paths {
    public void keep() {
        System.out.println("keep");
    }

    public static void show(String p) {
        System.out.println("path " + p);
    }
}
"""},
        {"Reader.java": """package fs;

public class Reader {
    public void load(String path) {
        System.out.println("loading");
        System.out.println("path " + path);
    }
}
""",
         "Paths.java": """package fs;

public class Paths {
    public void keep() {
        System.out.println("keep");
    }
}
"""}))

    # --- MoveMethod -----------------------------------------------------------
    pairs.append(_pair(
        "move_simple", RefactoringType.MOVE_METHOD,
        {"A.java": """package mv1;

public class A {
    public int twice(int v) {
        return v * 2;
    }

    public void keep() {
        System.out.println("hi");
    }
}
""",
         "B.java": """package mv1;

public class B {
    public void other() {
        System.out.println("other");
    }
}
"""},
        {"A.java": """package mv1;

public class A {
    public void keep() {
        System.out.println("hi");
    }
}
""",
         "B.java": """package mv1;

public class B {
    public void other() {
        System.out.println("other");
    }

    public int twice(int v) {
        return v * 2;
    }
}
"""}))

    pairs.append(_pair(
        "move_control_flow", RefactoringType.MOVE_METHOD,
        {"Source.java": """package mv2;

public class Source {
    public int findMax(int[] xs) {
        int best = xs[0];
        for (int x : xs) {
            if (x > best) {
                best = x;
            }
        }
        return best;
    }

    public void stay() {
        System.out.println("stay");
    }
}
""",
         "Dest.java": """package mv2;

public class Dest {
    public void existing() {
        System.out.println("existing");
    }
}
"""},
        {"Source.java": """package mv2;

public class Source {
    public void stay() {
        System.out.println("stay");
    }
}
""",
         "Dest.java": """package mv2;

public class Dest {
    public void existing() {
        System.out.println("existing");
    }

    public int findMax(int[] xs) {
        int best = xs[0];
        for (int x : xs) {
            if (x > best) {
                best = x;
            }
        }
        return best;
    }
}
"""}))

    pairs.append(_pair(
        "move_zero_arg", RefactoringType.MOVE_METHOD,
        {"Alpha.java": """package mv3;

public class Alpha {
    public void hello() {
        System.out.println("hello");
        System.out.println("world");
    }

    public void keep() {
        System.out.println("keep");
    }
}
""",
         "Beta.java": """package mv3;

public class Beta {
    public void base() {
        System.out.println("base");
    }
}
"""},
        {"Alpha.java": """package mv3;

public class Alpha {
    public void keep() {
        System.out.println("keep");
    }
}
""",
         "Beta.java": """package mv3;

public class Beta {
    public void base() {
        System.out.println("base");
    }

    public void hello() {
        System.out.println("hello");
        System.out.println("world");
    }
}
"""}))

    # --- MoveAndRenameMethod ---------------------------------------------------
    pairs.append(_pair(
        "move_rename_simple", RefactoringType.MOVE_AND_RENAME_METHOD,
        {"A.java": """package mr1;

public class A {
    public int twice(int v) {
        return v * 2;
    }

    public void keep() {
        System.out.println("hi");
    }
}
""",
         "B.java": """package mr1;

public class B {
    public void other() {
        System.out.println("other");
    }
}
"""},
        {"A.java": """package mr1;

public class A {
    public void keep() {
        System.out.println("hi");
    }
}
""",
         "B.java": """package mr1;

public class B {
    public void other() {
        System.out.println("other");
    }

    public int doubled(int v) {
        return v * 2;
    }
}
"""}))

    pairs.append(_pair(
        "move_rename_control", RefactoringType.MOVE_AND_RENAME_METHOD,
        {"Source.java": """package mr2;

public class Source {
    public int countPositives(int[] xs) {
        int n = 0;
        for (int x : xs) {
            if (x > 0) {
                n = n + 1;
            }
        }
        return n;
    }

    public void stay() {
        System.out.println("stay");
    }
}
""",
         "Dest.java": """package mr2;

public class Dest {
    public void existing() {
        System.out.println("existing");
    }
}
"""},
        {"Source.java": """package mr2;

public class Source {
    public void stay() {
        System.out.println("stay");
    }
}
""",
         "Dest.java": """package mr2;

public class Dest {
    public void existing() {
        System.out.println("existing");
    }

    public int tallyPositive(int[] xs) {
        int n = 0;
        for (int x : xs) {
            if (x > 0) {
                n = n + 1;
            }
        }
        return n;
    }
}
"""}))

    pairs.append(_pair(
        "move_rename_string", RefactoringType.MOVE_AND_RENAME_METHOD,
        {"Text.java": """package mr3;

public class Text {
    public String shout(String s) {
        return s.toUpperCase() + "!";
    }

    public void noop() {
        System.out.println("noop");
    }
}
""",
         "Strings.java": """package mr3;

public class Strings {
    public void blank() {
        System.out.println("blank");
    }
}
"""},
        {"Text.java": """package mr3;

public class Text {
    public void noop() {
        System.out.println("noop");
    }
}
""",
         "Strings.java": """package mr3;

public class Strings {
    public void blank() {
        System.out.println("blank");
    }

    public String upper(String s) {
        return s.toUpperCase() + "!";
    }
}
"""}))

    return pairs


_METHOD_HEADER = re.compile(
    r"^\s*(?:public|private|protected|static)(?!.*\bclass\b).*\(.*\)\s*\{\s*$")


def inject_statement(files: Dict[str, str],
                     stmt: str = '        System.out.println("extra");') -> Dict[str, str]:
    """Insert one extraneous statement after the first method header found
    in the first file (sorted by path); used to flip purity fixtures."""
    out = dict(files)
    for path in sorted(out):
        lines = out[path].splitlines()
        for i, line in enumerate(lines):
            if _METHOD_HEADER.match(line):
                lines.insert(i + 1, stmt)
                out[path] = "\n".join(lines) + "\n"
                return out
    raise AssertionError("no method header found to inject into")


def parse_files(files: Dict[str, str]) -> List[SourceUnit]:
    return [parse_source(path, files[path]) for path in sorted(files)]


# ---------------------------------------------------------------------------
# Records for the index/purity-gate fixtures: three pure + one impure.
# ---------------------------------------------------------------------------

def index_records() -> List[Dict[str, object]]:
    pairs = detector_pairs()
    by_label = {p[0]: p for p in pairs}
    chosen = [by_label["extract_tail"], by_label["move_simple"],
              by_label["inline_two_statements"]]
    records = []
    for n, (label, rtype, before, after) in enumerate(chosen):
        records.append({
            "id": f"rec-{label}",
            "project": "fixtureproj",
            "commit": f"c{n:02d}",
            "before_files": before,
            "after_files": after,
            "description": f"fixture refactoring {label.replace('_', ' ')}",
        })
    # the extraction is still detectable, but a behavioral edit in an
    # untouched method makes the record fail the purity gate
    label, rtype, before, after = by_label["extract_tail"]
    impure_after = {
        path: text.replace('        System.out.println("sum");\n',
                           '        System.out.println("sum");\n'
                           '        total = total - 1;\n')
        for path, text in after.items()
    }
    assert impure_after != after
    records.append({
        "id": "rec-impure",
        "project": "fixtureproj",
        "commit": "c99",
        "before_files": before,
        "after_files": impure_after,
        "description": "fixture with an extra behavioral edit",
    })
    return records
