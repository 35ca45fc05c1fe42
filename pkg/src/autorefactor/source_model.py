"""Java-subset source model: parsing, statements, call graph, structure queries.

The grammar covered here is deliberately small: package/import headers,
class/interface/enum declarations with extends/implements, field and method
declarations, and method bodies tokenized into statements by ``;`` and
``{``/``}`` with full string/char/comment awareness. Generics and annotations
are carried as opaque text. That is enough to define the six method-level
refactorings handled downstream without a real Java frontend.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Set, Tuple

MODIFIER_KEYWORDS = {
    "public", "private", "protected", "static", "final", "abstract",
    "synchronized", "native", "strictfp", "transient", "volatile", "default",
}

# Identifiers that look like calls but never are.
NON_CALL_KEYWORDS = {
    "if", "for", "while", "switch", "catch", "return", "throw", "new",
    "synchronized", "assert", "do", "else", "try", "finally", "super", "this",
}

JAVA_KEYWORDS = {
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char",
    "class", "const", "continue", "default", "do", "double", "else", "enum",
    "extends", "final", "finally", "float", "for", "goto", "if", "implements",
    "import", "instanceof", "int", "interface", "long", "native", "new",
    "package", "private", "protected", "public", "return", "short", "static",
    "strictfp", "super", "switch", "synchronized", "this", "throw", "throws",
    "transient", "try", "void", "volatile", "while", "true", "false", "null",
}

SIMPLE = "simple"
BLOCK_OPEN = "block-open"
BLOCK_CLOSE = "block-close"
CONTROL_HEADER = "control-header"


class ParseError(Exception):
    """Structural parse failure, carrying file and line."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
        self.message = message


class SourceLookupError(LookupError):
    """A structural query named something the parsed tree does not contain."""


@dataclass(frozen=True)
class Diagnostic:
    level: str
    path: str
    line: int
    message: str

    def __str__(self) -> str:
        return f"{self.level} {self.path}:{self.line} {self.message}"


@dataclass(frozen=True)
class MethodRef:
    qualified_class: str
    name: str
    arity: int

    def to_dict(self) -> Dict[str, object]:
        return {
            "qualified_class": self.qualified_class,
            "name": self.name,
            "arity": self.arity,
        }

    @staticmethod
    def from_dict(d: Dict[str, object]) -> "MethodRef":
        return MethodRef(str(d["qualified_class"]), str(d["name"]), int(d["arity"]))

    def __str__(self) -> str:
        return f"{self.qualified_class}.{self.name}/{self.arity}"


@dataclass(frozen=True)
class Statement:
    raw: str
    normalized: str
    kind: str
    depth: int
    index: int


@dataclass(frozen=True)
class FieldDecl:
    modifiers: Tuple[str, ...]
    type_text: str
    name: str


@dataclass
class MethodDecl:
    name: str
    modifiers: Set[str]
    return_type: str
    params: List[Tuple[str, str]]  # (type text, name)
    body: List[Statement]
    span: Tuple[int, int]
    owner: str

    @property
    def arity(self) -> int:
        return len(self.params)

    @property
    def ref(self) -> MethodRef:
        return MethodRef(self.owner, self.name, self.arity)

    def signature(self) -> str:
        params = ", ".join(f"{t} {n}" for t, n in self.params)
        head = " ".join(sorted(self.modifiers))
        ret = f"{self.return_type} " if self.return_type else ""
        return f"{head + ' ' if head else ''}{ret}{self.name}({params})".strip()


@dataclass
class ClassDecl:
    name: str
    qualified_name: str
    kind: str  # class | interface | enum
    extends: Optional[str]
    implements: List[str]
    fields: List[FieldDecl]
    methods: List[MethodDecl]
    span: Tuple[int, int]

    def signature(self) -> str:
        parts = [self.kind, self.name]
        if self.extends:
            parts += ["extends", self.extends]
        if self.implements:
            parts += ["implements", ", ".join(self.implements)]
        return " ".join(parts)


@dataclass
class SourceUnit:
    path: str
    package: str
    imports: List[str]
    classes: List[ClassDecl]
    text: str = field(default="", repr=False)


@dataclass
class StructureEntry:
    name: str
    kind: str  # dir | file
    children: List["StructureEntry"] = field(default_factory=list)


@dataclass
class ProjectStructure:
    root: str
    entries: List[StructureEntry]
    root_path: str = ""

    def render(self) -> str:
        lines = [self.root + "/"]

        def walk(entries: List[StructureEntry], indent: int) -> None:
            for e in entries:
                suffix = "/" if e.kind == "dir" else ""
                lines.append("  " * indent + e.name + suffix)
                walk(e.children, indent + 1)

        walk(self.entries, 1)
        return "\n".join(lines)

    def paths(self) -> List[str]:
        out: List[str] = []

        def walk(entries: List[StructureEntry], prefix: str) -> None:
            for e in entries:
                p = f"{prefix}{e.name}"
                if e.kind == "file":
                    out.append(p)
                else:
                    walk(e.children, p + "/")

        walk(self.entries, "")
        return out


@dataclass
class ParsedTree:
    units: List[SourceUnit]
    structure: ProjectStructure
    diagnostics: List[Diagnostic] = field(default_factory=list)

    def __iter__(self) -> Iterator[object]:
        # Allows `units, structure = parse_tree(...)`.
        return iter((self.units, self.structure))


@dataclass
class CallGraph:
    edges: Set[Tuple[MethodRef, MethodRef]]
    methods: Set[MethodRef] = field(default_factory=set)
    diagnostics: List[Diagnostic] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Lexical masking
# ---------------------------------------------------------------------------

def mask_code(text: str) -> str:
    """Blank out comments and string/char literal bodies, preserving offsets.

    Every replaced character becomes a space except newlines, which survive so
    line arithmetic on the masked text matches the original.
    """
    out = list(text)
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                out[i] = " "
                i += 1
        elif c == "/" and i + 1 < n and text[i + 1] == "*":
            out[i] = out[i + 1] = " "
            i += 2
            while i < n and not (text[i] == "*" and i + 1 < n and text[i + 1] == "/"):
                if text[i] != "\n":
                    out[i] = " "
                i += 1
            if i < n:
                out[i] = out[i + 1] = " "
                i += 2
        elif c == '"' or c == "'":
            quote = c
            i += 1
            while i < n and text[i] != quote:
                if text[i] == "\\" and i + 1 < n:
                    out[i] = out[i + 1] = " "
                    i += 2
                    continue
                if text[i] != "\n":
                    out[i] = " "
                i += 1
            i += 1  # closing quote (or EOF on unterminated literal)
        else:
            i += 1
    return "".join(out)


def _strip_comments(raw: str) -> str:
    """Remove comments from one statement, string-aware, comment -> space."""
    out: List[str] = []
    i, n = 0, len(raw)
    while i < n:
        c = raw[i]
        if c == "/" and i + 1 < n and raw[i + 1] == "/":
            out.append(" ")
            while i < n and raw[i] != "\n":
                i += 1
        elif c == "/" and i + 1 < n and raw[i + 1] == "*":
            out.append(" ")
            i += 2
            while i < n and not (raw[i] == "*" and i + 1 < n and raw[i + 1] == "/"):
                i += 1
            i += 2
        elif c == '"' or c == "'":
            quote = c
            out.append(c)
            i += 1
            while i < n and raw[i] != quote:
                if raw[i] == "\\" and i + 1 < n:
                    out.append(raw[i])
                    out.append(raw[i + 1])
                    i += 2
                    continue
                out.append(raw[i])
                i += 1
            if i < n:
                out.append(quote)
                i += 1
        else:
            out.append(c)
            i += 1
    return "".join(out)


def normalize_statement(raw: str) -> str:
    """Canonical statement text: comments gone, whitespace collapsed,
    no space before the trailing semicolon. Idempotent by construction."""
    text = _strip_comments(raw)
    out: List[str] = []
    i, n = 0, len(text)
    pending_space = False
    in_quote = ""
    while i < n:
        c = text[i]
        if in_quote:
            out.append(c)
            if c == "\\" and i + 1 < n:
                out.append(text[i + 1])
                i += 2
                continue
            if c == in_quote:
                in_quote = ""
            i += 1
            continue
        if c in ' \t\r\n':
            pending_space = True
            i += 1
            continue
        if pending_space and out and c != ";":
            out.append(" ")
        pending_space = False
        out.append(c)
        if c == '"' or c == "'":
            in_quote = c
        i += 1
    return "".join(out).strip()


# ---------------------------------------------------------------------------
# Statement segmentation
# ---------------------------------------------------------------------------

def segment_statements(raw_body: str, masked_body: Optional[str] = None) -> List[Statement]:
    """Split a method body into statements on ``;`` / ``{`` / ``}``.

    Semicolons inside parentheses (for-headers) do not split. Kinds:
    text ending in ``{`` is a control-header, a bare ``{`` is a block-open,
    ``}`` a block-close; a block-close's depth equals its opener's depth.
    """
    if masked_body is None:
        masked_body = mask_code(raw_body)
    statements: List[Statement] = []
    depth = 0
    paren = 0
    start = 0

    def emit(end: int, kind: str, at_depth: int) -> None:
        raw = raw_body[start:end].strip()
        if not raw:
            return
        normalized = normalize_statement(raw)
        if not normalized:
            return  # comment- or whitespace-only run, not a statement
        statements.append(Statement(
            raw=raw,
            normalized=normalized,
            kind=kind,
            depth=at_depth,
            index=len(statements),
        ))

    i, n = 0, len(masked_body)
    while i < n:
        c = masked_body[i]
        if c == "(":
            paren += 1
        elif c == ")":
            paren = max(0, paren - 1)
        elif c == ";" and paren == 0:
            emit(i + 1, SIMPLE, depth)
            start = i + 1
        elif c == "{":
            header = raw_body[start:i].strip()
            kind = CONTROL_HEADER if header else BLOCK_OPEN
            emit(i + 1, kind, depth)
            start = i + 1
            depth += 1
        elif c == "}":
            emit(i, SIMPLE, depth)  # tolerate an unterminated fragment
            depth = max(0, depth - 1)
            start = i
            emit(i + 1, BLOCK_CLOSE, depth)
            start = i + 1
        i += 1
    emit(n, SIMPLE, depth)
    return statements


# ---------------------------------------------------------------------------
# Declaration parsing
# ---------------------------------------------------------------------------

def _line_of(text: str, offset: int) -> int:
    return text.count("\n", 0, offset) + 1


def _check_balance(path: str, masked: str) -> None:
    stack: List[int] = []
    for i, c in enumerate(masked):
        if c == "{":
            stack.append(i)
        elif c == "}":
            if not stack:
                raise ParseError(path, _line_of(masked, i), "unbalanced '}'")
            stack.pop()
    if stack:
        raise ParseError(path, _line_of(masked, stack[-1]), "unbalanced '{'")


def _matching_brace(masked: str, open_idx: int) -> int:
    depth = 0
    for i in range(open_idx, len(masked)):
        if masked[i] == "{":
            depth += 1
        elif masked[i] == "}":
            depth -= 1
            if depth == 0:
                return i
    raise ValueError("no matching brace")


def _split_top_level(text: str, sep: str = ",") -> List[str]:
    parts: List[str] = []
    depth = 0
    current: List[str] = []
    for c in text:
        if c in "(<[":
            depth += 1
        elif c in ")>]":
            depth -= 1
        if c == sep and depth == 0:
            parts.append("".join(current).strip())
            current = []
        else:
            current.append(c)
    tail = "".join(current).strip()
    if tail:
        parts.append(tail)
    return parts


def _strip_annotations(header: str) -> str:
    out: List[str] = []
    i, n = 0, len(header)
    while i < n:
        if header[i] == "@":
            i += 1
            while i < n and (header[i].isalnum() or header[i] in "_.$"):
                i += 1
            while i < n and header[i].isspace():
                i += 1
            if i < n and header[i] == "(":
                depth = 0
                while i < n:
                    if header[i] == "(":
                        depth += 1
                    elif header[i] == ")":
                        depth -= 1
                        if depth == 0:
                            i += 1
                            break
                    i += 1
        else:
            out.append(header[i])
            i += 1
    return "".join(out)


def _parse_params(param_text: str) -> List[Tuple[str, str]]:
    params: List[Tuple[str, str]] = []
    for part in _split_top_level(param_text):
        part = _strip_annotations(part).strip()
        if not part:
            continue
        tokens = part.split()
        if tokens and tokens[0] == "final":
            tokens = tokens[1:]
        if len(tokens) < 2:
            # Untyped fragment; keep the name so arity stays right.
            params.append(("", tokens[0] if tokens else ""))
            continue
        name = tokens[-1]
        type_text = " ".join(tokens[:-1])
        if name.startswith("..."):
            type_text += "..."
            name = name[3:]
        params.append((type_text, name))
    return params


def _parse_method_header(header: str, class_name: str) -> Optional[Tuple[Set[str], str, str, List[Tuple[str, str]]]]:
    """Return (modifiers, return type, name, params) or None if not a method."""
    header = _strip_annotations(header).strip()
    if not header or "=" in header.split("(")[0]:
        return None
    # First '(' at angle-bracket depth zero marks the parameter list.
    depth = 0
    open_idx = -1
    for i, c in enumerate(header):
        if c == "<":
            depth += 1
        elif c == ">":
            depth -= 1
        elif c == "(" and depth == 0:
            open_idx = i
            break
    if open_idx < 0:
        return None
    close_idx = header.rfind(")")
    if close_idx < open_idx:
        return None
    before = header[:open_idx].rstrip()
    tokens = before.replace("\n", " ").split()
    if not tokens:
        return None
    name = tokens[-1]
    if not (name[0].isalpha() or name[0] in "_$"):
        return None
    if name in JAVA_KEYWORDS:
        return None
    rest = tokens[:-1]
    modifiers = set()
    while rest and rest[0] in MODIFIER_KEYWORDS:
        modifiers.add(rest.pop(0))
    return_type = " ".join(rest)
    if not return_type and name != class_name:
        return None  # neither a typed method nor a constructor
    params = _parse_params(header[open_idx + 1:close_idx])
    return modifiers, return_type, name, params


def _parse_field(header: str) -> List[FieldDecl]:
    header = _strip_annotations(header).strip().rstrip(";").strip()
    if not header or "(" in header.split("=")[0]:
        return []
    decl = header.split("=")[0].strip()
    tokens = decl.split()
    modifiers: List[str] = []
    while tokens and tokens[0] in MODIFIER_KEYWORDS:
        modifiers.append(tokens.pop(0))
    if len(tokens) < 2:
        return []
    names_part = " ".join(tokens[1:])
    type_text = tokens[0]
    fields = []
    for declarator in _split_top_level(names_part):
        name = declarator.split("=")[0].strip().rstrip("[]").strip()
        if name:
            fields.append(FieldDecl(tuple(modifiers), type_text, name))
    return fields


_CLASS_KEYWORDS = ("class", "interface", "enum")


def _find_class_decls(masked: str, lo: int, hi: int) -> List[Tuple[str, int, int, int]]:
    """Find (kind, keyword offset, body-open offset, body-close offset) for
    declarations at the top nesting level of masked[lo:hi]."""
    decls: List[Tuple[str, int, int, int]] = []
    i = lo
    while i < hi:
        c = masked[i]
        if c == "{":
            i = _matching_brace(masked, i) + 1
            continue
        if c.isalpha():
            j = i
            while j < hi and (masked[j].isalnum() or masked[j] in "_$"):
                j += 1
            word = masked[i:j]
            boundary_ok = i == 0 or not (masked[i - 1].isalnum() or masked[i - 1] in "_$")
            if word in _CLASS_KEYWORDS and boundary_ok:
                open_idx = masked.find("{", j)
                if open_idx == -1 or open_idx >= hi:
                    i = j
                    continue
                close_idx = _matching_brace(masked, open_idx)
                decls.append((word, i, open_idx, close_idx))
                i = close_idx + 1
                continue
            i = j
            continue
        i += 1
    return decls


def _decl_start(masked: str, keyword_idx: int) -> int:
    """Back up from the class keyword over modifiers on the same declaration."""
    line_start = masked.rfind("\n", 0, keyword_idx) + 1
    prefix = masked[line_start:keyword_idx]
    tokens = prefix.split()
    if all(t in MODIFIER_KEYWORDS for t in tokens):
        return line_start
    return keyword_idx


def _parse_class(
    text: str,
    masked: str,
    kind: str,
    kw_idx: int,
    open_idx: int,
    close_idx: int,
    package: str,
    outer: str,
    out: List[ClassDecl],
) -> None:
    header = masked[kw_idx:open_idx]
    tokens = header.split()
    name = tokens[1] if len(tokens) > 1 else ""
    # Drop any generic parameters on the declared name.
    name = name.split("<")[0]
    qualified = f"{outer}.{name}" if outer else (f"{package}.{name}" if package else name)

    extends: Optional[str] = None
    implements: List[str] = []
    if "extends" in tokens:
        idx = tokens.index("extends")
        stop = tokens.index("implements") if "implements" in tokens else len(tokens)
        extends = " ".join(tokens[idx + 1:stop]).rstrip(",") or None
    if "implements" in tokens:
        idx = tokens.index("implements")
        implements = [t.strip() for t in " ".join(tokens[idx + 1:]).split(",") if t.strip()]

    decl_start = _decl_start(masked, kw_idx)
    span = (_line_of(masked, decl_start), _line_of(masked, close_idx))

    methods: List[MethodDecl] = []
    fields: List[FieldDecl] = []

    nested = _find_class_decls(masked, open_idx + 1, close_idx)
    nested_ranges = [(k, o, c) for (_, k, o, c) in nested]

    def in_nested(pos: int) -> bool:
        return any(o <= pos <= c for (_, o, c) in nested_ranges)

    i = open_idx + 1
    seg_start = i
    while i < close_idx:
        c = masked[i]
        if c == ";":
            header_text = masked[seg_start:i].strip()
            if header_text and not in_nested(i):
                sig = _parse_method_header(header_text, name)
                if sig is not None:
                    mods, ret, mname, params = sig
                    methods.append(MethodDecl(
                        name=mname, modifiers=mods, return_type=ret, params=params,
                        body=[],
                        span=(_line_of(masked, seg_start + _leading_ws(masked, seg_start, i)),
                              _line_of(masked, i)),
                        owner=qualified,
                    ))
                else:
                    fields.extend(_parse_field(header_text))
            seg_start = i + 1
        elif c == "{":
            body_close = _matching_brace(masked, i)
            header_text = masked[seg_start:i].strip()
            if not in_nested(i):
                sig = _parse_method_header(header_text, name) if header_text else None
                if sig is not None:
                    mods, ret, mname, params = sig
                    raw_body = text[i + 1:body_close]
                    masked_body = masked[i + 1:body_close]
                    methods.append(MethodDecl(
                        name=mname, modifiers=mods, return_type=ret, params=params,
                        body=segment_statements(raw_body, masked_body),
                        span=(_line_of(masked, seg_start + _leading_ws(masked, seg_start, i)),
                              _line_of(masked, body_close)),
                        owner=qualified,
                    ))
            i = body_close + 1
            seg_start = i
            continue
        i += 1

    out.append(ClassDecl(
        name=name, qualified_name=qualified, kind=kind, extends=extends,
        implements=implements, fields=fields, methods=methods, span=span,
    ))
    for (nkind, nk, no, nc) in nested:
        _parse_class(text, masked, nkind, nk, no, nc, package, qualified, out)


def _leading_ws(masked: str, start: int, end: int) -> int:
    i = start
    while i < end and masked[i].isspace():
        i += 1
    return i - start


def parse_source(path: str, text: str) -> SourceUnit:
    """Parse one file's text. Raises ParseError on unbalanced braces."""
    masked = mask_code(text)
    _check_balance(path, masked)

    package = ""
    imports: List[str] = []
    for line in masked.splitlines():
        stripped = line.strip()
        if stripped.startswith("package ") and stripped.endswith(";"):
            package = stripped[len("package "):-1].strip()
        elif stripped.startswith("import ") and stripped.endswith(";"):
            imp = stripped[len("import "):-1].strip()
            if imp.startswith("static "):
                imp = imp[len("static "):].strip()
            imports.append(imp)

    classes: List[ClassDecl] = []
    for (kind, kw, op, cl) in _find_class_decls(masked, 0, len(masked)):
        _parse_class(text, masked, kind, kw, op, cl, package, "", classes)
    return SourceUnit(path=path, package=package, imports=imports, classes=classes, text=text)


def _scan_structure(root_dir: str) -> List[StructureEntry]:
    entries: List[StructureEntry] = []
    try:
        names = sorted(os.listdir(root_dir))
    except OSError:
        return entries
    for name in names:
        if name.startswith("."):
            continue
        full = os.path.join(root_dir, name)
        if os.path.isdir(full):
            entries.append(StructureEntry(name, "dir", _scan_structure(full)))
        else:
            entries.append(StructureEntry(name, "file"))
    return entries


def parse_tree(root_dir: str, strict: bool = True) -> ParsedTree:
    """Parse every .java file below root_dir.

    With strict=True (default) the first malformed file raises ParseError; with
    strict=False it becomes an ERROR diagnostic and the file is skipped.
    Diagnostics are echoed to stderr either way.
    """
    if not os.path.isdir(root_dir):
        raise OSError(f"not a readable directory: {root_dir}")
    root_dir = os.path.abspath(root_dir)
    units: List[SourceUnit] = []
    diagnostics: List[Diagnostic] = []
    for dirpath, dirnames, filenames in os.walk(root_dir):
        dirnames[:] = sorted(d for d in dirnames if not d.startswith("."))
        for fname in sorted(filenames):
            if not fname.endswith(".java"):
                continue
            full = os.path.join(dirpath, fname)
            rel = os.path.relpath(full, root_dir)
            try:
                with open(full, "r", encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise OSError(f"unreadable file: {full}: {exc}") from exc
            try:
                units.append(parse_source(rel, text))
            except ParseError as exc:
                if strict:
                    raise
                diagnostics.append(Diagnostic("ERROR", rel, exc.line, exc.message))
    structure = ProjectStructure(
        root=os.path.basename(root_dir.rstrip(os.sep)) or root_dir,
        entries=_scan_structure(root_dir),
        root_path=root_dir,
    )
    for diag in diagnostics:
        print(str(diag), file=sys.stderr)
    return ParsedTree(units=units, structure=structure, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# Structural queries
# ---------------------------------------------------------------------------

def iter_methods(units: Iterable[SourceUnit]) -> Iterator[MethodDecl]:
    for unit in units:
        for cls in unit.classes:
            for method in cls.methods:
                yield method


def resolve_method(units: Iterable[SourceUnit], ref: MethodRef) -> MethodDecl:
    matches = [m for m in iter_methods(units)
               if m.owner == ref.qualified_class and m.name == ref.name and m.arity == ref.arity]
    if not matches:
        raise SourceLookupError(f"method not found: {ref}")
    if len(matches) > 1:
        raise SourceLookupError(f"ambiguous method: {ref}")
    return matches[0]


def find_class(units: Iterable[SourceUnit], qualified_class: str) -> Tuple[SourceUnit, ClassDecl]:
    for unit in units:
        for cls in unit.classes:
            if cls.qualified_name == qualified_class or cls.name == qualified_class:
                return unit, cls
    raise SourceLookupError(f"class not found: {qualified_class}")


def class_content(units: Iterable[SourceUnit], qualified_class: str) -> str:
    unit, cls = find_class(units, qualified_class)
    lines = unit.text.splitlines()
    start, end = cls.span
    return "\n".join(lines[start - 1:end])


def method_text(units: Iterable[SourceUnit], ref: MethodRef) -> str:
    method = resolve_method(units, ref)
    unit, _ = find_class(units, ref.qualified_class)
    lines = unit.text.splitlines()
    start, end = method.span
    return "\n".join(lines[start - 1:end])


def file_content(structure: ProjectStructure, path: str) -> str:
    full = os.path.join(structure.root_path, path)
    if not os.path.isfile(full):
        raise SourceLookupError(f"file not found: {path}")
    with open(full, "r", encoding="utf-8") as fh:
        return fh.read()


# ---------------------------------------------------------------------------
# Call graph
# ---------------------------------------------------------------------------

def _count_args(masked: str, open_idx: int) -> Optional[int]:
    depth = 0
    commas = 0
    content = False
    for i in range(open_idx, len(masked)):
        c = masked[i]
        if c in "([":
            depth += 1
        elif c in ")]":
            depth -= 1
            if depth == 0:
                return 0 if not content else commas + 1
        elif depth == 1:
            if c == ",":
                commas += 1
            elif not c.isspace():
                content = True
    return None


def _find_invocations(body_raw: str) -> List[Tuple[Optional[str], str, int]]:
    """Yield (qualifier or None, name, arg count) for each call token ``g(``."""
    masked = mask_code(body_raw)
    calls: List[Tuple[Optional[str], str, int]] = []
    i, n = 0, len(masked)
    while i < n:
        c = masked[i]
        if c.isalpha() or c in "_$":
            j = i
            while j < n and (masked[j].isalnum() or masked[j] in "_$"):
                j += 1
            word = masked[i:j]
            k = j
            while k < n and masked[k].isspace():
                k += 1
            if k < n and masked[k] == "(" and word not in NON_CALL_KEYWORDS:
                # Reject constructor calls: previous token is `new`.
                back = masked[:i].rstrip()
                prev_word = ""
                m = len(back)
                while m > 0 and (back[m - 1].isalnum() or back[m - 1] in "_$"):
                    m -= 1
                if back[m:]:
                    prev_word = back[m:]
                qualifier = None
                if back.endswith("."):
                    q_end = len(back) - 1
                    q_start = q_end
                    while q_start > 0 and (back[q_start - 1].isalnum() or back[q_start - 1] in "_$."):
                        q_start -= 1
                    qualifier = back[q_start:q_end] or None
                if prev_word != "new":
                    argc = _count_args(masked, k)
                    if argc is not None:
                        calls.append((qualifier, word, argc))
            i = j
        else:
            i += 1
    return calls


def build_call_graph(units: List[SourceUnit]) -> CallGraph:
    by_name_arity: Dict[Tuple[str, int], List[MethodDecl]] = {}
    class_names: Dict[str, str] = {}
    for unit in units:
        for cls in unit.classes:
            class_names[cls.name] = cls.qualified_name
            class_names[cls.qualified_name] = cls.qualified_name
    for m in iter_methods(units):
        by_name_arity.setdefault((m.name, m.arity), []).append(m)

    edges: Set[Tuple[MethodRef, MethodRef]] = set()
    diagnostics: List[Diagnostic] = []
    unit_of: Dict[str, SourceUnit] = {}
    for unit in units:
        for cls in unit.classes:
            unit_of[cls.qualified_name] = unit

    for caller in iter_methods(units):
        body_raw = "\n".join(s.raw for s in caller.body)
        if not body_raw:
            continue
        for qualifier, name, argc in _find_invocations(body_raw):
            candidates = by_name_arity.get((name, argc), [])
            if not candidates:
                continue
            target: Optional[MethodDecl] = None
            if qualifier and qualifier in class_names:
                owner = class_names[qualifier]
                scoped = [m for m in candidates if m.owner == owner]
                if len(scoped) == 1:
                    target = scoped[0]
            elif qualifier == "this":
                scoped = [m for m in candidates if m.owner == caller.owner]
                if len(scoped) == 1:
                    target = scoped[0]
            else:
                local = [m for m in candidates if m.owner == caller.owner]
                if len(local) == 1:
                    target = local[0]
                elif not local:
                    if len(candidates) == 1:
                        target = candidates[0]
                    else:
                        unit = unit_of.get(caller.owner)
                        path = unit.path if unit else "?"
                        diagnostics.append(Diagnostic(
                            "WARN", path, caller.span[0],
                            f"ambiguous call {name}/{argc} from {caller.ref}; edge omitted"))
            if target is not None:
                edges.add((caller.ref, target.ref))
    return CallGraph(
        edges=edges,
        methods={m.ref for m in iter_methods(units)},
        diagnostics=diagnostics,
    )


def _sorted_refs(refs: Iterable[MethodRef]) -> List[MethodRef]:
    return sorted(refs, key=lambda r: (r.qualified_class, r.name, r.arity))


def direct_callers(graph: CallGraph, m: MethodRef) -> List[MethodRef]:
    if m not in graph.methods:
        raise SourceLookupError(f"method not in graph: {m}")
    return _sorted_refs({a for (a, b) in graph.edges if b == m})


def direct_callees(graph: CallGraph, m: MethodRef) -> List[MethodRef]:
    if m not in graph.methods:
        raise SourceLookupError(f"method not in graph: {m}")
    return _sorted_refs({b for (a, b) in graph.edges if a == m})
