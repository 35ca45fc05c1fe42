"""Detection of the six method-level refactoring types between two source trees.

Detection runs at statement granularity over normalized statement texts. Rules
fire in a fixed order (Extract variants, Inline variants, Move variants) and
each matched instance claims its methods so one physical change is never
classified twice. Purity subtracts instance mechanics from the tree diff and
reports whatever edits remain.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from .source_model import (
    MethodDecl,
    MethodRef,
    ParsedTree,
    SourceUnit,
    Statement,
    _find_invocations,
    _split_top_level,
    iter_methods,
)


class RefactoringType(Enum):
    EXTRACT_METHOD = "ExtractMethod"
    INLINE_METHOD = "InlineMethod"
    MOVE_METHOD = "MoveMethod"
    EXTRACT_AND_MOVE_METHOD = "ExtractAndMoveMethod"
    MOVE_AND_INLINE_METHOD = "MoveAndInlineMethod"
    MOVE_AND_RENAME_METHOD = "MoveAndRenameMethod"

    @classmethod
    def from_text(cls, text: str) -> "RefactoringType":
        squashed = re.sub(r"[^a-z]", "", text.lower())
        for member in cls:
            if re.sub(r"[^a-z]", "", member.value.lower()) == squashed:
                return member
        raise ValueError(f"unknown refactoring type: {text!r}")

    def kebab(self) -> str:
        return re.sub(r"(?<!^)(?=[A-Z])", "-", self.value).lower()


@dataclass(frozen=True)
class MappingPair:
    before: Tuple[MethodRef, int]
    after: Tuple[MethodRef, int]

    def to_dict(self) -> Dict[str, object]:
        return {
            "before": {"method": self.before[0].to_dict(), "index": self.before[1]},
            "after": {"method": self.after[0].to_dict(), "index": self.after[1]},
        }


@dataclass
class RefactoringInstance:
    type: RefactoringType
    source: MethodRef
    targets: List[MethodRef]
    mappings: List[MappingPair]
    substitution: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "type": self.type.value,
            "source": self.source.to_dict(),
            "targets": [t.to_dict() for t in self.targets],
            "mappings": [m.to_dict() for m in self.mappings],
            "substitution": dict(self.substitution),
        }


@dataclass(frozen=True)
class ResidualEdit:
    kind: str  # insertion | deletion | modification
    location: str
    detail: str

    def to_dict(self) -> Dict[str, str]:
        return {"kind": self.kind, "location": self.location, "detail": self.detail}


@dataclass
class PurityVerdict:
    pure: bool
    residual_edits: List[ResidualEdit]

    def to_dict(self) -> Dict[str, object]:
        return {
            "pure": self.pure,
            "residual_edits": [e.to_dict() for e in self.residual_edits],
        }


Tree = Union[ParsedTree, List[SourceUnit]]

_ANON = MethodRef("", "", 0)


def _units(tree: Tree) -> List[SourceUnit]:
    if isinstance(tree, ParsedTree):
        return tree.units
    return list(tree)


def _norm_texts(statements: Sequence[Union[Statement, str]]) -> List[str]:
    return [s.normalized if isinstance(s, Statement) else str(s) for s in statements]


def apply_substitution(text: str, substitution: Dict[str, str]) -> str:
    if not substitution:
        return text
    keys = sorted(substitution, key=len, reverse=True)
    pattern = re.compile(r"\b(" + "|".join(re.escape(k) for k in keys) + r")\b")
    return pattern.sub(lambda m: substitution[m.group(1)], text)


def lcs_pairs(before: Sequence[str], after: Sequence[str]) -> List[Tuple[int, int]]:
    """Longest common subsequence index pairs, earliest-index on ties."""
    nb, na = len(before), len(after)
    table = [[0] * (na + 1) for _ in range(nb + 1)]
    for i in range(nb - 1, -1, -1):
        for j in range(na - 1, -1, -1):
            if before[i] == after[j]:
                table[i][j] = table[i + 1][j + 1] + 1
            else:
                table[i][j] = max(table[i + 1][j], table[i][j + 1])
    pairs: List[Tuple[int, int]] = []
    i = j = 0
    while i < nb and j < na:
        if before[i] == after[j] and table[i][j] == table[i + 1][j + 1] + 1:
            pairs.append((i, j))
            i += 1
            j += 1
        elif table[i + 1][j] >= table[i][j + 1]:
            i += 1
        else:
            j += 1
    return pairs


def match_statements(
    before: Sequence[Union[Statement, str]],
    after: Sequence[Union[Statement, str]],
    substitution: Optional[Dict[str, str]] = None,
    before_ref: MethodRef = _ANON,
    after_ref: MethodRef = _ANON,
) -> List[MappingPair]:
    """LCS match of normalized statements; substitution applies to the after side."""
    before_texts = _norm_texts(before)
    after_texts = [apply_substitution(t, substitution or {}) for t in _norm_texts(after)]
    return [
        MappingPair(before=(before_ref, i), after=(after_ref, j))
        for i, j in lcs_pairs(before_texts, after_texts)
    ]


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------

def _method_map(units: List[SourceUnit]) -> Dict[MethodRef, MethodDecl]:
    return {m.ref: m for m in iter_methods(units)}


def _body_of(m: MethodDecl) -> List[str]:
    return [s.normalized for s in m.body]


def _common_prefix(a: Sequence[str], b: Sequence[str]) -> int:
    p = 0
    while p < len(a) and p < len(b) and a[p] == b[p]:
        p += 1
    return p


def _common_suffix(a: Sequence[str], b: Sequence[str], prefix: int) -> int:
    s = 0
    while (s < len(a) - prefix and s < len(b) - prefix
           and a[len(a) - 1 - s] == b[len(b) - 1 - s]):
        s += 1
    return s


def _sole_invocation(statement_text: str, name: str, arity: int) -> bool:
    calls = _find_invocations(statement_text)
    return len(calls) == 1 and calls[0][1] == name and calls[0][2] == arity


def _call_arguments(statement_text: str, name: str) -> Optional[List[str]]:
    """Extract the argument texts of the call to `name` inside the statement."""
    match = re.search(r"\b" + re.escape(name) + r"\s*\(", statement_text)
    if not match:
        return None
    open_idx = match.end() - 1
    depth = 0
    for i in range(open_idx, len(statement_text)):
        c = statement_text[i]
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0:
                inner = statement_text[open_idx + 1:i]
                return _split_top_level(inner) if inner.strip() else []
    return None


def _substituted_body(method: MethodDecl, substitution: Dict[str, str]) -> List[str]:
    return [apply_substitution(t, substitution) for t in _body_of(method)]


def _span_mappings(
    before_ref: MethodRef, after_ref: MethodRef,
    before_len: int, after_len: int, prefix: int, suffix: int,
) -> List[MappingPair]:
    pairs = [
        MappingPair((before_ref, i), (after_ref, i)) for i in range(prefix)
    ]
    for k in range(suffix):
        pairs.append(MappingPair(
            (before_ref, before_len - suffix + k),
            (after_ref, after_len - suffix + k),
        ))
    return pairs


def _try_extract(
    b: MethodDecl, b_after: MethodDecl, new_methods: List[MethodDecl],
) -> Optional[RefactoringInstance]:
    old_body, new_body = _body_of(b), _body_of(b_after)
    prefix = _common_prefix(old_body, new_body)
    suffix = _common_suffix(old_body, new_body, prefix)
    middle_before = old_body[prefix:len(old_body) - suffix]
    middle_after = new_body[prefix:len(new_body) - suffix]
    if len(middle_after) != 1 or not middle_before:
        return None
    call_stmt = middle_after[0]
    for extracted in sorted(new_methods, key=lambda m: (m.owner, m.name)):
        if not _sole_invocation(call_stmt, extracted.name, extracted.arity):
            continue
        args = _call_arguments(call_stmt, extracted.name)
        if args is None or len(args) != extracted.arity:
            continue
        substitution = {p_name: arg for (_, p_name), arg in zip(extracted.params, args)}
        if _substituted_body(extracted, substitution) != middle_before:
            continue
        kind = (RefactoringType.EXTRACT_METHOD if extracted.owner == b.owner
                else RefactoringType.EXTRACT_AND_MOVE_METHOD)
        mappings = _span_mappings(b.ref, b_after.ref, len(old_body), len(new_body),
                                  prefix, suffix)
        mappings += [
            MappingPair((b.ref, prefix + i), (extracted.ref, i))
            for i in range(len(middle_before))
        ]
        return RefactoringInstance(
            type=kind, source=b.ref, targets=[b_after.ref, extracted.ref],
            mappings=mappings, substitution=substitution,
        )
    return None


def _try_inline(
    m: MethodDecl,
    before_methods: Dict[MethodRef, MethodDecl],
    after_methods: Dict[MethodRef, MethodDecl],
    claimed_before: Set[MethodRef],
    claimed_after: Set[MethodRef],
) -> Optional[RefactoringInstance]:
    for ref, caller in sorted(before_methods.items(), key=lambda kv: str(kv[0])):
        if ref == m.ref or ref in claimed_before or ref not in after_methods:
            continue
        caller_after = after_methods[ref]
        if caller_after.ref in claimed_after:
            continue
        old_body, new_body = _body_of(caller), _body_of(caller_after)
        if old_body == new_body:
            continue
        prefix = _common_prefix(old_body, new_body)
        suffix = _common_suffix(old_body, new_body, prefix)
        middle_before = old_body[prefix:len(old_body) - suffix]
        middle_after = new_body[prefix:len(new_body) - suffix]
        if len(middle_before) != 1:
            continue
        call_stmt = middle_before[0]
        if not _sole_invocation(call_stmt, m.name, m.arity):
            continue
        args = _call_arguments(call_stmt, m.name)
        if args is None or len(args) != m.arity:
            continue
        substitution = {p_name: arg for (_, p_name), arg in zip(m.params, args)}
        if _substituted_body(m, substitution) != middle_after:
            continue
        kind = (RefactoringType.INLINE_METHOD if m.owner == caller.owner
                else RefactoringType.MOVE_AND_INLINE_METHOD)
        mappings = _span_mappings(caller.ref, caller_after.ref,
                                  len(old_body), len(new_body), prefix, suffix)
        mappings += [
            MappingPair((m.ref, i), (caller_after.ref, prefix + i))
            for i in range(len(middle_after))
        ]
        return RefactoringInstance(
            type=kind, source=m.ref, targets=[caller_after.ref],
            mappings=mappings, substitution=substitution,
        )
    return None


def detect(before_tree: Tree, after_tree: Tree) -> List[RefactoringInstance]:
    """Classify the change between two parsed trees into refactoring instances."""
    before_units, after_units = _units(before_tree), _units(after_tree)
    before_methods = _method_map(before_units)
    after_methods = _method_map(after_units)

    new_refs = [r for r in after_methods if r not in before_methods]
    removed_refs = [r for r in before_methods if r not in after_methods]

    instances: List[RefactoringInstance] = []
    claimed_before: Set[MethodRef] = set()
    claimed_after: Set[MethodRef] = set()

    # Extract variants: a surviving method shrank, a new method holds the middle.
    for ref in sorted(before_methods, key=str):
        if ref in claimed_before or ref not in after_methods:
            continue
        b, b_after = before_methods[ref], after_methods[ref]
        if _body_of(b) == _body_of(b_after):
            continue
        candidates = [after_methods[r] for r in new_refs
                      if r not in claimed_after]
        inst = _try_extract(b, b_after, candidates)
        if inst is not None:
            instances.append(inst)
            claimed_before.add(ref)
            claimed_after.update(inst.targets)

    # Inline variants: a method vanished into one of its callers.
    for ref in sorted(removed_refs, key=str):
        if ref in claimed_before:
            continue
        inst = _try_inline(before_methods[ref], before_methods, after_methods,
                           claimed_before, claimed_after)
        if inst is not None:
            instances.append(inst)
            claimed_before.add(ref)
            claimed_before.add(MethodRef(inst.targets[0].qualified_class,
                                         inst.targets[0].name, inst.targets[0].arity))
            claimed_after.update(inst.targets)

    # Move variants: the same body shows up under another owner.
    for ref in sorted(removed_refs, key=str):
        if ref in claimed_before:
            continue
        m = before_methods[ref]
        body = _body_of(m)
        same_name = [after_methods[r] for r in new_refs
                     if r not in claimed_after and r.name == ref.name
                     and r.arity == ref.arity and r.qualified_class != ref.qualified_class]
        renamed = [after_methods[r] for r in new_refs
                   if r not in claimed_after and r.name != ref.name
                   and r.arity == ref.arity and r.qualified_class != ref.qualified_class]
        target: Optional[MethodDecl] = None
        kind: Optional[RefactoringType] = None
        for cand in sorted(same_name, key=lambda x: x.owner):
            if _body_of(cand) == body:
                target, kind = cand, RefactoringType.MOVE_METHOD
                break
        if target is None:
            for cand in sorted(renamed, key=lambda x: (x.owner, x.name)):
                if _body_of(cand) == body:
                    target, kind = cand, RefactoringType.MOVE_AND_RENAME_METHOD
                    break
        if target is None:
            continue
        mappings = [MappingPair((m.ref, i), (target.ref, i)) for i in range(len(body))]
        instances.append(RefactoringInstance(
            type=kind, source=m.ref, targets=[target.ref], mappings=mappings,
        ))
        claimed_before.add(ref)
        claimed_after.add(target.ref)

    return instances


def verify(before_tree: Tree, after_tree: Tree,
           expected: RefactoringType) -> Tuple[bool, str]:
    """True iff detect() finds an instance of exactly the expected type."""
    instances = detect(before_tree, after_tree)
    if not instances:
        return False, "no refactoring detected"
    lines = [f"{inst.type.value}: {inst.source} -> "
             + ", ".join(str(t) for t in inst.targets)
             for inst in instances]
    verified = any(inst.type is expected for inst in instances)
    return verified, "detected: " + "; ".join(lines)


def ast_diff(before_tree: Tree, after_tree: Tree) -> Set[MappingPair]:
    """Statement mappings across the whole tree: instance mappings plus
    identity/LCS alignment of methods untouched by any instance."""
    before_units, after_units = _units(before_tree), _units(after_tree)
    before_methods = _method_map(before_units)
    after_methods = _method_map(after_units)
    instances = detect(before_units, after_units)

    mapped: Set[MappingPair] = set()
    involved_before: Set[MethodRef] = set()
    involved_after: Set[MethodRef] = set()
    for inst in instances:
        mapped.update(inst.mappings)
        involved_before.add(inst.source)
        involved_after.update(inst.targets)
        if inst.type in (RefactoringType.INLINE_METHOD,
                         RefactoringType.MOVE_AND_INLINE_METHOD):
            involved_before.add(inst.targets[0])

    for ref, method in before_methods.items():
        if ref in involved_before or ref not in after_methods:
            continue
        after_method = after_methods[ref]
        if after_method.ref in involved_after:
            continue
        mapped.update(match_statements(method.body, after_method.body,
                                       before_ref=ref, after_ref=after_method.ref))
    return mapped


def purity(before_tree: Tree, after_tree: Tree,
           instances: List[RefactoringInstance]) -> PurityVerdict:
    """Subtract instance mechanics from the tree diff; pure iff nothing remains."""
    before_units, after_units = _units(before_tree), _units(after_tree)
    before_methods = _method_map(before_units)
    after_methods = _method_map(after_units)

    explained_before: Set[MethodRef] = set()
    explained_after: Set[MethodRef] = set()
    for inst in instances:
        if inst.source not in before_methods:
            raise ValueError(f"instance source {inst.source} not in before tree")
        for t in inst.targets:
            if t not in after_methods:
                raise ValueError(f"instance target {t} not in after tree")
        explained_before.add(inst.source)
        explained_after.update(inst.targets)
        if inst.type in (RefactoringType.INLINE_METHOD,
                         RefactoringType.MOVE_AND_INLINE_METHOD):
            caller_after = inst.targets[0]
            explained_before.add(caller_after)

    residual: List[ResidualEdit] = []

    for ref in sorted(set(before_methods) | set(after_methods), key=str):
        in_before = ref in before_methods
        in_after = ref in after_methods
        if in_before and in_after:
            if ref in explained_before or ref in explained_after:
                continue  # instance rules matched exactly; no slack inside
            old_body = _body_of(before_methods[ref])
            new_body = _body_of(after_methods[ref])
            if old_body == new_body:
                continue
            matched = lcs_pairs(old_body, new_body)
            hit_before = {i for i, _ in matched}
            hit_after = {j for _, j in matched}
            for i, text in enumerate(old_body):
                if i not in hit_before:
                    residual.append(ResidualEdit(
                        "deletion", f"{ref}#{i}", text))
            for j, text in enumerate(new_body):
                if j not in hit_after:
                    residual.append(ResidualEdit(
                        "insertion", f"{ref}#{j}", text))
        elif in_before and ref not in explained_before:
            residual.append(ResidualEdit("deletion", str(ref), "method removed"))
        elif in_after and ref not in explained_after:
            residual.append(ResidualEdit("insertion", str(ref), "method added"))

    _field_and_class_residual(before_units, after_units,
                              explained_before, explained_after, residual)
    _import_residual(before_units, after_units, instances, residual)

    residual.sort(key=lambda e: (e.location, e.kind, e.detail))
    return PurityVerdict(pure=not residual, residual_edits=residual)


def _field_and_class_residual(
    before_units: List[SourceUnit],
    after_units: List[SourceUnit],
    explained_before: Set[MethodRef],
    explained_after: Set[MethodRef],
    residual: List[ResidualEdit],
) -> None:
    def class_map(units: List[SourceUnit]):
        return {c.qualified_name: c for u in units for c in u.classes}

    before_classes = class_map(before_units)
    after_classes = class_map(after_units)

    for name in sorted(set(before_classes) | set(after_classes)):
        b_cls = before_classes.get(name)
        a_cls = after_classes.get(name)
        if b_cls is not None and a_cls is not None:
            b_fields = {(f.type_text, f.name) for f in b_cls.fields}
            a_fields = {(f.type_text, f.name) for f in a_cls.fields}
            for f in sorted(b_fields - a_fields):
                residual.append(ResidualEdit("deletion", name, f"field {f[1]} removed"))
            for f in sorted(a_fields - b_fields):
                residual.append(ResidualEdit("insertion", name, f"field {f[1]} added"))
        elif b_cls is not None:
            methods_ok = all(m.ref in explained_before for m in b_cls.methods)
            if not methods_ok or b_cls.fields:
                residual.append(ResidualEdit("deletion", name, "class removed"))
        else:
            methods_ok = all(m.ref in explained_after for m in a_cls.methods)
            if not methods_ok or a_cls.fields:
                residual.append(ResidualEdit("insertion", name, "class added"))


_MOVE_FAMILY = {
    RefactoringType.MOVE_METHOD,
    RefactoringType.MOVE_AND_RENAME_METHOD,
    RefactoringType.EXTRACT_AND_MOVE_METHOD,
    RefactoringType.MOVE_AND_INLINE_METHOD,
}


def _import_residual(
    before_units: List[SourceUnit],
    after_units: List[SourceUnit],
    instances: List[RefactoringInstance],
    residual: List[ResidualEdit],
) -> None:
    # Import churn is part of move mechanics; without a move it is an edit.
    if any(inst.type in _MOVE_FAMILY for inst in instances):
        return
    after_by_path = {u.path: u for u in after_units}
    for unit in before_units:
        other = after_by_path.get(unit.path)
        if other is None:
            continue
        removed = set(unit.imports) - set(other.imports)
        added = set(other.imports) - set(unit.imports)
        for imp in sorted(removed):
            residual.append(ResidualEdit("deletion", unit.path, f"import {imp} removed"))
        for imp in sorted(added):
            residual.append(ResidualEdit("insertion", unit.path, f"import {imp} added"))
