"""Scoring: CodeBLEU (statement variant), AST-diff precision/recall, tallies.

The CodeBLEU here is the classic four-component blend -- n-gram, keyword-
weighted n-gram, syntax match, dataflow match -- computed over the statement
model rather than a full AST, which keeps it consistent with the detector's
granularity. Reports label it "CodeBLEU (statement variant)".
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .refactoring_detect import MappingPair, RefactoringType
from .source_model import JAVA_KEYWORDS, _strip_comments, segment_statements

DEFAULT_WEIGHTS = (0.25, 0.25, 0.25, 0.25)
KEYWORD_WEIGHT = 5.0


class MetricsError(ValueError):
    """Input cannot be scored (e.g. empty token stream)."""


@dataclass
class CodeBleuScore:
    ngram: float
    weighted_ngram: float
    syntax_match: float
    dataflow_match: float
    total: float
    weights: Tuple[float, float, float, float]

    def to_dict(self) -> Dict[str, object]:
        return {
            "metric": "CodeBLEU (statement variant)",
            "ngram": self.ngram,
            "weighted_ngram": self.weighted_ngram,
            "syntax_match": self.syntax_match,
            "dataflow_match": self.dataflow_match,
            "total": self.total,
            "weights": list(self.weights),
        }


@dataclass
class AstDiffScore:
    tp: int
    tool_total: int
    ref_total: int
    precision: float
    recall: float

    def to_dict(self) -> Dict[str, object]:
        return {
            "tp": self.tp,
            "tool_total": self.tool_total,
            "ref_total": self.ref_total,
            "precision": self.precision,
            "recall": self.recall,
        }


@dataclass
class OutcomeRecord:
    compiled_and_tested: bool
    detector_verified: bool
    type: RefactoringType
    project: str
    code_bleu: Optional[float] = None
    ast_precision: Optional[float] = None
    ast_recall: Optional[float] = None

    @property
    def successful(self) -> bool:
        return self.compiled_and_tested and self.detector_verified


_TOKEN = re.compile(
    r"[A-Za-z_$][A-Za-z0-9_$]*"      # identifiers and keywords
    r"|\d+(?:\.\d+)?[fFlLdD]?"       # numeric literals
    r"|\"(?:\\.|[^\"\\])*\""         # string literals
    r"|'(?:\\.|[^'\\])*'"            # char literals
    r"|==|!=|<=|>=|&&|\|\||\+\+|--|->|::"
    r"|[-+*/%<>=!&|^~?:;,.(){}\[\]@]"
)


def code_tokens(text: str) -> List[str]:
    return _TOKEN.findall(_strip_comments(text))


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _ngram_precision(ref: Sequence[str], cand: Sequence[str], n: int) -> float:
    cand_grams = _ngrams(cand, n)
    total = sum(cand_grams.values())
    if total == 0:
        return 1.0
    ref_grams = _ngrams(ref, n)
    matched = sum(min(count, ref_grams[gram]) for gram, count in cand_grams.items())
    if matched == 0:
        return (matched + 1.0) / (total + 1.0)
    return matched / total


def _weighted_ngram_precision(ref: Sequence[str], cand: Sequence[str], n: int,
                              keywords: Set[str]) -> float:
    def weight(gram: Tuple[str, ...]) -> float:
        return KEYWORD_WEIGHT if any(tok in keywords for tok in gram) else 1.0

    cand_grams = _ngrams(cand, n)
    total = sum(weight(g) * c for g, c in cand_grams.items())
    if total == 0:
        return 1.0
    ref_grams = _ngrams(ref, n)
    matched = sum(weight(g) * min(c, ref_grams[g]) for g, c in cand_grams.items())
    if matched == 0:
        return (matched + 1.0) / (total + 1.0)
    return matched / total


def _brevity_penalty(ref_len: int, cand_len: int) -> float:
    if cand_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / cand_len)


def _geometric_mean(values: Sequence[float]) -> float:
    if any(v <= 0 for v in values):
        return 0.0
    return math.exp(sum(math.log(v) for v in values) / len(values))


def syntax_shapes(text: str) -> Counter:
    """Multiset of (statement kind, depth) shapes for the statement model."""
    return Counter((s.kind, s.depth) for s in segment_statements(text))


def _syntax_match(ref_text: str, cand_text: str) -> float:
    ref_shapes = syntax_shapes(ref_text)
    if not ref_shapes:
        return 1.0
    cand_shapes = syntax_shapes(cand_text)
    matched = sum(min(c, cand_shapes[shape]) for shape, c in ref_shapes.items())
    return matched / sum(ref_shapes.values())


_ASSIGN = re.compile(
    r"\b([A-Za-z_$][A-Za-z0-9_$]*)\s*(?:[-+*/%&|^]|<<|>>)?=(?![=])"
)
_WORD = re.compile(r"\b[A-Za-z_$][A-Za-z0-9_$]*\b")


def dataflow_pairs(text: str) -> Set[Tuple[str, str, str]]:
    """Def-use pairs: (identifier, defining statement, later using statement)."""
    statements = [s.normalized for s in segment_statements(text)]
    pairs: Set[Tuple[str, str, str]] = set()
    for i, stmt in enumerate(statements):
        for match in _ASSIGN.finditer(stmt):
            # Exclude comparison fragments like `a <= b` caught as `a <` + `= b`.
            ident = match.group(1)
            for later in statements[i + 1:]:
                if any(word == ident for word in _WORD.findall(later)):
                    pairs.add((ident, stmt, later))
    return pairs


def _dataflow_match(ref_text: str, cand_text: str) -> float:
    ref_pairs = dataflow_pairs(ref_text)
    if not ref_pairs:
        return 1.0
    cand_pairs = dataflow_pairs(cand_text)
    return len(ref_pairs & cand_pairs) / len(ref_pairs)


def code_bleu(
    reference: str,
    candidate: str,
    keywords: Optional[Set[str]] = None,
    weights: Tuple[float, float, float, float] = DEFAULT_WEIGHTS,
) -> CodeBleuScore:
    """Four-component CodeBLEU over code texts; weights must sum to 1."""
    if abs(sum(weights) - 1.0) > 1e-9:
        raise MetricsError(f"weights must sum to 1, got {weights}")
    if keywords is None:
        keywords = JAVA_KEYWORDS
    ref_tokens = code_tokens(reference)
    cand_tokens = code_tokens(candidate)
    if not ref_tokens or not cand_tokens:
        raise MetricsError("empty token stream")

    bp = _brevity_penalty(len(ref_tokens), len(cand_tokens))
    plain = [_ngram_precision(ref_tokens, cand_tokens, n) for n in range(1, 5)]
    weighted = [_weighted_ngram_precision(ref_tokens, cand_tokens, n, keywords)
                for n in range(1, 5)]
    ngram = bp * _geometric_mean(plain)
    weighted_ngram = bp * _geometric_mean(weighted)
    syntax = _syntax_match(reference, candidate)
    dataflow = _dataflow_match(reference, candidate)

    alpha, beta, gamma, delta = weights
    total = (alpha * ngram + beta * weighted_ngram
             + gamma * syntax + delta * dataflow)
    return CodeBleuScore(
        ngram=ngram, weighted_ngram=weighted_ngram, syntax_match=syntax,
        dataflow_match=dataflow, total=total, weights=weights,
    )


def ast_precision_recall(
    tool_mappings: Iterable[MappingPair],
    reference_mappings: Iterable[MappingPair],
) -> AstDiffScore:
    tool = set(tool_mappings)
    reference = set(reference_mappings)
    tp = len(tool & reference)
    precision = tp / len(tool) if tool else 0.0
    recall = tp / len(reference) if reference else 0.0
    return AstDiffScore(tp=tp, tool_total=len(tool), ref_total=len(reference),
                        precision=precision, recall=recall)


# ---------------------------------------------------------------------------
# Outcome accounting
# ---------------------------------------------------------------------------

def _bucket() -> Dict[str, object]:
    return {
        "total": 0,
        "compiled_and_tested": 0,
        "detector_verified": 0,
        "successful": 0,
        "avg_code_bleu": None,
        "avg_ast_precision": None,
        "avg_ast_recall": None,
    }


def _accumulate(bucket: Dict[str, object], records: List[OutcomeRecord]) -> None:
    bucket["total"] = len(records)
    bucket["compiled_and_tested"] = sum(1 for r in records if r.compiled_and_tested)
    bucket["detector_verified"] = sum(1 for r in records if r.detector_verified)
    bucket["successful"] = sum(1 for r in records if r.successful)
    for key, attr in (("avg_code_bleu", "code_bleu"),
                      ("avg_ast_precision", "ast_precision"),
                      ("avg_ast_recall", "ast_recall")):
        values = [getattr(r, attr) for r in records
                  if r.successful and getattr(r, attr) is not None]
        bucket[key] = (sum(values) / len(values)) if values else None


def tally(records: List[OutcomeRecord]) -> Dict[str, object]:
    """Totals and successful-only metric averages, overall / per project / per type."""
    result: Dict[str, object] = {
        "overall": _bucket(),
        "per_project": {},
        "per_type": {},
    }
    _accumulate(result["overall"], records)
    for project in sorted({r.project for r in records}):
        bucket = _bucket()
        _accumulate(bucket, [r for r in records if r.project == project])
        result["per_project"][project] = bucket
    for rtype in sorted({r.type for r in records}, key=lambda t: t.value):
        bucket = _bucket()
        _accumulate(bucket, [r for r in records if r.type is rtype])
        result["per_type"][rtype.value] = bucket
    return result


def render_table(tallied: Dict[str, object]) -> str:
    """Aligned text table over the tally: one row per project plus a total row."""
    headers = ["Project", "Total", "Compile&Test", "Verified", "Successful", "CodeBLEU", "P", "R"]
    rows = []

    def fmt(value: Optional[float]) -> str:
        return f"{value:.3f}" if value is not None else "-"

    def row_for(name: str, bucket: Dict[str, object]) -> List[str]:
        return [
            name,
            str(bucket["total"]),
            str(bucket["compiled_and_tested"]),
            str(bucket["detector_verified"]),
            str(bucket["successful"]),
            fmt(bucket["avg_code_bleu"]),
            fmt(bucket["avg_ast_precision"]),
            fmt(bucket["avg_ast_recall"]),
        ]

    for project, bucket in tallied["per_project"].items():
        rows.append(row_for(project, bucket))
    rows.append(row_for("TOTAL", tallied["overall"]))

    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
    return "\n".join(lines)
