"""Contextual retrieval store: BM25 + dense cosine ranking fused with RRF.

Each admitted record indexes the concatenation of its natural-language
description and its before-code. Queries are ranked sparsely (Okapi BM25,
k1 = 1.2, b = 0.75) and densely (cosine over a pluggable embedder; the
built-in fallback hashes token 3-grams into 256 buckets), and the two lists
are fused with Reciprocal Rank Fusion at k = 60.
"""

from __future__ import annotations

import json
import math
import os
import re
import struct
import sys
import zlib
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .llm_gateway import Backend, ChatMessage, CompletionRequest, complete
from .refactoring_detect import RefactoringType
from .source_model import MethodRef

BM25_K1 = 1.2
BM25_B = 0.75
RRF_K = 60
CANDIDATE_DEPTH = 50
EMBED_DIM = 256

STORE_MAGIC = b"MNTRIDX1"
STORE_VERSION = 1

DESCRIPTION_PROMPT_TAIL = (
    "Please give a short, succinct description to situate this code within "
    "the context to improve search retrieval of the code."
)


class IndexBuildError(ValueError):
    """Record set violates an index invariant (duplicate id, impure, no text)."""


class StoreFormatError(ValueError):
    """Persisted store bytes do not match the expected format."""


@dataclass
class RefactoringRecord:
    id: str
    type: RefactoringType
    before_code: str
    after_code: str
    description: str
    callers_callees: List[Tuple[MethodRef, str]] = field(default_factory=list)
    class_info: Tuple[str, str, str] = ("", "", "")
    provenance: Tuple[str, str] = ("", "")
    pure: bool = True

    def to_dict(self) -> Dict[str, object]:
        return {
            "id": self.id,
            "type": self.type.value,
            "before_code": self.before_code,
            "after_code": self.after_code,
            "description": self.description,
            "callers_callees": [
                {"method": ref.to_dict(), "body": body}
                for ref, body in self.callers_callees
            ],
            "class_info": list(self.class_info),
            "provenance": list(self.provenance),
            "pure": self.pure,
        }

    @staticmethod
    def from_dict(d: Dict[str, object]) -> "RefactoringRecord":
        return RefactoringRecord(
            id=str(d["id"]),
            type=RefactoringType.from_text(str(d["type"])),
            before_code=str(d.get("before_code", "")),
            after_code=str(d.get("after_code", "")),
            description=str(d.get("description", "")),
            callers_callees=[
                (MethodRef.from_dict(e["method"]), str(e.get("body", "")))
                for e in d.get("callers_callees", [])
            ],
            class_info=tuple(d.get("class_info", ["", "", ""]))[:3],
            provenance=tuple(d.get("provenance", ["", ""]))[:2],
            pure=bool(d.get("pure", True)),
        )


@dataclass(frozen=True)
class RankedEntry:
    record_id: str
    score: float
    rank: int


@dataclass
class RankedList:
    entries: List[RankedEntry]

    def ids(self) -> List[str]:
        return [e.record_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def _ranked(scored: Iterable[Tuple[str, float]], top_k: Optional[int]) -> RankedList:
    ordered = sorted(scored, key=lambda pair: (-pair[1], pair[0]))
    if top_k is not None:
        ordered = ordered[:top_k]
    return RankedList([
        RankedEntry(record_id=rid, score=score, rank=i + 1)
        for i, (rid, score) in enumerate(ordered)
    ])


# ---------------------------------------------------------------------------
# Tokenization and embedding
# ---------------------------------------------------------------------------

_ALNUM_RUN = re.compile(r"[A-Za-z0-9]+")
_CAMEL = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")


def tokenize(text: str) -> List[str]:
    """Lowercased tokens: split on non-alphanumerics, then on camelCase humps."""
    tokens: List[str] = []
    for run in _ALNUM_RUN.findall(text):
        for piece in _CAMEL.findall(run):
            if piece:
                tokens.append(piece.lower())
    return tokens


class HashedNgramEmbedder:
    """Deterministic offline embedder: token 3-grams hashed into `dim` buckets,
    bucket counts L2-normalized. Inputs with fewer than three tokens embed to
    the zero vector, which similarity search skips."""

    def __init__(self, dim: int = EMBED_DIM):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        vec = np.zeros(self.dim, dtype=np.float64)
        for i in range(len(tokens) - 2):
            gram = " ".join(tokens[i:i + 3])
            bucket = zlib.crc32(gram.encode("utf-8")) % self.dim
            vec[bucket] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec /= norm
        return vec


DEFAULT_EMBEDDER = HashedNgramEmbedder()


def embed(text: str, embedder=DEFAULT_EMBEDDER) -> np.ndarray:
    return embedder.embed(text)


# ---------------------------------------------------------------------------
# Index construction
# ---------------------------------------------------------------------------

@dataclass
class IndexedCorpus:
    records: List[RefactoringRecord]
    postings: Dict[str, List[Tuple[str, int]]]
    doc_lengths: Dict[str, int]
    avg_doc_length: float
    vectors: Dict[str, np.ndarray]
    embed_dim: int = EMBED_DIM

    def __post_init__(self) -> None:
        self.by_id = {r.id: r for r in self.records}

    def __len__(self) -> int:
        return len(self.records)


def indexed_text(record: RefactoringRecord) -> str:
    return record.description + "\n" + record.before_code


def build_index(records: Sequence[RefactoringRecord],
                embedder=DEFAULT_EMBEDDER) -> IndexedCorpus:
    seen = set()
    for record in records:
        if not record.pure:
            raise IndexBuildError(f"record {record.id}: rejected, not a pure refactoring")
        if not record.description.strip():
            raise IndexBuildError(f"record {record.id}: empty description")
        if record.id in seen:
            raise IndexBuildError(f"duplicate record id: {record.id}")
        seen.add(record.id)

    postings: Dict[str, List[Tuple[str, int]]] = {}
    doc_lengths: Dict[str, int] = {}
    vectors: Dict[str, np.ndarray] = {}
    for record in records:
        text = indexed_text(record)
        tokens = tokenize(text)
        doc_lengths[record.id] = len(tokens)
        counts: Dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((record.id, tf))
        vectors[record.id] = embedder.embed(text)
    for term in postings:
        postings[term].sort(key=lambda p: p[0])
    avg = (sum(doc_lengths.values()) / len(doc_lengths)) if doc_lengths else 0.0
    return IndexedCorpus(
        records=list(records), postings=postings, doc_lengths=doc_lengths,
        avg_doc_length=avg, vectors=vectors,
        embed_dim=getattr(embedder, "dim", EMBED_DIM),
    )


# ---------------------------------------------------------------------------
# Ranking
# ---------------------------------------------------------------------------

def bm25_rank(corpus: IndexedCorpus, query: str, top_k: int = CANDIDATE_DEPTH) -> RankedList:
    """Okapi BM25; repeated query tokens contribute once per occurrence.
    IDF = ln((N - df + 0.5)/(df + 0.5) + 1); docs sharing no term are absent."""
    n_docs = len(corpus.records)
    if n_docs == 0:
        return RankedList([])
    scores: Dict[str, float] = {}
    for token in tokenize(query):
        plist = corpus.postings.get(token)
        if not plist:
            continue
        df = len(plist)
        idf = math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)
        for record_id, tf in plist:
            dl = corpus.doc_lengths[record_id]
            denom_norm = 1.0 - BM25_B + BM25_B * (dl / corpus.avg_doc_length) \
                if corpus.avg_doc_length > 0 else 1.0
            part = idf * (tf * (BM25_K1 + 1.0)) / (tf + BM25_K1 * denom_norm)
            scores[record_id] = scores.get(record_id, 0.0) + part
    return _ranked(scores.items(), top_k)


def dense_rank(corpus: IndexedCorpus, query: str, top_k: int = CANDIDATE_DEPTH,
               embedder=None) -> RankedList:
    """Cosine similarity of the query embedding against every stored vector."""
    if not corpus.records:
        return RankedList([])
    if embedder is None:
        embedder = DEFAULT_EMBEDDER if corpus.embed_dim == EMBED_DIM \
            else HashedNgramEmbedder(corpus.embed_dim)
    qvec = embedder.embed(query)
    if float(np.linalg.norm(qvec)) == 0.0:
        print("WARN retrieval:0 zero query vector; dense ranking skipped",
              file=sys.stderr)
        return RankedList([])
    scored = []
    for record in corpus.records:
        vec = corpus.vectors[record.id]
        if float(np.linalg.norm(vec)) == 0.0:
            continue
        scored.append((record.id, float(np.dot(qvec, vec))))
    return _ranked(scored, top_k)


def rrf_fuse(lists: Sequence[RankedList], k_const: int = RRF_K) -> RankedList:
    """score(d) = sum over lists containing d of 1/(k_const + rank)."""
    if k_const < 1:
        raise ValueError("k_const must be >= 1")
    scores: Dict[str, float] = {}
    for ranked in lists:
        for entry in ranked.entries:
            scores[entry.record_id] = scores.get(entry.record_id, 0.0) \
                + 1.0 / (k_const + entry.rank)
    return _ranked(scores.items(), None)


def retrieve_similar(
    corpus: IndexedCorpus,
    query: Tuple[str, str, Sequence[str]],
    n: int = 3,
) -> List[RefactoringRecord]:
    """Top-n records for (code, description, caller/callee texts)."""
    code, description, caller_texts = query
    text = "\n".join([code, description, *caller_texts])
    sparse = bm25_rank(corpus, text, CANDIDATE_DEPTH)
    dense = dense_rank(corpus, text, CANDIDATE_DEPTH)
    fused = rrf_fuse([sparse, dense], RRF_K)
    return [corpus.by_id[e.record_id] for e in fused.entries[:n]]


# ---------------------------------------------------------------------------
# Description generation
# ---------------------------------------------------------------------------

def describe_for_index(
    code: str,
    callers_callees: Sequence[Tuple[MethodRef, str]],
    class_info: Tuple[str, str, str],
    llm: Backend,
) -> str:
    """One completion for the indexing description; stored verbatim."""
    if not code.strip():
        raise ValueError("cannot describe empty code")
    caller_part = "".join(
        f"\n// {ref}\n{body}" for ref, body in callers_callees
    )
    package, class_name, class_sig = class_info
    class_part = ""
    if any([package, class_name, class_sig]):
        class_part = f"\nPackage: {package}\nClass: {class_name}\nSignature: {class_sig}\n"
    prompt = f"{code}{caller_part}{class_part} {DESCRIPTION_PROMPT_TAIL}"
    response = complete(llm, CompletionRequest(
        messages=[ChatMessage(role="user", content=prompt)],
    ))
    return response.content


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _write_frame(out: List[bytes], data: bytes) -> None:
    out.append(struct.pack("<I", len(data)))
    out.append(data)


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise StoreFormatError(f"{self.path}: truncated")
        piece = self.blob[self.pos:self.pos + n]
        self.pos += n
        return piece

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def frame(self) -> bytes:
        return self.take(self.u32())


def _check_header(reader: _Reader) -> None:
    magic = reader.take(len(STORE_MAGIC))
    if magic != STORE_MAGIC:
        raise StoreFormatError(f"{reader.path}: bad magic {magic!r}")
    version = reader.u32()
    if version != STORE_VERSION:
        raise StoreFormatError(f"{reader.path}: unsupported version {version}")


def save_store(corpus: IndexedCorpus, store_dir: str) -> None:
    os.makedirs(store_dir, exist_ok=True)
    with open(os.path.join(store_dir, "records.jsonl"), "w", encoding="utf-8") as fh:
        for record in corpus.records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")

    ids = [r.id for r in corpus.records]
    id_index = {rid: i for i, rid in enumerate(ids)}

    out: List[bytes] = [STORE_MAGIC, struct.pack("<I", STORE_VERSION)]
    out.append(struct.pack("<I", len(ids)))
    for rid in ids:
        _write_frame(out, rid.encode("utf-8"))
    for rid in ids:
        out.append(struct.pack("<I", corpus.doc_lengths[rid]))
    out.append(struct.pack("<d", corpus.avg_doc_length))
    terms = sorted(corpus.postings)
    out.append(struct.pack("<I", len(terms)))
    for term in terms:
        _write_frame(out, term.encode("utf-8"))
        plist = corpus.postings[term]
        out.append(struct.pack("<I", len(plist)))
        for rid, tf in plist:
            out.append(struct.pack("<II", id_index[rid], tf))
    with open(os.path.join(store_dir, "postings.bin"), "wb") as fh:
        fh.write(b"".join(out))

    out = [STORE_MAGIC, struct.pack("<I", STORE_VERSION)]
    out.append(struct.pack("<I", len(ids)))
    for rid in ids:
        _write_frame(out, rid.encode("utf-8"))
    out.append(struct.pack("<I", corpus.embed_dim))
    for rid in ids:
        out.append(corpus.vectors[rid].astype("<f8").tobytes())
    with open(os.path.join(store_dir, "vectors.bin"), "wb") as fh:
        fh.write(b"".join(out))


def _read_store_file(store_dir: str, name: str) -> bytes:
    path = os.path.join(store_dir, name)
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except FileNotFoundError as exc:
        raise StoreFormatError(f"incomplete store: missing {name}") from exc


def load_records(store_dir: str) -> List[RefactoringRecord]:
    path = os.path.join(store_dir, "records.jsonl")
    if not os.path.isfile(path):
        raise StoreFormatError("incomplete store: missing records.jsonl")
    records: List[RefactoringRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(RefactoringRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise StoreFormatError(f"{path}:{line_no}: {exc}") from exc
    return records


def load_store(store_dir: str) -> IndexedCorpus:
    """Read records.jsonl plus the derived binary files back into a corpus."""
    records = load_records(store_dir)
    by_id = {r.id: r for r in records}

    reader = _Reader(_read_store_file(store_dir, "postings.bin"), "postings.bin")
    _check_header(reader)
    n_ids = reader.u32()
    ids = [reader.frame().decode("utf-8") for _ in range(n_ids)]
    for rid in ids:
        if rid not in by_id:
            raise StoreFormatError(f"postings.bin: unknown record id {rid}")
    doc_lengths = {rid: reader.u32() for rid in ids}
    avg = reader.f64()
    postings: Dict[str, List[Tuple[str, int]]] = {}
    n_terms = reader.u32()
    for _ in range(n_terms):
        term = reader.frame().decode("utf-8")
        count = reader.u32()
        plist = []
        for _ in range(count):
            idx, tf = struct.unpack("<II", reader.take(8))
            plist.append((ids[idx], tf))
        postings[term] = plist

    vreader = _Reader(_read_store_file(store_dir, "vectors.bin"), "vectors.bin")
    _check_header(vreader)
    n_vids = vreader.u32()
    vids = [vreader.frame().decode("utf-8") for _ in range(n_vids)]
    dim = vreader.u32()
    vectors: Dict[str, np.ndarray] = {}
    for rid in vids:
        raw = vreader.take(8 * dim)
        vectors[rid] = np.frombuffer(raw, dtype="<f8").astype(np.float64)

    return IndexedCorpus(
        records=records, postings=postings, doc_lengths=doc_lengths,
        avg_doc_length=avg, vectors=vectors, embed_dim=dim,
    )


def empty_corpus() -> IndexedCorpus:
    return build_index([])
