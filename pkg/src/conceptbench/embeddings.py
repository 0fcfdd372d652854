"""Precomputed name embeddings, exact k-NN search and threshold matching.

Vector files use a small fixed binary layout::

    b"EMB1" | u32 n | u32 d | n*d float32      (all little-endian, row-major)

and are paired with a names TSV (``row, concept_id, name_text, preferred``).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ontology import NameRecord

__all__ = [
    "EmbeddingError",
    "EmbeddingStore",
    "MatchResult",
    "knn",
    "load_embeddings",
    "match_names",
    "read_names",
    "read_vectors",
    "write_names",
    "write_vectors",
]

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")

DEFAULT_THRESHOLD = 0.6


class EmbeddingError(ValueError):
    pass


def write_vectors(path: str | Path, matrix: np.ndarray) -> None:
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise EmbeddingError("vector matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, m.shape[0], m.shape[1]))
        fh.write(m.tobytes())


def read_vectors(path: str | Path) -> np.ndarray:
    return decode_vectors(Path(path).read_bytes(), str(path))


def decode_vectors(data: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(data) < _HEADER.size:
        raise EmbeddingError(f"{source}: truncated header")
    magic, n, d = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise EmbeddingError(f"{source}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * n * d
    if len(data) != expected:
        raise EmbeddingError(f"{source}: truncated file ({len(data)} bytes, expected {expected})")
    return np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(n, d).astype(np.float32)


def encode_vectors(matrix: np.ndarray) -> bytes:
    m = np.ascontiguousarray(matrix, dtype="<f4")
    return _HEADER.pack(MAGIC, m.shape[0], m.shape[1]) + m.tobytes()


def write_names(path: str | Path, records: Iterable[NameRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            text = r.text.replace("\t", " ").replace("\n", " ")
            fh.write(f"{r.row}\t{r.concept}\t{text}\t{int(r.preferred)}\n")


def read_names(path: str | Path) -> list[NameRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4 or parts[3] not in ("0", "1"):
                raise EmbeddingError(f"{path}:{lineno}: malformed names row")
            records.append(NameRecord(int(parts[0]), parts[1], parts[2], parts[3] == "1"))
    return records


@dataclass(frozen=True)
class MatchResult:
    query_text: str
    concept: str | None
    similarity: float
    matched_name_row: int | None


@dataclass
class EmbeddingStore:
    """Name vectors aligned with their :class:`NameRecord` rows.

    ``similarity`` selects how cosine scores are mapped to [0, 1]:
    ``"cosine"`` clamps at zero, ``"inverse_l2"`` uses ``1 / (1 + L2)`` on
    unit vectors. Both are monotone in cosine so rankings agree.
    """

    matrix: np.ndarray
    records: list[NameRecord]
    similarity: str = "cosine"
    unit: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float32)
        if m.ndim != 2 or m.shape[1] == 0:
            raise EmbeddingError("embedding matrix must be n x d with d > 0")
        if m.shape[0] != len(self.records):
            raise EmbeddingError(
                f"row-count mismatch: {m.shape[0]} vectors, {len(self.records)} names")
        for i, r in enumerate(self.records):
            if r.row != i:
                raise EmbeddingError(f"names row {r.row} out of order at position {i}")
        bad = np.flatnonzero(~np.isfinite(m).all(axis=1))
        if bad.size:
            raise EmbeddingError(f"non-finite value in row {int(bad[0])}")
        m64 = m.astype(np.float64)
        norms = np.linalg.norm(m64, axis=1)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise EmbeddingError(f"degenerate zero vector in row {int(zero[0])}")
        if self.similarity not in ("cosine", "inverse_l2"):
            raise EmbeddingError(f"unknown similarity {self.similarity!r}")
        self.matrix = m
        self.unit = m64 / norms[:, None]

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def subset(self, rows: Sequence[int]) -> "EmbeddingStore":
        rows = list(rows)
        recs = [NameRecord(i, self.records[r].concept, self.records[r].text,
                           self.records[r].preferred) for i, r in enumerate(rows)]
        return EmbeddingStore(self.matrix[rows], recs, self.similarity)

    def preferred_rows(self) -> dict[str, int]:
        """Concept id -> first row holding its preferred name."""
        out: dict[str, int] = {}
        for r in self.records:
            if r.preferred and r.concept not in out:
                out[r.concept] = r.row
        return out

    def scores(self, query: np.ndarray) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64).ravel()
        if q.shape[0] != self.dim:
            raise EmbeddingError(f"dimension mismatch: query {q.shape[0]}, store {self.dim}")
        if not np.isfinite(q).all():
            raise EmbeddingError("query has non-finite values")
        norm = np.linalg.norm(q)
        if norm == 0:
            raise EmbeddingError("zero query vector")
        return self.transform(self.unit @ (q / norm))

    def transform(self, cos: np.ndarray) -> np.ndarray:
        cos = np.clip(cos, -1.0, 1.0)
        if self.similarity == "cosine":
            return np.maximum(cos, 0.0)
        return 1.0 / (1.0 + np.sqrt(np.maximum(2.0 - 2.0 * cos, 0.0)))


def load_embeddings(vectors_path: str | Path, names_path: str | Path,
                    similarity: str = "cosine") -> EmbeddingStore:
    return EmbeddingStore(read_vectors(vectors_path), read_names(names_path), similarity)


def _top_k(scores: np.ndarray, k: int) -> list[tuple[int, float]]:
    # stable sort on negated scores keeps ascending row order within ties
    order = np.argsort(-scores, kind="stable")[:k]
    return [(int(i), float(scores[i])) for i in order]


def knn(store: EmbeddingStore, query: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Exact top-``k`` rows by similarity, descending, ties by lower row."""
    if k < 1:
        raise EmbeddingError("k must be positive")
    return _top_k(store.scores(query), k)


def match_names(store: EmbeddingStore, queries: Iterable[tuple[str, np.ndarray]],
                threshold: float = DEFAULT_THRESHOLD) -> list[MatchResult]:
    """Top-1 name match per query; the concept is kept only at or above ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise EmbeddingError("threshold must lie in [0, 1]")
    results = []
    for text, vec in queries:
        row, sim = knn(store, vec, 1)[0]
        if sim >= threshold:
            results.append(MatchResult(text, store.records[row].concept, sim, row))
        else:
            results.append(MatchResult(text, None, sim, None))
    return results
