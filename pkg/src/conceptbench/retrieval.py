"""BM25 over ontology names and per-passage candidate pools.

Each non-obsolete concept is one document made of its preferred name and
synonyms. Tokens are lowercased (Unicode ``str.lower``) and split on any
run of non-alphanumeric characters.

Term weight uses the non-negative Robertson/Sparck-Jones form
``log(1 + (N - df + 0.5) / (df + 0.5))`` so scores never drop below zero.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import AnnotatedPassage
from .ontology import Ontology
from .tree import LabelTree, format_index

__all__ = [
    "Bm25Index",
    "CandidatePool",
    "build_bm25",
    "pool_candidates",
    "pool_recall",
    "read_pools",
    "retrieve",
    "tokenize",
    "write_pools",
]

log = logging.getLogger(__name__)

DEFAULT_POOL_K = 41


def tokenize(text: str) -> list[str]:
    # underscore counts as a separator too
    return [t for t in re.split(r"[\W_]+", text.lower()) if t]


@dataclass
class Bm25Index:
    doc_ids: list[str]
    postings: dict[str, list[tuple[int, int]]]
    doc_lengths: list[int]
    k1: float = 1.2
    b: float = 0.75
    avg_doc_length: float = field(init=False)

    def __post_init__(self):
        if not self.doc_ids:
            raise ValueError("BM25 index needs at least one document")
        self.avg_doc_length = sum(self.doc_lengths) / len(self.doc_lengths)
        if self.avg_doc_length <= 0:
            raise ValueError("documents are all empty")

    @classmethod
    def from_documents(cls, docs: Mapping[str, str], k1: float = 1.2, b: float = 0.75) -> "Bm25Index":
        doc_ids = sorted(docs)
        postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
        lengths = []
        for i, did in enumerate(doc_ids):
            toks = tokenize(docs[did])
            lengths.append(len(toks))
            for term, tf in sorted(Counter(toks).items()):
                postings[term].append((i, tf))
        return cls(doc_ids, dict(postings), lengths, k1, b)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        n = len(self.doc_ids)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def scores(self, query: str) -> dict[int, float]:
        terms = tokenize(query)
        if not terms:
            raise ValueError("query has no tokens")
        acc: dict[int, float] = defaultdict(float)
        for term in terms:
            plist = self.postings.get(term)
            if not plist:
                continue
            idf = self.idf(term)
            for doc, tf in plist:
                norm = self.k1 * (1 - self.b + self.b * self.doc_lengths[doc] / self.avg_doc_length)
                acc[doc] += idf * tf * (self.k1 + 1) / (tf + norm)
        return acc


def build_bm25(o: Ontology, k1: float = 1.2, b: float = 0.75) -> Bm25Index:
    docs = {cid: " ".join(o[cid].names) for cid in o.active_ids()}
    return Bm25Index.from_documents(docs, k1, b)


def retrieve(idx: Bm25Index, query: str, k: int) -> list[tuple[str, float]]:
    """Top-``k`` positively scoring concepts, ties by concept id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = [(idx.doc_ids[d], s) for d, s in idx.scores(query).items() if s > 0]
    scored.sort(key=lambda cs: (-cs[1], cs[0]))
    return scored[:k]


@dataclass
class CandidatePool:
    passage_id: str
    # concept -> (rank, source prediction concept); rank is 1-based
    candidates: dict[str, tuple[int, str]] = field(default_factory=dict)

    def ordered(self) -> list[tuple[str, str, int]]:
        return [(c, src, rank) for c, (rank, src) in
                sorted(self.candidates.items(), key=lambda kv: (kv[1][0], kv[0]))]

    def __len__(self) -> int:
        return len(self.candidates)

    def __contains__(self, concept: object) -> bool:
        return concept in self.candidates

    def to_json(self) -> dict:
        return {"passage_id": self.passage_id,
                "candidates": [{"concept": c, "source_prediction": s, "rank": r}
                               for c, s, r in self.ordered()]}


def pool_candidates(predictions: Mapping[str, Iterable[Sequence[int]]], tree: LabelTree,
                    o: Ontology, idx: Bm25Index,
                    per_prediction_k: int = DEFAULT_POOL_K) -> list[CandidatePool]:
    """Merge BM25 retrievals seeded by each decodable prediction, per passage.

    A candidate reached from several predictions keeps its best rank (ties
    go to the smaller source concept id), so prediction order never matters.
    """
    pools = []
    cache: dict[str, list[tuple[str, float]]] = {}
    for pid in sorted(predictions):
        pool = CandidatePool(pid)
        for index in predictions[pid]:
            concept = tree.decode(tuple(index))
            if concept is None:
                log.info("passage %s: skipping undecodable index %s", pid, format_index(index))
                continue
            if concept not in cache:
                cache[concept] = retrieve(idx, o[concept].preferred_name, per_prediction_k)
            for rank, (cand, _) in enumerate(cache[concept], start=1):
                prev = pool.candidates.get(cand)
                if prev is None or (rank, concept) < prev:
                    pool.candidates[cand] = (rank, concept)
        pools.append(pool)
    return pools


def pool_recall(pools: Iterable[CandidatePool],
                golds: Iterable[AnnotatedPassage]) -> tuple[float, list[dict]]:
    """Share of gold occurrences found in their passage's pool, plus a per-passage table."""
    golds = list(golds)
    by_id = {p.passage_id: p for p in pools}
    known = {g.id for g in golds}
    stray = sorted(set(by_id) - known)
    if stray:
        raise KeyError(f"pools for unknown passages: {stray[:5]}")
    table, hits, total = [], 0, 0
    for g in golds:
        pool = by_id.get(g.id)
        found = sum(1 for c in g.gold if pool is not None and c in pool)
        table.append({"passage_id": g.id, "gold": len(g.gold), "found": found,
                      "pool_size": len(pool) if pool else 0,
                      "recall": found / len(g.gold) if g.gold else None})
        hits += found
        total += len(g.gold)
    return (hits / total if total else 0.0), table


def write_pools(pools: Iterable[CandidatePool], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in pools:
            fh.write(json.dumps(p.to_json()) + "\n")


def read_pools(path: str | Path) -> list[CandidatePool]:
    pools = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                pool = CandidatePool(obj["passage_id"])
                for c in obj["candidates"]:
                    pool.candidates[c["concept"]] = (c["rank"], c["source_prediction"])
                pools.append(pool)
    return pools
