"""Concept graphs for index construction.

Three flavours share one container:

* ``osi``  -- parent/child links from the ontology, weight 1.0
* ``ssi``  -- each concept linked to its nearest preferred-name neighbours,
  weighted by similarity
* ``ossi`` -- the union, with ontology links taking precedence and
  semantic-only links down-weighted by ``semantic_factor``
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from enum import Enum

import networkx as nx
import numpy as np

from .embeddings import EmbeddingStore
from .ontology import Ontology

__all__ = ["ConceptGraph", "GraphConfig", "IndexKind", "MissingEmbeddingError", "build_graph"]


class IndexKind(str, Enum):
    OSI = "osi"
    SSI = "ssi"
    OSSI = "ossi"


class MissingEmbeddingError(ValueError):
    def __init__(self, missing: list[str]):
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        super().__init__(f"{len(missing)} concepts lack a preferred-name embedding: {shown}")
        self.missing = missing


@dataclass(frozen=True)
class GraphConfig:
    kind: IndexKind = IndexKind.OSSI
    neighbors: int = 10
    semantic_factor: float = 0.5
    block_size: int = 2048

    def fingerprint(self) -> str:
        d = asdict(self)
        d["kind"] = IndexKind(self.kind).value
        del d["block_size"]
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class ConceptGraph:
    nodes: list[str]
    edges: dict[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = sorted(set(self.nodes))

    def add_edge(self, a: str, b: str, w: float, combine=max) -> None:
        if a == b:
            raise ValueError(f"self-loop on {a}")
        if not w > 0:
            raise ValueError(f"edge weight must be positive, got {w}")
        key = (a, b) if a < b else (b, a)
        self.edges[key] = combine(self.edges[key], w) if key in self.edges else w

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        for (a, b), w in sorted(self.edges.items()):
            g.add_edge(a, b, weight=w)
        return g


def _ontology_edges(o: Ontology, scope: set[str]) -> dict[tuple[str, str], float]:
    edges = {}
    for cid in sorted(scope):
        for p in o[cid].parents:
            if p in scope:
                edges[(p, cid) if p < cid else (cid, p)] = 1.0
    return edges


def semantic_neighbors(unit: np.ndarray, k: int, block_size: int = 2048,
                       transform=None) -> list[list[tuple[int, float]]]:
    """Top-``k`` other rows per row of a unit-normalized matrix.

    Similarities pass through ``transform`` (defaults to clamping at zero);
    ties resolve to the lower row.
    """
    n = unit.shape[0]
    out: list[list[tuple[int, float]]] = []
    k = min(k, n - 1)
    for start in range(0, n, block_size):
        block = unit[start:start + block_size] @ unit.T
        block = transform(block) if transform else np.maximum(np.clip(block, -1, 1), 0.0)
        for r in range(block.shape[0]):
            row = block[r]
            row[start + r] = -np.inf
            if k <= 0:
                out.append([])
                continue
            # partial select, then an exact stable sort of everything tied with the k-th value
            kth = np.partition(row, n - k)[n - k]
            cand = np.flatnonzero(row >= kth)
            order = cand[np.lexsort((cand, -row[cand]))][:k]
            out.append([(int(j), float(row[j])) for j in order])
    return out


def build_graph(o: Ontology, store: EmbeddingStore | None = None,
                kind: IndexKind | str = IndexKind.OSSI,
                cfg: GraphConfig | None = None) -> ConceptGraph:
    """Build the concept graph for one index flavour over non-obsolete concepts."""
    cfg = cfg or GraphConfig(kind=IndexKind(kind))
    kind = IndexKind(kind)
    ids = o.active_ids()
    scope = set(ids)
    g = ConceptGraph(ids)

    ont = _ontology_edges(o, scope) if kind in (IndexKind.OSI, IndexKind.OSSI) else {}
    sem: dict[tuple[str, str], float] = {}
    if kind in (IndexKind.SSI, IndexKind.OSSI):
        if store is None:
            raise ValueError(f"{kind.value} graphs need an embedding store")
        rows = store.preferred_rows()
        missing = [c for c in ids if c not in rows]
        if missing:
            raise MissingEmbeddingError(missing)
        unit = store.unit[[rows[c] for c in ids]]
        for i, nbrs in enumerate(semantic_neighbors(unit, cfg.neighbors, cfg.block_size,
                                                    store.transform)):
            for j, sim in nbrs:
                if sim <= 0:
                    continue
                a, b = ids[i], ids[j]
                key = (a, b) if a < b else (b, a)
                sem[key] = max(sem.get(key, 0.0), sim)

    if kind is IndexKind.OSI:
        g.edges.update(ont)
    elif kind is IndexKind.SSI:
        g.edges.update(sem)
    else:
        for key, sim in sem.items():
            if key not in ont:
                g.edges[key] = cfg.semantic_factor * sim
        g.edges.update(ont)
    g.edges = dict(sorted(g.edges.items()))
    return g
