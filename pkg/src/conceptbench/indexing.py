"""One-call index construction plus structural checks used by tests and demos."""

from __future__ import annotations

import hashlib
from collections import deque
from pathlib import Path

from .embeddings import EmbeddingStore
from .graph import ConceptGraph, GraphConfig, IndexKind, build_graph
from .ontology import Ontology
from .partition import PartitionConfig, partition
from .tree import Index, LabelTree, assign_indices, save_tree, write_index_tsv

__all__ = ["build_index", "check_tree", "config_fingerprint", "save_index"]


def config_fingerprint(graph_cfg: GraphConfig, part_cfg: PartitionConfig) -> str:
    raw = f"{graph_cfg.fingerprint()}:{part_cfg.fingerprint()}"
    return hashlib.sha256(raw.encode()).hexdigest()[:16]


def build_index(o: Ontology, store: EmbeddingStore | None = None,
                kind: IndexKind | str = IndexKind.OSSI,
                graph_cfg: GraphConfig | None = None,
                part_cfg: PartitionConfig | None = None,
                ) -> tuple[LabelTree, dict[str, Index], ConceptGraph]:
    graph_cfg = graph_cfg or GraphConfig(kind=IndexKind(kind))
    g = build_graph(o, store, kind, graph_cfg)
    tree = partition(g, part_cfg or PartitionConfig())
    return tree, assign_indices(tree), g


def save_index(tree: LabelTree, indices: dict[str, Index], out_dir: str | Path,
               name: str, fingerprint: str = "") -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tree_path = out_dir / f"{name}.tree.json"
    tsv_path = out_dir / f"{name}.index.tsv"
    save_tree(tree, tree_path, fingerprint)
    write_index_tsv(indices, tsv_path)
    return tree_path, tsv_path


def _connected(nodes: set[str], adj: dict[str, set[str]]) -> bool:
    start = min(nodes)
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v in nodes and v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == len(nodes)


def check_tree(tree: LabelTree, g: ConceptGraph) -> list[str]:
    """Structural problems of ``tree`` against ``g``; empty when sound.

    Every internal node must have 1..max_children children, leaves must
    match the graph nodes one-to-one, indices must decode back, and each
    cluster must be connected in ``g`` unless it merely groups whole
    connected components.
    """
    problems = []
    adj: dict[str, set[str]] = {n: set() for n in g.nodes}
    for a, b in g.edges:
        adj[a].add(b)
        adj[b].add(a)
    component = {}
    for n in g.nodes:
        if n in component:
            continue
        members = {n}
        queue = deque([n])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in members:
                    members.add(v)
                    queue.append(v)
        for m in members:
            component[m] = frozenset(members)

    leaves = list(tree.root.leaves())
    if sorted(leaves) != sorted(g.nodes) or len(set(leaves)) != len(leaves):
        problems.append("leaf set does not match graph nodes")
    for prefix, node in tree.internal_nodes():
        if not 1 <= len(node.children) <= tree.max_children:
            problems.append(f"node {prefix} has {len(node.children)} children")
        members = set(node.leaves())
        if len(members) > 1 and not _connected(members, adj):
            whole = all(component[m] <= members for m in members)
            if not whole:
                problems.append(f"cluster {prefix} is disconnected")
    for cid, idx in tree.index.items():
        if tree.decode(idx) != cid:
            problems.append(f"index of {cid} does not decode back")
    return problems
