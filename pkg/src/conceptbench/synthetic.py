"""Seeded synthetic ontologies, embeddings, corpora and recognizers.

Used by the test suite and demos; nothing here is needed to process real data.
"""

from __future__ import annotations

import random

import numpy as np

from .corpus import AnnotatedPassage, PredictionRecord
from .embeddings import EmbeddingStore
from .ontology import Concept, Ontology, name_table
from .tree import LabelTree

__all__ = [
    "random_corpus",
    "random_ontology",
    "random_store",
    "synthetic_recognizer",
]

_WORDS = ("cell", "calcium", "glucose", "ion", "membrane", "insulin", "renal", "cardiac",
          "hepatic", "acid", "sodium", "potassium", "lipid", "protein", "stress", "immune",
          "fluid", "pressure", "oxygen", "iron", "thermal", "bone", "neural", "vascular")
_HEADS = ("imbalance", "abnormality", "deficiency", "excess", "disorder", "dysregulation",
          "failure", "overload", "loss", "response")


def random_ontology(n: int, seed: int = 0, multi_parent: float = 0.2,
                    obsolete: float = 0.0, prefix: str = "C") -> Ontology:
    """A random DAG rooted at ``{prefix}0000`` with readable names and synonyms.

    Each concept picks one parent among earlier concepts (biased towards
    recent ones so depth grows), plus a second parent with probability
    ``multi_parent``.
    """
    rng = random.Random(seed)
    width = max(4, len(str(n)))
    ids = [f"{prefix}{i:0{width}d}" for i in range(n)]
    concepts = {}
    for i, cid in enumerate(ids):
        parents: list[str] = []
        if i:
            parents.append(ids[int(i * rng.random() ** 0.5)])
            if i > 2 and rng.random() < multi_parent:
                extra = ids[rng.randrange(i)]
                if extra not in parents:
                    parents.append(extra)
        words = rng.sample(_WORDS, 2)
        name = f"{words[0]} {words[1]} {rng.choice(_HEADS)} {i}"
        synonyms = tuple(f"{w} {rng.choice(_HEADS)} {i}" for w in rng.sample(_WORDS, rng.randint(0, 2)))
        synonyms = tuple(s for s in dict.fromkeys(synonyms) if s != name)
        is_obsolete = i > 0 and rng.random() < obsolete
        concepts[cid] = Concept(cid, name, synonyms, tuple(parents), is_obsolete)
    return Ontology(concepts)


def random_store(o: Ontology, dim: int = 16, seed: int = 0, noise: float = 0.35,
                 include_obsolete: bool = False) -> EmbeddingStore:
    """Name vectors where each concept drifts from its parents' mean direction."""
    rng = np.random.default_rng(seed)
    base: dict[str, np.ndarray] = {}
    for cid in o.topological_order():
        parents = [base[p] for p in o[cid].parents]
        anchor = np.mean(parents, axis=0) if parents else rng.normal(size=dim)
        v = anchor / np.linalg.norm(anchor) + noise * rng.normal(size=dim)
        base[cid] = v / np.linalg.norm(v)
    records = name_table(o, include_obsolete=include_obsolete)
    rows = []
    for r in records:
        v = base[r.concept] if r.preferred else base[r.concept] + 0.1 * rng.normal(size=dim)
        rows.append(v)
    return EmbeddingStore(np.asarray(rows, dtype=np.float32), records)


def random_corpus(o: Ontology, n_passages: int, seed: int = 0, mean_concepts: float = 3.0,
                  zipf: float = 1.1, id_prefix: str = "p") -> list[AnnotatedPassage]:
    """Passages whose gold sets follow a Zipf-like concept popularity."""
    rng = random.Random(seed)
    ids = o.active_ids()
    order = ids[:]
    rng.shuffle(order)
    weights = [1.0 / (r + 1) ** zipf for r in range(len(order))]
    width = len(str(n_passages))
    passages = []
    for i in range(n_passages):
        k = max(1, min(len(order), int(rng.expovariate(1.0 / mean_concepts)) + 1))
        gold = set(rng.choices(order, weights=weights, k=k))
        text = " ; ".join(o[c].preferred_name for c in sorted(gold))
        passages.append(AnnotatedPassage(f"{id_prefix}{i:0{width}d}", text, frozenset(gold)))
    return passages


def synthetic_recognizer(passages: list[AnnotatedPassage], tree: LabelTree, skill: float,
                         seed: int = 0, spurious: float = 0.5) -> list[PredictionRecord]:
    """Predictions whose closeness to each gold concept grows with ``skill`` in [0, 1].

    For every gold concept the recognizer keeps a random-length prefix of
    the gold index (longer on average for higher skill) and completes it
    with a random walk down the tree, so it may land on the gold leaf or a
    nearby one. ``spurious`` controls extra unrelated predictions.
    """
    rng = random.Random(seed)
    out = []
    for p in passages:
        preds = []
        for g in sorted(p.gold):
            gold_idx = tree.index[g]
            keep = sum(1 for _ in gold_idx if rng.random() < skill) if skill < 1 else len(gold_idx)
            keep = min(keep, len(gold_idx))
            preds.append(_walk(tree, gold_idx[:keep], rng))
        while rng.random() < spurious * (1 - skill):
            preds.append(_walk(tree, (), rng))
        out.append(PredictionRecord(p.id, tuple(preds)))
    return out


def _walk(tree: LabelTree, prefix: tuple[int, ...], rng: random.Random) -> tuple[int, ...]:
    node = tree.node_at(prefix)
    path = list(prefix)
    while not node.is_leaf:
        i = rng.randrange(len(node.children))
        path.append(i)
        node = node.children[i]
    return tuple(path)
