"""Independent reference implementations used as test oracles.

These deliberately avoid the package's own helpers: they work on plain
dicts, lists and math-module arithmetic so a shared bug cannot hide.
"""

from __future__ import annotations

import math
import random

from conceptbench.tree import LabelTree, TreeNode


# -- ontology -----------------------------------------------------------------

def reachable_below(parents: dict[str, list[str]], root: str) -> set[str]:
    """Fixed-point iteration: a node is below root if any parent is root or below root."""
    below: set[str] = set()
    changed = True
    while changed:
        changed = False
        for c, ps in parents.items():
            if c not in below and any(p == root or p in below for p in ps):
                below.add(c)
                changed = True
    return below


# -- vectors ------------------------------------------------------------------

def cosine(a, b) -> float:
    dot = sum(float(x) * float(y) for x, y in zip(a, b))
    na = math.sqrt(sum(float(x) ** 2 for x in a))
    nb = math.sqrt(sum(float(y) ** 2 for y in b))
    return max(0.0, min(1.0, dot / (na * nb)))


def full_scan_knn(matrix, query, k: int) -> list[tuple[int, float]]:
    sims = [(cosine(row, query), i) for i, row in enumerate(matrix)]
    sims.sort(key=lambda t: (-t[0], t[1]))
    return [(i, s) for s, i in sims[:k]]


# -- trees and metrics --------------------------------------------------------

def random_nested(rng: random.Random, concepts: list[str], max_children: int = 10):
    """Random nested-list tree over ``concepts`` with at most ``max_children`` per node."""
    if len(concepts) == 1 and rng.random() < 0.7:
        return concepts[0]
    if len(concepts) <= max_children and rng.random() < 0.5:
        return list(concepts)
    k = rng.randint(2 if len(concepts) > 1 else 1, min(max_children, len(concepts)))
    cuts = sorted(rng.sample(range(1, len(concepts)), k - 1)) if k > 1 else []
    parts = [concepts[a:b] for a, b in zip([0, *cuts], [*cuts, len(concepts)])]
    return [random_nested(rng, p, max_children) for p in parts]


def random_tree(rng: random.Random, n_leaves: int) -> LabelTree:
    concepts = [f"K{i:03d}" for i in range(n_leaves)]
    rng.shuffle(concepts)
    nested = random_nested(rng, concepts)
    if isinstance(nested, str):
        nested = [nested]
    return LabelTree(TreeNode.from_nested(nested))


def leaf_paths(nested, prefix=()) -> dict[str, tuple[int, ...]]:
    """Concept -> digit path, ordering children by smallest contained id."""
    if isinstance(nested, str):
        return {nested: prefix}

    def smallest(n):
        return n if isinstance(n, str) else min(smallest(c) for c in n)

    out = {}
    for i, child in enumerate(sorted(nested, key=smallest)):
        out.update(leaf_paths(child, prefix + (i,)))
    return out


def _lcp(a, b) -> int:
    n = 0
    while n < len(a) and n < len(b) and a[n] == b[n]:
        n += 1
    return n


def _size(paths: dict[str, tuple], prefix: tuple) -> int:
    return sum(1 for p in paths.values() if p[:len(prefix)] == prefix)


def brute_metrics(passages, predictions: dict[str, list[tuple]], paths: dict[str, tuple],
                  seen: set[str]) -> dict:
    """Exact-match micro P/R/F1 plus U-RC and U-CS straight from the definitions."""
    decode = {v: k for k, v in paths.items()}
    T = len(paths)
    tp = fp = fn = 0
    closeness, sizes = [], []
    for p in passages:
        preds = list(dict.fromkeys(predictions.get(p.id, [])))
        for q in preds:
            if decode.get(tuple(q)) in p.gold:
                tp += 1
            else:
                fp += 1
        fn += len([g for g in p.gold if paths[g] not in [tuple(q) for q in preds]])
        for g in p.gold:
            if g in seen:
                continue
            ig = paths[g]
            if not preds:
                closeness.append(0.0)
                sizes.append(T)
                continue
            best = max(_lcp(ig, q) for q in preds)
            closeness.append(best / len(ig))
            sizes.append(_size(paths, ig[:best]) if best else T)
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    out = {"precision": prec, "recall": rec, "f1": f1, "tp": tp, "fp": fp, "fn": fn}
    if closeness:
        out["u_rc"] = sum(closeness) / len(closeness)
        out["u_cs"] = len(sizes) / sum(1.0 / s for s in sizes)
    return out


# -- retrieval ----------------------------------------------------------------

def bm25_by_hand(docs: dict[str, list[str]], query: list[str], k1: float = 1.2,
                 b: float = 0.75) -> dict[str, float]:
    n = len(docs)
    avg = sum(len(d) for d in docs.values()) / n
    out = {}
    for did, toks in docs.items():
        score = 0.0
        for term in query:
            df = sum(1 for d in docs.values() if term in d)
            if df == 0:
                continue
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            tf = toks.count(term)
            score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(toks) / avg))
        out[did] = score
    return out


# -- graphs -------------------------------------------------------------------

def modularity(edges: dict[tuple[str, str], float], parts: list[set[str]]) -> float:
    m = sum(edges.values())
    deg: dict[str, float] = {}
    for (a, b), w in edges.items():
        deg[a] = deg.get(a, 0.0) + w
        deg[b] = deg.get(b, 0.0) + w
    q = 0.0
    for part in parts:
        inside = sum(w for (a, b), w in edges.items() if a in part and b in part)
        tot = sum(deg.get(n, 0.0) for n in part)
        q += inside / m - (tot / (2 * m)) ** 2
    return q
