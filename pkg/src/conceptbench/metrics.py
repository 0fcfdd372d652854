"""Exact-match and unseen-concept metrics over label-tree indices.

U-RC averages, over every unseen gold occurrence, the best normalized
prefix overlap any prediction reaches with the gold index. U-CS is the
harmonic mean of the candidate-set sizes left under that deepest shared
prefix (the whole label set when nothing overlaps).
"""

from __future__ import annotations

import hashlib
import json
import math
from fractions import Fraction
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .corpus import AnnotatedPassage, PredictionRecord
from .tree import Index, LabelTree

__all__ = [
    "DegenerateSampleError",
    "EvalReport",
    "NoUnseenGoldError",
    "UnknownPassageError",
    "count_prefix",
    "evaluate",
    "exact_match",
    "lcp",
    "paired_t_test_one_sided",
    "spearman",
    "u_cs",
    "u_rc",
]


class UnknownPassageError(KeyError):
    pass


class NoUnseenGoldError(ValueError):
    pass


class DegenerateSampleError(ValueError):
    pass


def lcp(a: Sequence[int], b: Sequence[int]) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def count_prefix(tree: LabelTree, prefix: Sequence[int]) -> int:
    """Number of concepts whose index starts with ``prefix``."""
    return tree.count_prefix(tuple(prefix))


def _align(golds: Iterable[AnnotatedPassage],
           preds: Iterable[PredictionRecord]) -> list[tuple[AnnotatedPassage, set[Index]]]:
    passages = list(golds)
    by_id = {p.id: set() for p in passages}
    for rec in preds:
        if rec.passage_id not in by_id:
            raise UnknownPassageError(f"prediction for unknown passage {rec.passage_id!r}")
        by_id[rec.passage_id].update(tuple(i) for i in rec.predicted)
    return [(p, by_id[p.id]) for p in passages]


def exact_match(golds: Iterable[AnnotatedPassage], preds: Iterable[PredictionRecord],
                tree: LabelTree) -> tuple[float, float, float]:
    """Micro precision, recall and F1; undecodable indices count as false positives."""
    tp, fp, fn = _exact_counts(golds, preds, tree)
    return _prf(tp, fp, fn)


def _exact_counts(golds, preds, tree) -> tuple[int, int, int]:
    tp = fp = fn = 0
    for passage, predicted in _align(golds, preds):
        hits = sum(1 for idx in predicted if tree.decode(idx) in passage.gold)
        tp += hits
        fp += len(predicted) - hits
        fn += len(passage.gold) - hits
    return tp, fp, fn


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def _unseen_occurrences(golds, preds, tree: LabelTree, seen: set[str]):
    """Yield (gold index, prediction set) per unseen gold occurrence."""
    rows = []
    for passage, predicted in _align(golds, preds):
        for g in sorted(passage.gold):
            if g in seen:
                continue
            if g not in tree.index:
                raise KeyError(f"gold concept {g!r} in passage {passage.id!r} is not in the tree")
            rows.append((tree.index[g], predicted))
    if not rows:
        raise NoUnseenGoldError("no unseen gold concepts; U-RC/U-CS are undefined")
    return rows


def _closeness(gold: Index, predicted: set[Index]) -> float:
    if not predicted:
        return 0.0
    return max(lcp(gold, p) for p in predicted) / len(gold)


def _candidate_size(gold: Index, predicted: set[Index], tree: LabelTree) -> int:
    best = None
    for p in predicted:
        k = lcp(gold, p)
        key = (-k, tree.count_prefix(gold[:k]) if k else tree.size, p)
        if best is None or key < best:
            best = key
    if best is None or best[0] == 0:
        return tree.size
    return best[1]


def u_rc(golds: Iterable[AnnotatedPassage], preds: Iterable[PredictionRecord],
         tree: LabelTree, seen: set[str]) -> float:
    rows = _unseen_occurrences(golds, preds, tree, set(seen))
    return math.fsum(_closeness(g, p) for g, p in rows) / len(rows)


def u_cs(golds: Iterable[AnnotatedPassage], preds: Iterable[PredictionRecord],
         tree: LabelTree, seen: set[str]) -> float:
    rows = _unseen_occurrences(golds, preds, tree, set(seen))
    return _harmonic_size(rows, tree)


def _harmonic_size(rows, tree: LabelTree) -> float:
    # sizes are integers, so the harmonic mean is rational; computing it
    # exactly keeps constant cases (all S = T, all S = 1) free of rounding
    sizes = Counter(_candidate_size(g, p, tree) for g, p in rows)
    return float(len(rows) / sum(Fraction(n, s) for s, n in sizes.items()))


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    u_rc: float | None
    u_cs: float | None
    tp: int
    fp: int
    fn: int
    unseen_gold_occurrences: int
    T: int

    def to_json(self, fingerprint: str = "") -> str:
        d = asdict(self)
        d["config_fingerprint"] = fingerprint
        return json.dumps(d, indent=2, sort_keys=True)


def evaluate(golds: Iterable[AnnotatedPassage], preds: Iterable[PredictionRecord],
             tree: LabelTree, seen: set[str]) -> EvalReport:
    """All metrics in one pass; U-RC/U-CS are None when no gold is unseen."""
    golds, preds = list(golds), list(preds)
    tp, fp, fn = _exact_counts(golds, preds, tree)
    p, r, f = _prf(tp, fp, fn)
    try:
        rows = _unseen_occurrences(golds, preds, tree, set(seen))
    except NoUnseenGoldError:
        rows = []
    urc = ucs = None
    if rows:
        urc = math.fsum(_closeness(g, q) for g, q in rows) / len(rows)
        ucs = _harmonic_size(rows, tree)
    return EvalReport(p, r, f, urc, ucs, tp, fp, fn, len(rows), tree.size)


def paired_t_test_one_sided(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Paired t-test with alternative ``mean(x - y) > 0``; returns (t, p)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise DegenerateSampleError("need two equal-length samples of size >= 2")
    d = x - y
    scale = max(1.0, float(np.abs(d).max()))
    if np.ptp(d) <= 1e-12 * scale:
        raise DegenerateSampleError("differences have zero variance")
    n = d.size
    t = d.mean() / (d.std(ddof=1) / math.sqrt(n))
    return float(t), float(stats.t.sf(t, n - 1))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need two equal-length vectors of size >= 2")
    rx, ry = stats.rankdata(x), stats.rankdata(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise DegenerateSampleError("rank correlation undefined for a constant vector")
    rx -= rx.mean()
    ry -= ry.mean()
    rho = float((rx @ ry) / math.sqrt((rx @ rx) * (ry @ ry)))
    return max(-1.0, min(1.0, rho))


def fingerprint(obj: Mapping) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]
