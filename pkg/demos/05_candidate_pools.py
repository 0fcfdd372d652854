"""Expand each recognizer prediction into BM25 neighbours by name and measure
how much of the gold the pooled candidates cover.

Run from the repository root:  python3 demos/05_candidate_pools.py
"""

from conceptbench.indexing import build_index
from conceptbench.retrieval import build_bm25, pool_candidates, pool_recall, retrieve
from conceptbench.synthetic import random_corpus, random_ontology, random_store, synthetic_recognizer

o = random_ontology(500, seed=5)
tree, _, _ = build_index(o, random_store(o, seed=5), "ossi")
bm25 = build_bm25(o)
some = o.active_ids()[42]
print(f"query {o[some].preferred_name!r}:")
for cid, score in retrieve(bm25, o[some].preferred_name, 5):
    print(f"  {cid} {score:6.2f} {o[cid].preferred_name}")

passages = random_corpus(o, 200, seed=5)
preds = {r.passage_id: r.predicted for r in synthetic_recognizer(passages, tree, 0.5, seed=5)}
print("\nper-prediction k   pool recall   mean pool size")
for k in (1, 5, 20, 41, 100):
    pools = pool_candidates(preds, tree, o, bm25, k)
    recall, _ = pool_recall(pools, passages)
    print(f"{k:16d}   {recall:11.3f}   {sum(len(p) for p in pools) / len(pools):14.1f}")
