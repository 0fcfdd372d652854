"""Replay the recorded auto-labeling run and watch precision and recall move
stage by stage. No model is contacted: every answer comes from the cache.

Run from the repository root:  python3 demos/04_autolabel_replay.py
"""

from pathlib import Path

from conceptbench.autolabel import CachedClient, PipelineConfig, PrecomputedNameVectors, run_pipeline
from conceptbench.corpus import read_corpus
from conceptbench.embeddings import load_embeddings

FIX = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "autolabel"

store = load_embeddings(FIX / "vectors.bin", FIX / "names.tsv")
embedder = PrecomputedNameVectors.from_files(FIX / "name_vectors.bin", FIX / "name_texts.txt")
corpus = read_corpus(FIX / "passages.jsonl")
client = CachedClient(FIX / "cache", "replay")
cfg = PipelineConfig(guideline_summary=(FIX / "guideline.txt").read_text())
records = run_pipeline(corpus, cfg, client, store, embedder)
print(f"{len(records)} passages, cache hits {client.hits}, misses {client.misses}")

gold = {p.id: p.gold for p in corpus}
for stage in ("pcc", "classify", "relabel", "guideline"):
    tp = fp = fn = 0
    for r in records:
        out = set(next(e.output for e in r.stage_log if e.stage == stage))
        tp += len(out & gold[r.passage.id])
        fp += len(out - gold[r.passage.id])
        fn += len(gold[r.passage.id] - out)
    print(f"  after {stage:9}: precision {tp / (tp + fp):.3f}  recall {tp / (tp + fn):.3f}")

dropped = [r.passage.id for r in records if not r.keep]
print("dropped by the quality stage:", ", ".join(dropped))
# names too far from any ontology name are reported, not silently dropped
notes = [(r.passage.id, w) for r in records for w in r.warnings]
print(f"{len(notes)} notes, for example:")
for pid, w in notes[:2] + [n for n in notes if "quality" in n[1]]:
    print(f"  {pid}: {w}")
