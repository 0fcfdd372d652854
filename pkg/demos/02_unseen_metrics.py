"""Exact match only rewards hitting the gold leaf. U-RC and U-CS also credit
predictions that land close to an unseen concept in the label tree.

Run from the repository root:  python3 demos/02_unseen_metrics.py
"""

from conceptbench.corpus import AnnotatedPassage, PredictionRecord
from conceptbench.indexing import build_index
from conceptbench.metrics import evaluate, paired_t_test_one_sided, u_cs, u_rc
from conceptbench.splits import SplitSpec, make_split
from conceptbench.synthetic import random_corpus, random_ontology, random_store, synthetic_recognizer
from conceptbench.tree import LabelTree, TreeNode

# Tiny worked example first. Leaves A,B sit under 0; C..H sit under 1.
tree = LabelTree(TreeNode.from_nested([["A", "B"], ["C", "D", "E", "F", "G", "H"]]))
gold = [AnnotatedPassage("p1", "", frozenset({"A"})), AnnotatedPassage("p2", "", frozenset({"C"}))]
near = [PredictionRecord("p1", ((0, 1),)), PredictionRecord("p2", ((1, 3),))]
print("near misses: U-RC", u_rc(gold, near, tree, set()), "U-CS", u_cs(gold, near, tree, set()))
print("no guesses:  U-RC", u_rc(gold, [], tree, set()), "U-CS", u_cs(gold, [], tree, set()))

# Now a synthetic benchmark: 500 concepts, a split with unseen test concepts,
# and recognizers whose predictions get closer as skill rises.
o = random_ontology(500, seed=12)
store = random_store(o, seed=12)
corpus = random_corpus(o, 1200, seed=12)
split = make_split(corpus, SplitSpec(sizes=(100, 200, 400), core_count=50, seed=12))
by_id = {p.id: p for p in corpus}
seen = set().union(*(by_id[i].gold for i in split.schedule[400]))
test = [by_id[i] for i in split.test_ids]
tree, _, _ = build_index(o, store, "ossi")

print(f"\n{len(test)} test passages, T = {tree.size}")
print(f"{'skill':>6} {'P':>6} {'R':>6} {'F1':>6} {'U-RC':>6} {'U-CS':>7}")
per_skill = {}
for skill in (0.2, 0.5, 0.8):
    preds = synthetic_recognizer(test, tree, skill, seed=12)
    rep = evaluate(test, preds, tree, seen)
    per_skill[skill] = [evaluate([g], [p], tree, set()).u_rc for g, p in zip(test, preds)]
    print(f"{skill:6.1f} {rep.precision:6.3f} {rep.recall:6.3f} {rep.f1:6.3f} {rep.u_rc:6.3f} {rep.u_cs:7.2f}")

t, p = paired_t_test_one_sided(per_skill[0.8], per_skill[0.5])
print(f"\nper-passage closeness, skill 0.8 vs 0.5: t = {t:.2f}, one-sided p = {p:.2g}")
