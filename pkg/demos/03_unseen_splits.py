"""Carve a split whose test set keeps at least 30% of its concept types unseen,
then sample nested training sets of growing size.

Run from the repository root:  python3 demos/03_unseen_splits.py
"""

from conceptbench.splits import SplitSpec, make_split
from conceptbench.synthetic import random_corpus, random_ontology

o = random_ontology(400, seed=3)
corpus = random_corpus(o, 2000, seed=3)
spec = SplitSpec(sizes=(100, 200, 400, 800), core_count=50, seed=3)
split = make_split(corpus, spec)

by_id = {p.id: p for p in corpus}
test_types = set().union(*(by_id[i].gold for i in split.test_ids))
print(f"test passages {len(split.test_ids)}, dev passages {len(split.dev_ids)}")
print(f"held-out concepts: {len(split.unseen_concepts)} of {len(test_types)} test types")

# bigger training sets cover more of the test types, but never the held-out ones
for m in spec.sizes:
    seen = set().union(*(by_id[i].gold for i in split.schedule[m]))
    leak = seen & set(split.unseen_concepts)
    print(f"  train {m:4d}: {len(test_types & seen) / len(test_types):6.1%} of test types seen, leaks {len(leak)}")

sizes = list(spec.sizes)
nested = all(set(split.schedule[a]) < set(split.schedule[b]) for a, b in zip(sizes, sizes[1:]))
print("schedule nested:", nested)
