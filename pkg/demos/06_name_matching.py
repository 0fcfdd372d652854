"""Generated names are mapped to ontology concepts by their nearest name vector,
but only when the cosine similarity reaches the threshold.

Run from the repository root:  python3 demos/06_name_matching.py
"""

import numpy as np

from conceptbench.embeddings import knn, match_names
from conceptbench.synthetic import random_ontology, random_store

o = random_ontology(200, seed=6)
store = random_store(o, seed=6)
rng = np.random.default_rng(6)

row = 17
target = store.records[row]
print(f"name row {row}: {target.text!r} of {target.concept}")
for noise in (0.0, 0.3, 0.8, 2.0):
    q = store.matrix[row] + noise * rng.normal(size=store.dim)
    best = knn(store, q, 3)
    res = match_names(store, [(f"noise {noise}", q)], 0.6)[0]
    near = ", ".join(f"{store.records[i].concept}:{s:.2f}" for i, s in best)
    print(f"  noise {noise:3.1f}: top-3 [{near}] -> {res.concept or 'no match'}")
