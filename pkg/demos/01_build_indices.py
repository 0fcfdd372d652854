"""Build the three search indices for a synthetic ontology and look at their shape.

Run from the repository root:  python3 demos/01_build_indices.py
"""

from collections import Counter

from conceptbench.indexing import build_index, check_tree
from conceptbench.synthetic import random_ontology, random_store
from conceptbench.tree import format_index

# A 400-concept DAG with a few multi-parent concepts, plus name vectors that
# drift away from each parent's direction.
ontology = random_ontology(400, seed=1, multi_parent=0.2)
store = random_store(ontology, seed=1)
print(f"{len(ontology.active_ids())} concepts, {len(store.records)} names")

# osi only sees parent links, ssi only sees embedding neighbours, ossi mixes both
for kind in ("osi", "ssi", "ossi"):
    tree, indices, graph = build_index(ontology, store, kind)
    mean, deepest = tree.depth_stats()
    widths = Counter(len(node.children) for _, node in tree.internal_nodes())
    print(f"\n{kind}: {len(graph.edges)} edges, mean depth {mean:.2f}, max depth {deepest}")
    print("  children per internal node:", dict(sorted(widths.items())))
    print("  structural problems:", check_tree(tree, graph) or "none")
    root = ontology.active_ids()[0]
    kids = [c for c in ontology.active_ids() if root in ontology[c].parents][:3]
    for cid in [root, *kids]:
        print(f"  {cid} {ontology[cid].preferred_name!r:40} -> {format_index(indices[cid])}")
