import itertools
import random

import numpy as np
import pytest

from conceptbench.embeddings import EmbeddingStore
from conceptbench.graph import ConceptGraph, GraphConfig, IndexKind, MissingEmbeddingError, build_graph
from conceptbench.indexing import build_index, check_tree, save_index
from conceptbench.ontology import Concept, NameRecord, Ontology, name_table, ontology_from_parents
from conceptbench.partition import PartitionConfig, partition
from conceptbench.synthetic import random_ontology, random_store
from conceptbench.tree import (
    ChecksumMismatch,
    LabelTree,
    TreeFileError,
    TreeNode,
    VersionMismatch,
    assign_indices,
    format_index,
    load_tree,
    parse_index,
    read_index_tsv,
    save_tree,
)

from oracles import cosine, leaf_paths, modularity, random_nested, random_tree


def _store_for(o, vectors):
    records = name_table(o, include_obsolete=False)
    return EmbeddingStore(np.asarray([vectors[r.concept] for r in records], np.float32), records)


# -- graphs -------------------------------------------------------------------

def test_osi_chain():
    o = ontology_from_parents({"A": [], "B": ["A"], "C": ["B"]})
    g = build_graph(o, None, "osi")
    assert g.edges == {("A", "B"): 1.0, ("B", "C"): 1.0}


def test_ssi_identical_vectors_give_triangle():
    o = ontology_from_parents({"A": [], "B": [], "C": []})
    store = _store_for(o, {c: [1.0, 2.0, 3.0] for c in "ABC"})
    g = build_graph(o, store, "ssi")
    assert g.edges.keys() == {("A", "B"), ("A", "C"), ("B", "C")}
    assert all(w == pytest.approx(1.0) for w in g.edges.values())


def test_ssi_requires_embeddings():
    o = ontology_from_parents({"A": [], "B": ["A"]})
    with pytest.raises(ValueError):
        build_graph(o, None, "ssi")
    partial = EmbeddingStore(np.ones((1, 3), np.float32), [NameRecord(0, "A", "A", True)])
    with pytest.raises(MissingEmbeddingError) as err:
        build_graph(o, partial, "ossi")
    assert err.value.missing == ["B"]


def test_obsolete_concepts_left_out():
    concepts = {"A": Concept("A", "a"), "B": Concept("B", "b", parents=("A",), obsolete=True)}
    g = build_graph(Ontology(concepts), None, "osi")
    assert g.nodes == ["A"] and not g.edges


def _replay_ossi(o, store, k=10, factor=0.5):
    """The OSSI edge rules applied literally, with a pure-python similarity."""
    ids = o.active_ids()
    vec = {r.concept: store.matrix[r.row] for r in store.records if r.preferred}
    ont = {}
    for c in ids:
        for p in o[c].parents:
            if p in ids:
                ont[tuple(sorted((c, p)))] = 1.0
    sem = {}
    for a in ids:
        sims = sorted(((cosine(vec[a], vec[b]), b) for b in ids if b != a),
                      key=lambda t: (-t[0], ids.index(t[1])))[:k]
        for s, b in sims:
            if s > 0:
                key = tuple(sorted((a, b)))
                sem[key] = max(sem.get(key, 0.0), s)
    edges = {key: factor * s for key, s in sem.items()}
    edges.update(ont)
    return edges


@pytest.mark.parametrize("seed", range(3))
def test_ossi_matches_rule_replay(seed):
    o = random_ontology(50, seed=seed, multi_parent=0.3)
    store = random_store(o, dim=8, seed=seed, noise=1.0)
    g = build_graph(o, store, "ossi")
    want = _replay_ossi(o, store)
    assert g.edges.keys() == want.keys()
    for key, w in want.items():
        assert g.edges[key] == pytest.approx(w, abs=1e-9)


def test_graph_edge_validation():
    g = ConceptGraph(["A", "B"])
    with pytest.raises(ValueError):
        g.add_edge("A", "A", 1.0)
    with pytest.raises(ValueError):
        g.add_edge("A", "B", 0.0)
    g.add_edge("B", "A", 0.3)
    g.add_edge("A", "B", 0.7)
    assert g.edges == {("A", "B"): 0.7}


# -- partitioning -------------------------------------------------------------

def _graph(nodes, edges):
    g = ConceptGraph(list(nodes))
    for a, b, *w in edges:
        g.add_edge(a, b, w[0] if w else 1.0)
    return g


def test_small_graph_is_one_level():
    g = _graph("ABCDEFG", [("A", "B"), ("B", "C")])
    tree = partition(g)
    assert [c.concept for c in tree.root.children] == list("ABCDEFG")
    assert tree.depth_stats() == (1.0, 1)


def test_path_graph_respects_branching():
    nodes = [f"N{i:02d}" for i in range(25)]
    g = _graph(nodes, [(a, b) for a, b in zip(nodes, nodes[1:])])
    tree = partition(g)
    assert sorted(tree.index) == nodes
    for _, node in tree.internal_nodes():
        assert 2 <= len(node.children) <= 10
    assert check_tree(tree, g) == []


def test_two_cliques_split_at_the_bridge():
    left = [f"L{i}" for i in range(8)]
    right = [f"R{i}" for i in range(8)]
    edges = [(a, b) for a, b in itertools.combinations(left, 2)]
    edges += [(a, b) for a, b in itertools.combinations(right, 2)]
    edges.append(("L0", "R0", 0.1))
    g = _graph(left + right, edges)
    tree = partition(g)
    kids = [set(c.leaves()) for c in tree.root.children]
    assert sorted(map(sorted, kids)) == [sorted(left), sorted(right)]
    # the clique cut is the best bipartition by an independent modularity computation
    nodes = left + right
    best = max(
        (frozenset(s) for r in range(1, 16) for s in itertools.combinations(nodes[1:], r)),
        key=lambda s: modularity(g.edges, [set(s), set(nodes) - set(s)]))
    assert {best, frozenset(nodes) - best} == {frozenset(left), frozenset(right)}


def test_disconnected_input_and_isolated_nodes():
    rng = random.Random(0)
    nodes = [f"N{i:03d}" for i in range(120)]
    edges = []
    for block in range(4):
        members = nodes[block * 25:(block + 1) * 25]
        edges += [(a, b) for a, b in zip(members, members[1:])]
        edges += [tuple(rng.sample(members, 2)) for _ in range(10)]
    g = _graph(nodes, edges)  # last 20 nodes are isolated
    tree = partition(g)
    assert check_tree(tree, g) == []
    assert len(tree.root.children) == 5


def test_many_components_are_packed():
    nodes = [f"N{i:03d}" for i in range(60)]
    g = _graph(nodes, [(nodes[i], nodes[i + 1]) for i in range(0, 60, 2)])  # 30 pairs
    tree = partition(g)
    assert check_tree(tree, g) == []
    assert tree.size == 60


@pytest.mark.parametrize("kind", ["osi", "ssi", "ossi"])
@pytest.mark.parametrize("seed", range(3))
def test_built_indices_are_sound(kind, seed):
    o = random_ontology(400, seed=seed)
    store = random_store(o, seed=seed)
    tree, indices, g = build_index(o, store, kind)
    assert check_tree(tree, g) == []
    assert sorted(indices) == o.active_ids()
    assert all(tree.decode(i) == c for c, i in indices.items())


def test_partition_is_deterministic():
    o = random_ontology(600, seed=9)
    store = random_store(o, seed=9)
    a = build_index(o, store, "ossi", part_cfg=PartitionConfig(seed=3))[0]
    b = build_index(o, store, "ossi", part_cfg=PartitionConfig(seed=3))[0]
    assert a == b


def test_empty_graph_rejected():
    with pytest.raises(ValueError):
        partition(ConceptGraph([]))


# -- trees and indices --------------------------------------------------------

def test_children_ordered_by_smallest_concept():
    tree = LabelTree(TreeNode(children=[TreeNode("B"), TreeNode("A")]))
    assert assign_indices(tree) == {"A": (0,), "B": (1,)}


def test_four_cluster_example_shape():
    nested = [[["A", "B"], ["C", "D"]], [["E"], ["F", "G"]]]
    indices = assign_indices(LabelTree(TreeNode.from_nested(nested)))
    assert format_index(indices["A"]) == "0-0-0"
    assert format_index(indices["G"]) == "1-1-1"


@pytest.mark.parametrize("seed", range(10))
def test_index_roundtrip_and_prefix_property(seed):
    rng = random.Random(seed)
    tree = random_tree(rng, rng.randint(1, 80))
    indices = assign_indices(tree)
    assert indices == leaf_paths(tree.to_nested())
    for c, i in indices.items():
        assert tree.decode(i) == c
    for (a, ia), (b, ib) in itertools.combinations(indices.items(), 2):
        for k in range(1, min(len(ia), len(ib)) + 1):
            same_node = tree.node_at(ia[:k]) is tree.node_at(ib[:k])
            assert (ia[:k] == ib[:k]) == same_node


def test_count_prefix_against_traversal():
    rng = random.Random(1)
    tree = random_tree(rng, 70)
    for prefix, node in tree.internal_nodes():
        assert tree.count_prefix(prefix) == len(list(node.leaves()))
        assert tree.count_prefix(prefix) == sum(tree.count_prefix(prefix + (i,))
                                                for i in range(len(node.children)))
    assert tree.count_prefix(()) == 70
    with pytest.raises(KeyError):
        tree.count_prefix((9, 9, 9, 9, 9, 9))


def test_tree_rejects_bad_shapes():
    with pytest.raises(ValueError, match="children"):
        LabelTree(TreeNode(children=[TreeNode(f"C{i}") for i in range(11)]))
    with pytest.raises(ValueError, match="two leaves"):
        LabelTree(TreeNode.from_nested(["A", ["A"]]))
    with pytest.raises(ValueError):
        LabelTree(TreeNode.from_nested(["A", []]))


def test_parse_and_format_index():
    assert parse_index("0-1-3") == (0, 1, 3)
    assert format_index((0, 1, 3)) == "0-1-3"
    with pytest.raises(ValueError):
        parse_index("0-12")


def test_save_load_roundtrip(tmp_path):
    tree = random_tree(random.Random(2), 50)
    save_tree(tree, tmp_path / "t.json", "cfg")
    loaded, indices = load_tree(tmp_path / "t.json")
    assert loaded == tree
    assert indices == assign_indices(tree)


def test_corrupted_tree_file(tmp_path):
    tree = random_tree(random.Random(3), 30)
    save_tree(tree, tmp_path / "t.json", "cfg")
    raw = (tmp_path / "t.json").read_bytes()
    pos = raw.index(b'"K0')
    bad = raw[:pos + 3] + (b"9" if raw[pos + 3:pos + 4] != b"9" else b"8") + raw[pos + 4:]
    (tmp_path / "bad.json").write_bytes(bad)
    with pytest.raises(ChecksumMismatch):
        load_tree(tmp_path / "bad.json")
    (tmp_path / "v.json").write_text(raw.decode().replace('"version":1', '"version":2'))
    with pytest.raises(VersionMismatch):
        load_tree(tmp_path / "v.json")
    (tmp_path / "junk.json").write_bytes(raw[:20])
    with pytest.raises(TreeFileError):
        load_tree(tmp_path / "junk.json")


def test_two_builds_write_identical_files(tmp_path):
    o = random_ontology(300, seed=4)
    store = random_store(o, seed=4)
    for run in ("a", "b"):
        tree, indices, _ = build_index(o, store, "ossi")
        save_index(tree, indices, tmp_path / run, "ossi", "fp")
    for name in ("ossi.tree.json", "ossi.index.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert read_index_tsv(tmp_path / "a" / "ossi.index.tsv") == indices
