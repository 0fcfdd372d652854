import struct

import numpy as np
import pytest

from conceptbench.embeddings import (
    EmbeddingError,
    EmbeddingStore,
    knn,
    load_embeddings,
    match_names,
    read_names,
    read_vectors,
    write_names,
    write_vectors,
)
from conceptbench.ontology import NameRecord

from oracles import cosine, full_scan_knn


def _records(n, concepts=None):
    concepts = concepts or [f"C{i}" for i in range(n)]
    return [NameRecord(i, concepts[i], f"name {i}", True) for i in range(n)]


def _store(matrix, concepts=None):
    matrix = np.asarray(matrix, dtype=np.float32)
    return EmbeddingStore(matrix, _records(len(matrix), concepts))


def test_vector_file_layout_is_bit_exact(tmp_path):
    m = np.array([[1, 2, 3, 4], [0.5, -1, 0, 2]], dtype=np.float32)
    write_vectors(tmp_path / "v.bin", m)
    data = (tmp_path / "v.bin").read_bytes()
    assert data[:4] == b"EMB1"
    assert struct.unpack("<II", data[4:12]) == (2, 4)
    assert data[12:] == m.astype("<f4").tobytes()
    assert np.array_equal(read_vectors(tmp_path / "v.bin"), m)


def test_load_two_by_four(tmp_path):
    write_vectors(tmp_path / "v.bin", np.eye(2, 4, dtype=np.float32))
    write_names(tmp_path / "n.tsv", _records(2))
    store = load_embeddings(tmp_path / "v.bin", tmp_path / "n.tsv")
    assert (store.n, store.dim) == (2, 4)
    assert read_names(tmp_path / "n.tsv") == _records(2)


def test_row_count_mismatch(tmp_path):
    write_vectors(tmp_path / "v.bin", np.eye(2, 4, dtype=np.float32))
    write_names(tmp_path / "n.tsv", _records(3))
    with pytest.raises(EmbeddingError, match="row-count mismatch"):
        load_embeddings(tmp_path / "v.bin", tmp_path / "n.tsv")


def test_bad_magic_and_truncation(tmp_path):
    write_vectors(tmp_path / "v.bin", np.eye(2, 4, dtype=np.float32))
    data = (tmp_path / "v.bin").read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"EMB2" + data[4:])
    with pytest.raises(EmbeddingError, match="magic"):
        read_vectors(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(data[:-3])
    with pytest.raises(EmbeddingError, match="truncated"):
        read_vectors(tmp_path / "short.bin")
    (tmp_path / "tiny.bin").write_bytes(data[:6])
    with pytest.raises(EmbeddingError, match="truncated"):
        read_vectors(tmp_path / "tiny.bin")


def test_zero_and_non_finite_rows_are_named():
    with pytest.raises(EmbeddingError, match="row 1"):
        _store([[1, 0], [0, 0], [0, 1]])
    with pytest.raises(EmbeddingError, match="row 2"):
        _store([[1, 0], [0, 1], [np.nan, 1]])


def test_identity_query_ranks_itself_first():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(10, 8)).astype(np.float32)
    store = _store(m)
    row, sim = knn(store, m[5], 3)[0]
    assert row == 5 and sim == pytest.approx(1.0, abs=1e-12)


def test_orthogonal_query_scores_zero():
    store = _store(np.eye(4, 5))
    q = np.zeros(5)
    q[4] = 1.0
    assert [s for _, s in knn(store, q, 4)] == [0.0] * 4
    # ties resolve to the lower row
    assert [r for r, _ in knn(store, q, 4)] == [0, 1, 2, 3]


def test_query_errors():
    store = _store(np.eye(3))
    with pytest.raises(EmbeddingError, match="dimension"):
        knn(store, np.ones(4), 1)
    with pytest.raises(EmbeddingError, match="zero"):
        knn(store, np.zeros(3), 1)


@pytest.mark.parametrize("seed", range(3))
def test_knn_matches_full_scan(seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(100, 12)).astype(np.float32)
    store = _store(m)
    for _ in range(5):
        q = rng.normal(size=12)
        got = knn(store, q, 10)
        want = full_scan_knn(m, q, 10)
        assert [r for r, _ in got] == [r for r, _ in want]
        assert np.allclose([s for _, s in got], [s for _, s in want], atol=1e-9)


def test_knn_length_and_scale_invariance():
    rng = np.random.default_rng(3)
    store = _store(rng.normal(size=(7, 4)))
    q = rng.normal(size=4)
    assert len(knn(store, q, 20)) == 7
    scaled, plain = knn(store, 3 * q, 5), knn(store, q, 5)
    assert [r for r, _ in scaled] == [r for r, _ in plain]
    assert np.allclose([s for _, s in scaled], [s for _, s in plain], rtol=0, atol=1e-12)


def _with_similarity(target: float) -> np.ndarray:
    """Unit query whose cosine with e0 is exactly ``target``."""
    return np.array([target, np.sqrt(1 - target**2), 0.0])


def test_threshold_boundary():
    store = _store([[1, 0, 0], [0, 0, 1]], ["HIT", "OTHER"])
    below, at = match_names(store, [("q59", _with_similarity(0.59)),
                                    ("q60", _with_similarity(0.60))], 0.6)
    assert below.concept is None and below.matched_name_row is None
    assert below.similarity == pytest.approx(0.59, abs=1e-12)
    assert at.concept == "HIT" and at.matched_name_row == 0


def test_match_identical_vector_gives_similarity_one():
    rng = np.random.default_rng(4)
    m = rng.normal(size=(6, 5)).astype(np.float32)
    res = match_names(_store(m), [("x", m[2])], 0.6)[0]
    assert res.concept == "C2" and res.similarity == pytest.approx(1.0)


def test_threshold_zero_always_assigns():
    rng = np.random.default_rng(5)
    store = _store(rng.normal(size=(5, 3)))
    res = match_names(store, [(str(i), rng.normal(size=3)) for i in range(20)], 0.0)
    assert all(r.concept is not None for r in res)


def test_match_names_matches_brute_force():
    rng = np.random.default_rng(6)
    m = rng.normal(size=(30, 6)).astype(np.float32)
    concepts = [f"C{i // 2}" for i in range(30)]
    store = _store(m, concepts)
    queries = [(f"q{i}", rng.normal(size=6)) for i in range(20)]
    for res, (_, q) in zip(match_names(store, queries, 0.6), queries):
        sims = [cosine(row, q) for row in m]
        best = max(range(30), key=lambda i: (sims[i], -i))
        assert res.similarity == pytest.approx(sims[best], abs=1e-9)
        assert res.concept == (concepts[best] if sims[best] >= 0.6 else None)


def test_threshold_out_of_range():
    with pytest.raises(EmbeddingError):
        match_names(_store(np.eye(2)), [], 1.5)


def test_inverse_l2_mode_is_monotone_in_cosine():
    rng = np.random.default_rng(7)
    m = rng.normal(size=(40, 8))
    cos_store = _store(m)
    l2_store = EmbeddingStore(m.astype(np.float32), _records(40), similarity="inverse_l2")
    q = rng.normal(size=8)
    assert [r for r, _ in knn(cos_store, q, 40)][:10] == [r for r, _ in knn(l2_store, q, 40)][:10]
    assert all(0 < s <= 1 for _, s in knn(l2_store, q, 40))
