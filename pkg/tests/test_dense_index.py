import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridel.dense_index import (
    ApproximateRecallError,
    DenseIndexError,
    DimensionMismatch,
    brute_force_search,
    build_dense_index,
    knn_search,
    load_index,
    measure_recall,
    save_index,
)


def _table(seed, n, dim):
    rng = np.random.default_rng(seed)
    return {f"e{i:04d}": rng.standard_normal(dim).astype(np.float32) for i in range(n)}


def test_build_counts_and_totality():
    t = _table(0, 3, 4)
    idx = build_dense_index(t)
    assert len(idx) == 3
    assert {c.id for c in knn_search(idx, t["e0001"], 3)} == set(t)


def test_empty_table_rejected():
    with pytest.raises(DenseIndexError):
        build_dense_index({})


def test_k_zero_and_single_vector():
    v = np.array([0.5, -2.0, 1.0], dtype=np.float32)
    idx = build_dense_index({"only": v})
    assert knn_search(idx, v, 0) == []
    (hit,) = knn_search(idx, v, 5)
    assert hit.id == "only" and hit.score == 5.25 and hit.method == "dense"


def test_orthogonal_basis_and_ties():
    t = {"a": np.array([1, 0], np.float32), "b": np.array([0, 1], np.float32)}
    res = brute_force_search(t, np.array([1, 0], np.float32), 2)
    assert [(c.id, c.score) for c in res] == [("a", 1.0), ("b", 0.0)]
    tied = {"z": np.array([1, 1], np.float32), "m": np.array([1, 1], np.float32), "a": np.array([2, 0], np.float32)}
    assert [c.id for c in knn_search(build_dense_index(tied), np.array([1, 1], np.float32), 3)] == ["a", "m", "z"]


def test_dimension_mismatch():
    idx = build_dense_index(_table(0, 5, 4))
    with pytest.raises(DimensionMismatch):
        knn_search(idx, np.zeros(3, np.float32), 2)
    with pytest.raises(DimensionMismatch):
        brute_force_search(_table(0, 5, 4), np.zeros(3, np.float32), 2)


@given(st.integers(1, 60), st.integers(1, 12), st.integers(0, 70), st.integers(0, 2**32 - 1), st.booleans())
def test_exact_matches_brute_force(n, dim, k, seed, quantize):
    table = _table(seed, n, dim)
    if quantize:
        # coarse values force many exact score ties
        table = {i: np.round(v).astype(np.float32) for i, v in table.items()}
    idx = build_dense_index(table)
    q = np.random.default_rng(seed + 1).standard_normal(dim).astype(np.float32)
    if quantize:
        q = np.round(q).astype(np.float32)
    got = knn_search(idx, q, k)
    assert got == brute_force_search(table, q, k)
    assert len(got) == min(k, n)
    for a, b in zip(got, got[1:]):
        assert a.score > b.score or (a.score == b.score and a.id < b.id)


def _clustered(seed, n, dim, centers=25):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((centers, dim)) * 3
    return {f"e{i:04d}": (c[i % centers] + rng.standard_normal(dim) * 0.3).astype(np.float32) for i in range(n)}


def test_approximate_reports_recall():
    table = _clustered(3, 600, 16)
    idx = build_dense_index(table, "approximate", nprobe=8, seed=1)
    assert idx.measured_recall is not None and idx.measured_recall >= 0.95
    # probing every cell is exhaustive
    full = build_dense_index(table, "approximate", nprobe=10**6)
    q = list(table.values())[:20]
    assert measure_recall(full, q) == 1.0


def test_approximate_floor_fails_loudly():
    with pytest.raises(ApproximateRecallError, match="below floor"):
        build_dense_index(_table(4, 600, 16), "approximate", n_cells=40, nprobe=1, recall_floor=0.99)


@pytest.mark.parametrize("mode", ["exact", "approximate"])
def test_save_load_round_trip(tmp_path, mode):
    table = _table(5, 300, 8)
    idx = build_dense_index(table, mode, recall_floor=0.0, nprobe=3)
    path = tmp_path / "idx.elvc"
    save_index(path, idx)
    assert not (tmp_path / "idx.elvc.tmp").exists()
    back = load_index(path, nprobe=3)
    assert back.ids == idx.ids and back.mode == mode
    assert back.matrix.tobytes() == idx.matrix.tobytes()
    rng = np.random.default_rng(9)
    for _ in range(20):
        q = rng.standard_normal(8).astype(np.float32)
        assert back.search(q, 16) == idx.search(q, 16)


def test_load_rejects_truncated(tmp_path):
    path = tmp_path / "idx.elvc"
    save_index(path, build_dense_index(_table(5, 10, 4), "approximate", n_cells=3, recall_floor=0.0))
    path.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(DenseIndexError):
        load_index(path)
