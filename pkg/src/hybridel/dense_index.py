"""Dot-product nearest-neighbour search over entity vectors.

Exact mode scores every row; approximate mode is an inverted file (k-means
cells, ``nprobe`` cells scanned per query). In both modes, results are sorted
by score descending and then by id ascending.
"""

from __future__ import annotations

import logging
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from hybridel.encoding import read_vector_records, write_vector_records

logger = logging.getLogger(__name__)

DEFAULT_K = 16
MODES = ("exact", "approximate")


class DenseIndexError(ValueError):
    pass


class DimensionMismatch(DenseIndexError):
    pass


class ApproximateRecallError(DenseIndexError):
    """Approximate index fell below its configured recall floor."""


@dataclass(frozen=True, order=True)
class ScoredCandidate:
    id: str
    score: float
    method: str


def _exact_dots(rows: np.ndarray, query: np.ndarray) -> list[float]:
    # float32 products are exact in float64; fsum makes each sum correctly rounded
    prods = np.asarray(rows, dtype=np.float64).reshape(-1, len(query)) * np.asarray(query, dtype=np.float64)
    return [math.fsum(r) for r in prods.tolist()]


def _ranked(pairs: list[tuple[str, float]], k: int, method: str) -> list[ScoredCandidate]:
    pairs.sort(key=lambda p: (-p[1], p[0]))
    return [ScoredCandidate(i, s, method) for i, s in pairs[:k]]


def brute_force_search(
    table: Mapping[str, np.ndarray], query: np.ndarray, k: int = DEFAULT_K, method: str = "dense"
) -> list[ScoredCandidate]:
    """Full scan with correctly rounded dot products. Reference for :func:`knn_search`."""
    if k < 0:
        raise ValueError("k must be non-negative")
    query = np.asarray(query)
    for row in table.values():
        if len(row) != len(query):
            raise DimensionMismatch(f"query dim {len(query)} != vector dim {len(row)}")
    if not table:
        return []
    scores = _exact_dots(np.stack([np.asarray(r) for r in table.values()]), query)
    return _ranked(list(zip(table.keys(), scores)), k, method)


@dataclass(frozen=True, eq=False)
class DenseIndex:
    ids: tuple[str, ...]
    matrix: np.ndarray
    mode: str = "exact"
    cells: np.ndarray | None = None
    centroids: np.ndarray | None = None
    nprobe: int = 8
    measured_recall: float | None = None
    _matrix64: np.ndarray = field(init=False, repr=False)
    _members: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if len(self.ids) != self.matrix.shape[0]:
            raise DenseIndexError("ids and matrix rows differ in length")
        self.matrix.setflags(write=False)
        m64 = self.matrix.astype(np.float64)
        m64.setflags(write=False)
        object.__setattr__(self, "_matrix64", m64)
        members: tuple[np.ndarray, ...] = ()
        if self.mode == "approximate":
            assert self.cells is not None and self.centroids is not None
            members = tuple(
                np.flatnonzero(self.cells == c) for c in range(self.centroids.shape[0])
            )
        object.__setattr__(self, "_members", members)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def vector(self, entity_id: str) -> np.ndarray:
        return self.matrix[self.ids.index(entity_id)]

    def table(self) -> dict[str, np.ndarray]:
        return {i: self.matrix[n] for n, i in enumerate(self.ids)}

    def _candidate_rows(self, query64: np.ndarray) -> np.ndarray:
        if self.mode == "exact":
            return np.arange(len(self.ids))
        cscores = self.centroids @ query64
        # empty cells are skipped: their centroids are not recoverable from a saved index
        live = [c for c in range(len(cscores)) if self._members[c].size]
        order = sorted(live, key=lambda c: (-cscores[c], c))[: self.nprobe]
        return np.concatenate([self._members[c] for c in order])

    def search(self, query: np.ndarray, k: int = DEFAULT_K, method: str = "dense") -> list[ScoredCandidate]:
        if k < 0:
            raise ValueError("k must be non-negative")
        query = np.asarray(query)
        if query.shape != (self.dim,):
            raise DimensionMismatch(f"query dim {query.shape} != index dim {self.dim}")
        if k == 0 or not self.ids:
            return []
        q64 = query.astype(np.float64)
        rows = self._candidate_rows(q64)
        if rows.size == 0:
            return []
        approx = self._matrix64[rows] @ q64
        kk = min(k, rows.size)
        kth = -np.partition(-approx, kk - 1)[kk - 1]
        # BLAS rounding differs from the exact rescoring below; widen the cut so
        # no true top-k row is lost to it.
        slack = 1e-9 * (1.0 + float(np.max(np.abs(approx))))
        keep = rows[approx >= kth - slack]
        pairs = list(zip((self.ids[r] for r in keep), _exact_dots(self.matrix[keep], query)))
        return _ranked(pairs, k, method)


def knn_search(index: DenseIndex, query: np.ndarray, k: int = DEFAULT_K) -> list[ScoredCandidate]:
    return index.search(query, k)


def _stack(table: Mapping[str, np.ndarray]) -> tuple[tuple[str, ...], np.ndarray]:
    if not table:
        raise DenseIndexError("cannot build an index from an empty vector table")
    dims = {len(v) for v in table.values()}
    if len(dims) != 1:
        raise DimensionMismatch(f"mixed vector dims {sorted(dims)}")
    ids = tuple(table)
    matrix = np.ascontiguousarray(np.stack([np.asarray(table[i], dtype=np.float32) for i in ids]))
    return ids, matrix


def kmeans(data: np.ndarray, n_cells: int, seed: int = 0, iters: int = 25) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm; returns (centroids, assignment). Empty cells keep their centroid."""
    rng = np.random.default_rng(seed)
    x = data.astype(np.float64)
    centroids = x[rng.choice(len(x), size=n_cells, replace=False)].copy()
    assign = np.full(len(x), -1)
    for _ in range(iters):
        d2 = (x * x).sum(1)[:, None] - 2 * x @ centroids.T + (centroids * centroids).sum(1)[None, :]
        new = d2.argmin(1)
        if np.array_equal(new, assign):
            break
        assign = new
        for c in range(n_cells):
            members = x[assign == c]
            if len(members):
                centroids[c] = members.mean(0)
    return centroids, assign


def _centroids_from_cells(matrix: np.ndarray, cells: np.ndarray, n_cells: int) -> np.ndarray:
    x = matrix.astype(np.float64)
    out = np.zeros((n_cells, matrix.shape[1]))
    for c in range(n_cells):
        members = x[cells == c]
        if len(members):
            out[c] = members.mean(0)
    return out


def measure_recall(index: DenseIndex, queries: Sequence[np.ndarray], k: int = DEFAULT_K) -> float:
    """Mean overlap of ``index`` results with an exact scan, per query."""
    exact = DenseIndex(index.ids, index.matrix, mode="exact")
    total = 0.0
    for q in queries:
        truth = {c.id for c in exact.search(q, k)}
        got = {c.id for c in index.search(q, k)}
        total += len(truth & got) / max(len(truth), 1)
    return total / max(len(queries), 1)


def build_dense_index(
    table: Mapping[str, np.ndarray],
    mode: str = "exact",
    *,
    n_cells: int | None = None,
    nprobe: int = 8,
    recall_floor: float = 0.95,
    validation_queries: Sequence[np.ndarray] | None = None,
    seed: int = 0,
) -> DenseIndex:
    ids, matrix = _stack(table)
    if mode == "exact":
        return DenseIndex(ids, matrix, mode="exact")
    if mode != "approximate":
        raise ValueError(f"mode must be one of {MODES}")

    n_cells = n_cells or max(1, int(round(math.sqrt(len(ids)))))
    n_cells = min(n_cells, len(ids))
    centroids, cells = kmeans(matrix, n_cells, seed=seed)
    index = DenseIndex(ids, matrix, "approximate", cells.astype(np.uint32), centroids, nprobe)

    if validation_queries is None:
        rng = np.random.default_rng(seed + 1)
        picks = rng.choice(len(ids), size=min(100, len(ids)), replace=False)
        scale = float(np.abs(matrix).mean()) or 1.0
        validation_queries = [
            matrix[p] + rng.normal(0.0, 0.5 * scale, size=matrix.shape[1]).astype(np.float32)
            for p in picks
        ]
    recall = measure_recall(index, validation_queries)
    logger.info("approximate index: %d cells, nprobe %d, recall@16 %.4f", n_cells, nprobe, recall)
    if recall < recall_floor:
        raise ApproximateRecallError(
            f"approximate recall@16 {recall:.4f} below floor {recall_floor}"
            f" ({n_cells} cells, nprobe {nprobe}); raise nprobe or use exact mode"
        )
    object.__setattr__(index, "measured_recall", recall)
    return index


def save_index(path: str | Path, index: DenseIndex) -> None:
    """Vector-file records, then ``u32`` cell count and one ``u32`` cell id per vector."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        write_vector_records(fh, index.table())
        if index.mode == "approximate":
            fh.write(struct.pack("<I", index.centroids.shape[0]))
            fh.write(np.asarray(index.cells, dtype="<u4").tobytes())
        else:
            fh.write(struct.pack("<I", 0))
    os.replace(tmp, path)


def load_index(path: str | Path, nprobe: int = 8) -> DenseIndex:
    with open(path, "rb") as fh:
        _, table = read_vector_records(fh)
        raw = fh.read(4)
        if len(raw) != 4:
            raise DenseIndexError("index file missing cell section")
        (n_cells,) = struct.unpack("<I", raw)
        ids, matrix = _stack(table)
        if n_cells == 0:
            if fh.read(1):
                raise DenseIndexError("trailing bytes in exact index file")
            return DenseIndex(ids, matrix, mode="exact")
        cell_bytes = fh.read(4 * len(ids))
        if len(cell_bytes) != 4 * len(ids):
            raise DenseIndexError("truncated cell assignments")
        cells = np.frombuffer(cell_bytes, dtype="<u4").astype(np.uint32)
    if cells.max() >= n_cells:
        raise DenseIndexError("cell id out of range")
    centroids = _centroids_from_cells(matrix, cells, n_cells)
    return DenseIndex(ids, matrix, "approximate", cells, centroids, nprobe)
