"""Symmetric CSR storage, matrix-vector products and graph queries."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.io
import scipy.sparse as sp

_SYM_RTOL = 1e-12


class CsrMatrix:
    """Immutable sparse symmetric matrix in compressed-sparse-row form.

    The full symmetric pattern is stored. Duplicate entries given at
    construction are summed; explicit zeros are kept because they define the
    adjacency graph.

    Parameters
    ----------
    n : int
        Dimension.
    row_offsets, col_indices, values : array_like
        Standard CSR arrays. Column indices must be strictly increasing within
        each row.
    check : bool
        Validate the structural invariants (symmetry, positive diagonal).
    """

    def __init__(self, n, row_offsets, col_indices, values, check=True):
        self._csr = sp.csr_matrix(
            (np.asarray(values, dtype=float), np.asarray(col_indices), np.asarray(row_offsets)),
            shape=(n, n),
        )
        for arr in (self._csr.data, self._csr.indices, self._csr.indptr):
            arr.setflags(write=False)
        self._row_blocks = None
        if check:
            self._validate()

    @classmethod
    def from_coo(cls, n, rows, cols, vals, check=True):
        """Build from coordinate triplets, summing duplicates."""
        coo = sp.coo_matrix((np.asarray(vals, dtype=float), (rows, cols)), shape=(n, n))
        return cls.from_scipy(coo, check=check)

    @classmethod
    def from_scipy(cls, mat, check=True):
        csr = sp.csr_matrix(mat, dtype=float, copy=True)
        if csr.shape[0] != csr.shape[1]:
            raise ValueError(f"matrix must be square, got shape {csr.shape}")
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.indptr, csr.indices, csr.data, check=check)

    @classmethod
    def from_dense(cls, arr, check=True):
        return cls.from_scipy(sp.csr_matrix(np.asarray(arr, dtype=float)), check=check)

    def _validate(self):
        csr = self._csr
        ptr, idx = csr.indptr, csr.indices
        if ptr[0] != 0 or np.any(np.diff(ptr) < 0) or ptr[-1] != len(idx):
            raise ValueError("row_offsets must be nondecreasing from 0 to nnz")
        if len(idx) and (idx.min() < 0 or idx.max() >= self.n):
            raise ValueError("column index out of range")
        if not np.isfinite(csr.data).all():
            raise ValueError("matrix values must be finite")
        rows = np.repeat(np.arange(self.n), np.diff(ptr))
        same_row = rows[1:] == rows[:-1]
        if np.any(np.diff(idx)[same_row] <= 0):
            raise ValueError("column indices must be strictly increasing within each row")
        pattern = sp.csr_matrix((np.ones(len(idx)), idx, ptr), shape=csr.shape)
        if (pattern != pattern.T).nnz:
            raise ValueError("matrix is not structurally symmetric")
        diff = abs(csr - csr.T).tocsr()
        if diff.nnz:
            bound = abs(csr).maximum(abs(csr.T)).tocsr()
            bound.data = _SYM_RTOL * np.maximum(bound.data, 1.0)
            if (diff > bound).nnz:
                raise ValueError("matrix values are not symmetric")
        d = csr.diagonal()
        has_diag = np.zeros(self.n, dtype=bool)
        has_diag[rows[idx == rows]] = True
        if not has_diag.all() or np.any(d <= 0):
            raise ValueError("all diagonal entries must be present and strictly positive")

    @property
    def n(self) -> int:
        return self._csr.shape[0]

    @property
    def shape(self):
        return self._csr.shape

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def row_offsets(self):
        return self._csr.indptr

    @property
    def col_indices(self):
        return self._csr.indices

    @property
    def values(self):
        return self._csr.data

    @property
    def nbytes(self) -> int:
        c = self._csr
        return c.data.nbytes + c.indices.nbytes + c.indptr.nbytes

    def to_scipy(self) -> sp.csr_matrix:
        """Return a copy as a :class:`scipy.sparse.csr_matrix`."""
        return self._csr.copy()

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def scaled(self, factor: float) -> CsrMatrix:
        return CsrMatrix(self.n, self.row_offsets, self.col_indices, self.values * factor, check=False)

    def matvec(self, x, workers=None):
        """Return ``A @ x``. ``x`` may be a vector or an ``(n, k)`` block.

        With ``workers > 1`` disjoint row blocks are computed concurrently; each
        row is still summed left to right, so the result is bitwise identical to
        the sequential product.
        """
        x = np.asarray(x)
        if x.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: matrix is {self.n}, vector is {x.shape[0]}")
        if not workers or workers <= 1:
            return self._csr @ x
        blocks = self._blocks(workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: b @ x, blocks))
        return np.concatenate(parts, axis=0)

    __matmul__ = matvec

    def _blocks(self, workers):
        if self._row_blocks is None or len(self._row_blocks) != workers:
            cuts = np.linspace(0, self.n, workers + 1).astype(int)
            self._row_blocks = [self._csr[a:b] for a, b in zip(cuts[:-1], cuts[1:])]
        return self._row_blocks

    def graph(self) -> AdjacencyGraph:
        return AdjacencyGraph.from_matrix(self)

    def __repr__(self):
        return f"CsrMatrix(n={self.n}, nnz={self.nnz})"


def matvec(A: CsrMatrix, x, workers=None):
    """Sparse matrix-vector product ``A x``."""
    return A.matvec(x, workers=workers)


class AdjacencyGraph:
    """Undirected graph of the off-diagonal sparsity pattern (no self loops)."""

    def __init__(self, n, indptr, indices):
        self.n = int(n)
        self.indptr = np.asarray(indptr)
        self.indices = np.asarray(indices)

    @classmethod
    def from_matrix(cls, A):
        """Pattern graph of a :class:`CsrMatrix` or any scipy sparse matrix."""
        if not isinstance(A, CsrMatrix):
            A = sp.csr_matrix(A)
            A.sort_indices()
        ptr, idx = (A.row_offsets, A.col_indices) if isinstance(A, CsrMatrix) else (A.indptr, A.indices)
        n = A.shape[0]
        rows = np.repeat(np.arange(n), np.diff(ptr))
        keep = rows != idx
        counts = np.bincount(rows[keep], minlength=n)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return cls(n, indptr, idx[keep].copy())

    @classmethod
    def from_edges(cls, n, edges):
        edges = np.asarray(edges, dtype=int).reshape(-1, 2)
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        m = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        m.sum_duplicates()
        m.sort_indices()
        m.setdiag(0)
        m.eliminate_zeros()
        return cls(n, m.indptr, m.indices)

    def neighbors(self, i):
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def degree(self):
        return np.diff(self.indptr)

    def to_scipy(self):
        data = np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def bfs_levels(self, j, k, mark=None):
        """Breadth-first levels ``[{j}, ring 1, ..., ring k]`` as index arrays.

        ``mark`` is an optional int scratch array of length ``n`` filled with
        values other than ``j``; it is left dirty and lets repeated calls skip
        the allocation.
        """
        if mark is None:
            mark = np.full(self.n, -1, dtype=np.int64)
        mark[j] = j
        levels = [np.array([j])]
        frontier = levels[0]
        for _ in range(k):
            if len(frontier) == 0:
                break
            if len(frontier) == 1:
                cand = self.neighbors(frontier[0])
            else:
                cand = np.concatenate([self.neighbors(f) for f in frontier])
            cand = np.unique(cand[mark[cand] != j])
            mark[cand] = j
            levels.append(cand)
            frontier = cand
        return levels


def graph_distance_ball(G: AdjacencyGraph, j: int, k: int) -> np.ndarray:
    """Sorted array of all nodes within graph distance ``k`` of node ``j``."""
    if not 0 <= j < G.n:
        raise IndexError(f"node {j} out of range for graph with {G.n} nodes")
    if k < 0:
        raise ValueError("distance must be nonnegative")
    return np.sort(np.concatenate(G.bfs_levels(j, k)))


def read_matrix_market(path) -> CsrMatrix:
    """Read a real symmetric coordinate Matrix Market file.

    Only the lower triangle is stored on disk; the full pattern is restored.
    """
    with open(path) as fh:
        header = fh.readline().lower().split()
    if len(header) < 5 or header[0] != "%%matrixmarket" or header[2] != "coordinate":
        raise ValueError(f"{path}: not a coordinate Matrix Market file")
    if header[4] != "symmetric":
        raise ValueError(f"{path}: expected a symmetric matrix, header says {header[4]!r}")
    return CsrMatrix.from_scipy(scipy.io.mmread(path, spmatrix=True))


def write_matrix_market(path, A: CsrMatrix, comment=""):
    """Write ``A`` as ``%%MatrixMarket matrix coordinate real symmetric``."""
    scipy.io.mmwrite(path, A.to_scipy(), comment=comment, field="real", symmetry="symmetric")
