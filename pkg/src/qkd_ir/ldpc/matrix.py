"""Sparse binary parity-check matrices."""

from __future__ import annotations

import hashlib

import numpy as np
import scipy.sparse as sp


class ParityCheckMatrix:
    """An ``m x N`` binary matrix held as row- and column-adjacency (CSR/CSC).

    Parameters
    ----------
    N, m : int
        Number of columns (frame size) and rows (syndrome length).
    rows, cols : array_like
        Row and column index of every non-zero entry.

    Raises
    ------
    ValueError
        On out-of-range indices, duplicate edges, empty columns, or a
        rate outside (0, 1).
    """

    def __init__(self, N: int, m: int, rows, cols):
        N, m = int(N), int(m)
        if N <= 0 or m <= 0:
            raise ValueError("matrix dimensions must be positive")
        if not m < N:
            raise ValueError(f"rate 1 - m/N must lie in (0, 1); got N={N}, m={m}")
        r = np.asarray(rows, dtype=np.int64).ravel()
        c = np.asarray(cols, dtype=np.int64).ravel()
        if r.size != c.size:
            raise ValueError("rows and cols must have equal length")
        if r.size and (r.min() < 0 or r.max() >= m or c.min() < 0 or c.max() >= N):
            raise ValueError("edge index out of range")
        order = np.lexsort((c, r))
        r, c = r[order], c[order]
        if r.size > 1 and np.any((np.diff(r) == 0) & (np.diff(c) == 0)):
            raise ValueError("duplicate edge")
        col_deg = np.bincount(c, minlength=N)
        if np.any(col_deg == 0):
            raise ValueError(f"column {int(np.argmin(col_deg))} has degree 0")
        self.N = N
        self.m = m
        # check-major edge order
        self.edge_check = r.astype(np.int32)
        self.edge_var = c.astype(np.int32)
        self.check_ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=m), out=self.check_ptr[1:])
        # variable-major view of the same edges
        vorder = np.lexsort((r, c))
        self.var_edges = vorder.astype(np.int64)
        self.var_ptr = np.zeros(N + 1, dtype=np.int64)
        np.cumsum(col_deg, out=self.var_ptr[1:])
        self._csr = None

    @classmethod
    def from_dense(cls, H) -> "ParityCheckMatrix":
        H = np.asarray(H)
        r, c = np.nonzero(H)
        return cls(H.shape[1], H.shape[0], r, c)

    @property
    def rate(self) -> float:
        return 1.0 - self.m / self.N

    @property
    def n_edges(self) -> int:
        return int(self.edge_var.size)

    @property
    def col_degrees(self) -> np.ndarray:
        return np.diff(self.var_ptr)

    @property
    def row_degrees(self) -> np.ndarray:
        return np.diff(self.check_ptr)

    def row(self, j: int) -> np.ndarray:
        return self.edge_var[self.check_ptr[j]:self.check_ptr[j + 1]]

    def col(self, i: int) -> np.ndarray:
        return np.sort(self.edge_check[self.var_edges[self.var_ptr[i]:self.var_ptr[i + 1]]])

    def to_sparse(self) -> sp.csr_matrix:
        if self._csr is None:
            data = np.ones(self.n_edges, dtype=np.int32)
            self._csr = sp.csr_matrix((data, (self.edge_check, self.edge_var)), shape=(self.m, self.N))
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray().astype(np.uint8)

    def syndrome(self, bits) -> np.ndarray:
        """``H x`` over GF(2) for a frame of length ``N``."""
        x = np.asarray(getattr(bits, "bits", bits), dtype=np.int32).ravel()
        if x.size != self.N:
            raise ValueError(f"frame length {x.size} does not match N={self.N}")
        return (self.to_sparse() @ x & 1).astype(np.uint8)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.array([self.N, self.m], dtype=np.int64).tobytes())
        h.update(self.edge_check.tobytes())
        h.update(self.edge_var.tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, ParityCheckMatrix):
            return NotImplemented
        return (self.N == other.N and self.m == other.m
                and np.array_equal(self.edge_check, other.edge_check)
                and np.array_equal(self.edge_var, other.edge_var))

    def __repr__(self):
        return f"ParityCheckMatrix(N={self.N}, m={self.m}, rate={self.rate:.4f}, edges={self.n_edges})"


def has_four_cycle(H: ParityCheckMatrix) -> bool:
    """True when two columns share two or more rows (a cycle of length 4)."""
    A = H.to_sparse().astype(np.int32)
    overlap = (A.T @ A).tocoo()
    off = overlap.row != overlap.col
    return bool(np.any(overlap.data[off] >= 2))


def girth(H: ParityCheckMatrix, limit: int | None = None) -> float:
    """Length of the shortest cycle in the Tanner graph (``inf`` if acyclic).

    Breadth-first search from every variable node (or the first ``limit``).
    """
    N = H.N
    best = np.inf
    starts = range(N) if limit is None else range(min(limit, N))
    for s in starts:
        # node ids: variables 0..N-1, checks N..N+m-1
        dist = {s: 0}
        parent = {s: -1}
        frontier = [s]
        while frontier and 2 * dist[frontier[0]] < best:
            nxt = []
            for u in frontier:
                if u < N:
                    nbrs = H.col(u) + N
                else:
                    nbrs = H.row(u - N)
                for w in nbrs.tolist():
                    if w == parent[u]:
                        continue
                    if w in dist:
                        best = min(best, dist[u] + dist[w] + 1)
                    else:
                        dist[w] = dist[u] + 1
                        parent[w] = u
                        nxt.append(w)
            frontier = nxt
    return best
