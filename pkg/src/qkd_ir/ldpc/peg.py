"""Progressive-edge-growth construction of parity-check matrices.

Edges are placed one at a time, variable nodes in order of increasing
degree.  Each new edge of a variable goes to a check node as far away as
possible in the current Tanner graph (breadth-first search bounded by
``max_depth`` expansions), preferring the lowest current check degree.
Randomness for tie-breaking comes from a Philox stream, so the result is a
deterministic function of the seed.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..core import make_rng
from .matrix import ParityCheckMatrix


class InfeasibleDistribution(ValueError):
    pass


def degree_counts(N: int, distribution: dict, perspective: str = "edge") -> dict[int, int]:
    """Integer number of columns per degree for a distribution over degrees.

    ``perspective`` is ``"edge"`` (fraction of edges attached to degree-d
    columns, the usual lambda coefficients) or ``"node"`` (fraction of
    columns).  Rounding keeps the total at exactly ``N`` columns.
    """
    degs = sorted(int(d) for d in distribution)
    w = np.array([float(distribution[d]) for d in degs])
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-6):
        raise InfeasibleDistribution("distribution must be non-negative and sum to 1")
    if any(d < 1 for d in degs):
        raise InfeasibleDistribution("degrees must be positive")
    if perspective == "edge":
        node = w / np.array(degs)
        node /= node.sum()
    elif perspective == "node":
        node = w
    else:
        raise ValueError(f"unknown perspective {perspective!r}")
    raw = node * N
    counts = np.floor(raw).astype(int)
    short = N - counts.sum()
    for i in np.argsort(-(raw - counts), kind="stable")[:short]:
        counts[i] += 1
    return {d: int(c) for d, c in zip(degs, counts) if c > 0}


@njit(cache=True)
def _move_up(c, cdeg, bucket, bsize, bpos):
    L = cdeg[c]
    pos = bpos[c]
    last = bucket[L, bsize[L] - 1]
    bucket[L, pos] = last
    bpos[last] = pos
    bsize[L] -= 1
    L += 1
    bucket[L, bsize[L]] = c
    bpos[c] = bsize[L]
    bsize[L] += 1
    cdeg[c] = L


@njit(cache=True)
def _pick_unreached(cur, stamp_c, cdeg, bucket, bsize, rnd, rptr, chk_cap):
    nr = rnd.size
    for L in range(chk_cap + 1):
        size = bsize[L]
        if size == 0:
            continue
        for _ in range(24):
            j = rnd[rptr[0] % nr] % np.uint64(size)
            rptr[0] += 1
            c = bucket[L, j]
            if stamp_c[c] != cur:
                return c
        # dense reached set at this level: scan from a random offset
        off = rnd[rptr[0] % nr] % np.uint64(size)
        rptr[0] += 1
        for t in range(size):
            c = bucket[L, (off + np.uint64(t)) % np.uint64(size)]
            if stamp_c[c] != cur:
                return c
    return -1


@njit(cache=True)
def _peg_kernel(N, m, var_deg, max_depth, chk_cap, rnd, ckey):
    dvmax = 1
    for v in range(N):
        if var_deg[v] > dvmax:
            dvmax = var_deg[v]
    var_adj = np.full((N, dvmax), -1, dtype=np.int64)
    vdeg = np.zeros(N, dtype=np.int64)
    chk_adj = np.full((m, chk_cap), -1, dtype=np.int64)
    cdeg = np.zeros(m, dtype=np.int64)
    bucket = np.empty((chk_cap + 1, m), dtype=np.int64)
    bsize = np.zeros(chk_cap + 1, dtype=np.int64)
    bpos = np.empty(m, dtype=np.int64)
    for c in range(m):
        bucket[0, c] = c
        bpos[c] = c
    bsize[0] = m
    stamp_c = np.zeros(m, dtype=np.int64)
    stamp_v = np.zeros(N, dtype=np.int64)
    fr = np.empty(m, dtype=np.int64)
    nfr = np.empty(m, dtype=np.int64)
    rptr = np.zeros(1, dtype=np.int64)
    nr = rnd.size
    cur = 0
    for v in range(N):
        for k in range(var_deg[v]):
            cur += 1
            stamp_v[v] = cur
            flen = 0
            for t in range(vdeg[v]):
                c = var_adj[v, t]
                stamp_c[c] = cur
                fr[flen] = c
                flen += 1
            nreached = flen
            chosen = -1
            depth = 0
            while k > 0 and depth < max_depth:
                nlen = 0
                for i in range(flen):
                    c = fr[i]
                    for t in range(cdeg[c]):
                        u = chk_adj[c, t]
                        if stamp_v[u] == cur:
                            continue
                        stamp_v[u] = cur
                        for s in range(vdeg[u]):
                            c2 = var_adj[u, s]
                            if stamp_c[c2] != cur:
                                stamp_c[c2] = cur
                                nfr[nlen] = c2
                                nlen += 1
                if nlen == 0:
                    break
                nreached += nlen
                if nreached == m:
                    # everything reachable: take the farthest checks
                    best = -1
                    bestkey = np.uint64(0)
                    salt = rnd[rptr[0] % nr]
                    rptr[0] += 1
                    for i in range(nlen):
                        c = nfr[i]
                        key = ckey[c] ^ salt
                        if best < 0 or cdeg[c] < cdeg[best] or (cdeg[c] == cdeg[best] and key < bestkey):
                            best = c
                            bestkey = key
                    chosen = best
                    break
                for i in range(nlen):
                    fr[i] = nfr[i]
                flen = nlen
                depth += 1
            if chosen < 0:
                chosen = _pick_unreached(cur, stamp_c, cdeg, bucket, bsize, rnd, rptr, chk_cap)
            if chosen < 0 or cdeg[chosen] >= chk_cap:
                return var_adj, vdeg, False
            var_adj[v, vdeg[v]] = chosen
            vdeg[v] += 1
            chk_adj[chosen, cdeg[chosen]] = v
            _move_up(chosen, cdeg, bucket, bsize, bpos)
    return var_adj, vdeg, True


def peg_construct(N: int, degree_distribution: dict, m: int, seed: int = 0,
                  perspective: str = "edge", max_depth: int | None = None) -> ParityCheckMatrix:
    """Build an ``m x N`` matrix whose column degrees follow the distribution.

    Parameters
    ----------
    degree_distribution : dict
        Degree -> fraction, in the given ``perspective`` (see
        :func:`degree_counts`).
    max_depth : int, optional
        Bound on breadth-first expansions per edge.  Unbounded by default
        for frames up to 8192 columns, 3 above that.

    Raises
    ------
    InfeasibleDistribution
        When a column degree exceeds ``m`` or the edges cannot be placed.
    """
    if not 0 < m < N:
        raise InfeasibleDistribution("need 0 < m < N")
    counts = degree_counts(N, degree_distribution, perspective)
    if max(counts) > m:
        raise InfeasibleDistribution(f"column degree {max(counts)} exceeds the {m} available rows")
    var_deg = np.concatenate([np.full(c, d, dtype=np.int64) for d, c in sorted(counts.items())])
    E = int(var_deg.sum())
    if max_depth is None:
        max_depth = N if N <= 8192 else 3
    chk_cap = int(np.ceil(E / m)) + 2
    rng = make_rng(seed, 7, N, m)
    rnd = rng.integers(0, 2**63, size=4 * E + 1024, dtype=np.uint64)
    ckey = rng.integers(0, 2**63, size=m, dtype=np.uint64)
    var_adj, vdeg, ok = _peg_kernel(N, m, var_deg, int(max_depth), chk_cap, rnd, ckey)
    if not ok:
        raise InfeasibleDistribution("could not place every edge")
    cols = np.repeat(np.arange(N), vdeg)
    mask = np.arange(var_adj.shape[1])[None, :] < vdeg[:, None]
    rows = var_adj[mask]
    return ParityCheckMatrix(N, m, rows, cols)
