"""Syndrome-aware sum-product (belief propagation) decoding.

LLR sign convention, shared by every module: a positive log-likelihood ratio
means bit value 0 is more likely, ``L = log P(0) / P(1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .matrix import ParityCheckMatrix

#: magnitude used for bits whose value is known exactly
SATURATION = 25.0
_TANH_CLAMP = 1.0 - 1e-12


def bsc_llr(q: float) -> float:
    """Channel LLR magnitude of a binary symmetric channel."""
    return float(np.log((1.0 - q) / q))


@njit(cache=True)
def _spa(check_ptr, edge_var, var_ptr, var_edges, llr, syndrome, max_iter, sat, clamp):
    m = check_ptr.size - 1
    N = llr.size
    E = edge_var.size
    c2v = np.zeros(E)
    t = np.empty(E)
    post = llr.copy()
    hard = np.empty(N, dtype=np.uint8)
    for v in range(N):
        hard[v] = 1 if post[v] < 0 else 0
    it = 0
    while True:
        # syndrome check of the current hard decision
        ok = True
        for c in range(m):
            acc = syndrome[c]
            for e in range(check_ptr[c], check_ptr[c + 1]):
                acc ^= hard[edge_var[e]]
            if acc:
                ok = False
                break
        if ok:
            return hard, post, it, True
        if it >= max_iter:
            return hard, post, it, False
        it += 1
        # check-node update, tanh rule with the syndrome bit as sign
        for c in range(m):
            lo = check_ptr[c]
            hi = check_ptr[c + 1]
            prod = 1.0
            zeros = 0
            for e in range(lo, hi):
                x = post[edge_var[e]] - c2v[e]
                if x > sat:
                    x = sat
                elif x < -sat:
                    x = -sat
                te = np.tanh(0.5 * x)
                t[e] = te
                if te == 0.0:
                    zeros += 1
                else:
                    prod *= te
            sign = -1.0 if syndrome[c] else 1.0
            for e in range(lo, hi):
                te = t[e]
                if zeros == 0:
                    ext = prod / te
                elif zeros == 1 and te == 0.0:
                    ext = prod
                else:
                    ext = 0.0
                if ext > clamp:
                    ext = clamp
                elif ext < -clamp:
                    ext = -clamp
                c2v[e] = sign * 2.0 * np.arctanh(ext)
        # variable-node update
        for v in range(N):
            s = llr[v]
            for k in range(var_ptr[v], var_ptr[v + 1]):
                s += c2v[var_edges[k]]
            post[v] = s
            hard[v] = 1 if s < 0 else 0


@dataclass
class DecodeResult:
    hard_decision: np.ndarray
    converged: bool
    posteriors: np.ndarray
    iterations: int


def spa_decode(H: ParityCheckMatrix, llr_init, target_syndrome, max_iterations: int = 50) -> DecodeResult:
    """Recover the frame whose syndrome is ``target_syndrome``.

    ``converged`` is true exactly when the returned hard decision satisfies
    the target syndrome; non-convergence within the budget is reported, not
    raised.
    """
    llr = np.ascontiguousarray(llr_init, dtype=np.float64)
    if llr.size != H.N:
        raise ValueError(f"need {H.N} LLRs, got {llr.size}")
    syn = np.ascontiguousarray(target_syndrome, dtype=np.uint8)
    if syn.size != H.m:
        raise ValueError(f"need {H.m} syndrome bits, got {syn.size}")
    hard, post, it, ok = _spa(H.check_ptr, H.edge_var.astype(np.int64), H.var_ptr, H.var_edges,
                              llr, syn, int(max_iterations), SATURATION, _TANH_CLAMP)
    return DecodeResult(hard, bool(ok), post, int(it))
