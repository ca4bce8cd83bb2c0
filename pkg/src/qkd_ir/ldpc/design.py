"""Degree-distribution calibration by population density evolution.

Messages are tracked as a population of LLR samples under the all-zero
frame assumption (valid for syndrome decoding on a symmetric channel).
The BSC threshold of an ensemble is found by bisection; a small
Nelder-Mead search over the variable-degree fractions then maximizes it for
a target rate.  Used offline to produce ``data/degree_distributions.json``.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.optimize import minimize

from ..core import binary_entropy, make_rng

_CLAMP = 1.0 - 1e-12
_SAT = 40.0


def check_distribution(lam: dict, rate: float) -> dict[int, float]:
    """Concentrated check-degree distribution (two adjacent degrees, edge view)
    giving the design ``rate`` for variable distribution ``lam``."""
    inv_dv = sum(w / d for d, w in lam.items())
    inv_dc = inv_dv * (1.0 - rate)
    dc = 1.0 / inv_dc
    lo = int(np.floor(dc))
    if lo == dc:
        return {lo: 1.0}
    # rho_lo / lo + (1 - rho_lo) / (lo + 1) = inv_dc
    r_lo = (inv_dc - 1.0 / (lo + 1)) / (1.0 / lo - 1.0 / (lo + 1))
    return {lo: float(r_lo), lo + 1: float(1.0 - r_lo)}


def _table(dist: dict, size: int = 4096) -> np.ndarray:
    degs = sorted(dist)
    w = np.array([dist[d] for d in degs], dtype=float)
    counts = np.round(w / w.sum() * size).astype(int)
    return np.repeat(np.array(degs, dtype=np.int64), counts)


@njit(cache=True)
def _de_run(vtab, ctab, L, q, M, iters, seed, punct):
    np.random.seed(seed)
    V = np.empty(M)
    C = np.empty(M)
    for i in range(M):
        if np.random.random() < punct:
            V[i] = 0.0
        else:
            V[i] = L if np.random.random() >= q else -L
    best = M + 1
    stall = 0
    for it in range(iters):
        for i in range(M):
            dc = ctab[np.random.randint(ctab.size)]
            p = 1.0
            for _ in range(dc - 1):
                p *= np.tanh(0.5 * V[np.random.randint(M)])
            if p > _CLAMP:
                p = _CLAMP
            elif p < -_CLAMP:
                p = -_CLAMP
            C[i] = 2.0 * np.arctanh(p)
        bad = 0
        for i in range(M):
            dv = vtab[np.random.randint(vtab.size)]
            if np.random.random() < punct:
                s = 0.0
            else:
                s = L if np.random.random() >= q else -L
            for _ in range(dv - 1):
                s += C[np.random.randint(M)]
            if s > _SAT:
                s = _SAT
            elif s < -_SAT:
                s = -_SAT
            V[i] = s
            if s <= 0.0:
                bad += 1
        if bad == 0:
            return True
        # a stuck error fraction means a fixed point above zero
        if bad < 0.97 * best:
            best = bad
            stall = 0
        else:
            stall += 1
            if stall >= 20:
                return False
    return False


def converges(lam: dict, rate: float, q: float, population: int = 20000,
              iterations: int = 200, seed: int = 0, puncture: float = 0.0) -> bool:
    """Whether population DE drives the error fraction to zero at QBER ``q``."""
    rho = check_distribution(lam, rate)
    L = float(np.log((1 - q) / q))
    return bool(_de_run(_table(lam), _table(rho), L, q, population, iterations, seed, puncture))


def threshold(lam: dict, rate: float, lo: float = 1e-3, hi: float | None = None,
              steps: int = 12, **kw) -> float:
    """Largest QBER at which the ensemble converges (bisection)."""
    if hi is None:
        hi = _capacity_q(rate)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if converges(lam, rate, mid, **kw):
            lo = mid
        else:
            hi = mid
    return lo


def _capacity_q(rate: float) -> float:
    a, b = 1e-9, 0.5
    for _ in range(60):
        mid = 0.5 * (a + b)
        if binary_entropy(mid) < 1.0 - rate:
            a = mid
        else:
            b = mid
    return b


def design_efficiency(lam: dict, rate: float, **kw) -> float:
    """Asymptotic efficiency ``(1 - R) / H(q*)`` of the ensemble."""
    return (1.0 - rate) / binary_entropy(threshold(lam, rate, **kw))


# ---------------------------------------------------------------- Gaussian approximation

_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(64)
_GH_W = _GH_W / _GH_W.sum()


def _phi(m):
    """``1 - E tanh(u/2)`` for a consistent Gaussian ``u ~ N(m, 2m)``."""
    m = np.atleast_1d(np.asarray(m, dtype=float))
    out = np.ones_like(m)
    pos = m > 1e-12
    mm = m[pos][:, None]
    u = mm + np.sqrt(2 * mm) * _GH_X[None, :]
    out[pos] = 1.0 - (np.tanh(0.5 * u) * _GH_W).sum(axis=1)
    return out


def _phi_inv(y):
    """Mean of the consistent Gaussian with ``_phi(m) = y`` (bisection on log m)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lo = np.full_like(y, -12.0)
    hi = np.full_like(y, 7.0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        big = _phi(np.exp(mid)) > y
        lo = np.where(big, mid, lo)
        hi = np.where(big, hi, mid)
    return np.exp(0.5 * (lo + hi))


def _var_error(i: int, mu, q: float):
    """``1 - E tanh(v/2)`` of a degree-``i`` variable message: BSC channel
    LLR plus ``i - 1`` Gaussian check messages of mean ``mu``."""
    mu = np.atleast_1d(mu)[:, None]
    L = np.log((1 - q) / q)
    mean = (i - 1) * mu
    sd = np.sqrt(2 * mean)
    g = mean + sd * _GH_X[None, :]
    t = (1 - q) * np.tanh(0.5 * (L + g)) + q * np.tanh(0.5 * (-L + g))
    return 1.0 - (t * _GH_W).sum(axis=1)


def ga_max_rate(q: float, degrees, rho: dict, grid: int = 300, margin: float = 1e-3):
    """Largest-rate variable distribution (edge view) that converges at ``q``
    under the Gaussian approximation, for fixed check distribution ``rho``.

    Returns ``(lambda, rate)`` or ``None`` when the LP is infeasible.
    """
    from scipy.optimize import linprog

    degs = sorted(degrees)
    L = np.log((1 - q) / q)
    r0 = 1.0 - (1 - 2 * q) * np.tanh(0.5 * L)
    r = r0 * np.geomspace(1e-7, 1.0, grid)
    # mean of the check message produced from variable error level r
    mu = np.zeros_like(r)
    for j, w in rho.items():
        mu += w * _phi_inv(1.0 - (1.0 - r) ** (j - 1))
    A = np.stack([_var_error(i, mu, q) for i in degs], axis=1)
    res = linprog(-1.0 / np.array(degs, dtype=float), A_ub=A, b_ub=r * (1 - margin),
                  A_eq=np.ones((1, len(degs))), b_eq=[1.0], bounds=[(0, 1)] * len(degs),
                  method="highs")
    if not res.success:
        return None
    lam = {d: float(w) for d, w in zip(degs, res.x) if w > 1e-6}
    tot = sum(lam.values())
    lam = {d: w / tot for d, w in lam.items()}
    inv_dv = sum(w / d for d, w in lam.items())
    inv_dc = sum(w / j for j, w in rho.items())
    return lam, 1.0 - inv_dc / inv_dv


def ga_design(rate: float, degrees=(2, 3, 4, 5, 6, 8, 10, 12, 15), dc_range=range(4, 80),
              steps: int = 24) -> tuple[dict, float]:
    """Variable distribution of design ``rate`` with the highest GA threshold.

    Searches concentrated check degrees and bisects on the QBER.  Returns
    the distribution and its GA threshold.
    """
    best = None
    qcap = _capacity_q(rate)
    for dc in dc_range:
        for frac in (0.0, 0.5):
            rho = {dc: 1.0 - frac, dc + 1: frac} if frac else {dc: 1.0}
            lo, hi = 1e-4, qcap
            found = None
            sol = ga_max_rate(lo, degrees, rho)
            if sol is None or sol[1] < rate:
                continue
            for _ in range(steps):
                mid = 0.5 * (lo + hi)
                sol = ga_max_rate(mid, degrees, rho)
                if sol is not None and sol[1] >= rate:
                    lo, found = mid, sol
                else:
                    hi = mid
            if found is not None and (best is None or lo > best[1]):
                best = (found[0], lo, rho)
    if best is None:
        raise ValueError(f"no design found for rate {rate}")
    return best[0], best[1]


def _lam_from(x, degs):
    w = np.abs(np.asarray(x, dtype=float))
    w = np.concatenate([w, [1.0]])
    w /= w.sum()
    return {d: float(v) for d, v in zip(degs, w)}


def optimize_distribution(rate: float, degrees=(2, 3, 10), x0=None, seed: int = 0,
                          max_evals: int = 40, **kw) -> tuple[dict, float]:
    """Search variable-degree fractions that maximize the BSC threshold.

    The last degree's fraction is implied by normalization.  Returns the
    distribution (edge perspective) and its design efficiency.
    """
    degs = sorted(degrees)
    if x0 is None:
        x0 = np.full(len(degs) - 1, 1.0)
    rng = make_rng(seed, 11)
    de_seed = int(rng.integers(2**31))

    def cost(x):
        lam = _lam_from(x, degs)
        return -threshold(lam, rate, seed=de_seed, **kw)

    res = minimize(cost, x0, method="Nelder-Mead",
                   options={"maxfev": max_evals, "xatol": 1e-3, "fatol": 1e-5})
    lam = _lam_from(res.x, degs)
    return lam, (1.0 - rate) / binary_entropy(-res.fun)
