"""Families of LDPC codes sharing one frame size, for rate-adaptive reconciliation.

A set is described by a JSON manifest entry (``data/codesets.json``)::

    {"N": 65536, "d_fraction": 0.1, "f_design": 1.1,
     "q_grid": [0.01, ..., 0.11], "seed": 1,
     "codes": [{"m": ..., "distribution": "r0.80"}, {"alist": "path"}, ...]}

Code ``i`` is sized so that with all ``d`` modulated positions punctured its
adapted rate equals ``1 - f_design * H(q_i)``.  Matrices come from PEG with
the degree distribution whose design rate is nearest, and are cached as
alist files so that expensive constructions happen once.  Entries with an
``alist`` key import an externally supplied matrix instead.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..core import binary_entropy, make_rng
from .alist import load_alist, save_alist
from .matrix import ParityCheckMatrix
from .peg import peg_construct

log = logging.getLogger(__name__)


class ManifestError(ValueError):
    """Missing, malformed or inconsistent code-set manifest."""


def data_path(name: str) -> Path:
    return Path(str(resources.files("qkd_ir") / "data" / name))


def cache_dir() -> Path:
    """Where generated matrices are stored (``QKD_IR_CODE_DIR`` overrides)."""
    env = os.environ.get("QKD_IR_CODE_DIR")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "qkd_ir" / "codes"


def load_distributions(path=None) -> dict[str, dict]:
    """Named variable-degree distributions (edge perspective) with design rates."""
    path = Path(path) if path else data_path("degree_distributions.json")
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read degree distributions: {exc}") from None
    out = {}
    for name, entry in raw.items():
        lam = {int(d): float(w) for d, w in entry["lambda"].items()}
        out[name] = {"rate": float(entry["rate"]), "lambda": lam}
    return out


def nearest_distribution(rate: float, distributions: dict) -> str:
    return min(distributions, key=lambda k: (abs(distributions[k]["rate"] - rate), k))


def log_q_grid(lo: float = 0.01, hi: float = 0.11, count: int = 10) -> list[float]:
    return [float(v) for v in np.geomspace(lo, hi, count)]


def syndrome_length(N: int, d: int, q: float, f_design: float) -> int:
    """Rows needed so the fully punctured code matches ``f_design`` at ``q``."""
    return d + int(round((N - d) * f_design * binary_entropy(q)))


@dataclass
class CodeSet:
    """Codes of one frame size ordered by decreasing base rate.

    Attributes
    ----------
    codes : list of ParityCheckMatrix
    modulated : list of ndarray
        The ``d`` reserved column indices of each code (uniformly random,
        fixed by the set's seed).
    q_design : list of float
        QBER each code was sized for (``nan`` for imported matrices).
    """

    N: int
    d: int
    f_design: float
    codes: list
    modulated: list
    q_design: list
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.codes:
            raise ManifestError("empty code set")
        if any(H.N != self.N for H in self.codes):
            raise ManifestError("all codes of a set must share the frame size")
        rates = [H.rate for H in self.codes]
        if any(b >= a for a, b in zip(rates, rates[1:])):
            raise ManifestError("code rates must be strictly decreasing")
        if not 0 <= self.d < self.N:
            raise ManifestError("d out of range")

    @property
    def n(self) -> int:
        return self.N - self.d

    @property
    def rates(self) -> list[float]:
        return [H.rate for H in self.codes]

    def punctured_rate(self, i: int) -> float:
        """Adapted rate of code ``i`` with every modulated position punctured."""
        return (self.N - self.codes[i].m) / (self.N - self.d)

    def selection_table(self) -> list[tuple[float, int]]:
        """``(q_upper, index)`` pairs: code ``index`` serves estimates below ``q_upper``.

        Boundaries sit where the target rate ``1 - f_design H(q)`` crosses the
        midpoint between adjacent fully punctured rates.
        """
        table = []
        pr = [self.punctured_rate(i) for i in range(len(self.codes))]
        for i in range(len(pr) - 1):
            mid = 0.5 * (pr[i] + pr[i + 1])
            h = (1.0 - mid) / self.f_design
            table.append((_inverse_entropy(h) if 0 < h < 1 else 0.5, i))
        table.append((0.5, len(pr) - 1))
        return table

    def select(self, q_hat: float) -> int:
        """Index of the base code for an estimated QBER."""
        if not 0 <= q_hat < 0.5:
            raise ValueError(f"q_hat out of range: {q_hat}")
        target = 1.0 - self.f_design * binary_entropy(q_hat)
        pr = np.array([self.punctured_rate(i) for i in range(len(self.codes))])
        return int(np.argmin(np.abs(pr - target)))

    def fingerprints(self) -> list[str]:
        return [H.fingerprint() for H in self.codes]


def _inverse_entropy(h: float) -> float:
    lo, hi = 0.0, 0.5
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if binary_entropy(mid) < h:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def load_manifest(path=None) -> dict:
    path = Path(path) if path else data_path("codesets.json")
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None


def _modulated_positions(N: int, d: int, seed: int, index: int) -> np.ndarray:
    rng = make_rng(seed, 8, N, index)
    return np.sort(rng.choice(N, size=d, replace=False)).astype(np.int64)


def build_code(N: int, m: int, lam: dict, seed: int, index: int) -> ParityCheckMatrix:
    return peg_construct(N, lam, m, seed=seed * 1000 + index)


def load_code_set(name: str, manifest=None, directory=None, build: bool = True) -> CodeSet:
    """Load (building and caching when needed) the named set from the manifest.

    Raises
    ------
    ManifestError
        Unknown set, bad entries, a missing matrix with ``build=False``, or a
        cached matrix whose fingerprint disagrees with the manifest.
    """
    man = manifest if isinstance(manifest, dict) else load_manifest(manifest)
    sets = man.get("sets", {})
    if name not in sets:
        raise ManifestError(f"unknown code set {name!r}; known: {sorted(sets)}")
    entry = sets[name]
    try:
        N = int(entry["N"])
        d = int(math.floor(float(entry.get("d_fraction", 0.1)) * N))
        f_design = float(entry.get("f_design", 1.1))
        seed = int(entry.get("seed", 1))
        code_entries = entry["codes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"malformed entry for {name!r}: {exc}") from None
    dists = load_distributions(man.get("distributions"))
    directory = Path(directory) if directory else cache_dir()
    codes, qs, mods = [], [], []
    for i, ce in enumerate(code_entries):
        if "alist" in ce:
            p = Path(ce["alist"])
            if not p.is_absolute():
                p = directory / p
            if not p.exists():
                raise ManifestError(f"alist file not found: {p}")
            H = load_alist(p)
            qs.append(float(ce.get("q", float("nan"))))
        else:
            m = int(ce["m"])
            key = ce.get("distribution") or nearest_distribution(1 - m / N, dists)
            if key not in dists:
                raise ManifestError(f"unknown distribution {key!r}")
            p = directory / f"{name}_{i:02d}_N{N}_m{m}_{key}_s{seed}.alist"
            if p.exists():
                H = load_alist(p)
            elif build:
                log.info("building %s code %d (N=%d, m=%d)", name, i, N, m)
                H = build_code(N, m, dists[key]["lambda"], seed, i)
                p.parent.mkdir(parents=True, exist_ok=True)
                save_alist(H, p)
            else:
                raise ManifestError(f"code {i} of {name!r} not cached at {p}")
            qs.append(float(ce.get("q", float("nan"))))
        fp = ce.get("fingerprint")
        if fp and fp != H.fingerprint():
            raise ManifestError(f"fingerprint mismatch for code {i} of {name!r}")
        codes.append(H)
        mods.append(_modulated_positions(N, d, seed, i))
    return CodeSet(N=N, d=d, f_design=f_design, codes=codes, modulated=mods, q_design=qs,
                   name=name, meta={"seed": seed})


def manifest_entry(N: int, distributions: dict, q_grid=None, d_fraction: float = 0.1,
                   f_design: float = 1.1, seed: int = 1) -> dict:
    """Manifest entry for a PEG-built set on a QBER grid."""
    q_grid = log_q_grid() if q_grid is None else list(q_grid)
    d = int(math.floor(d_fraction * N))
    codes = []
    for q in sorted(q_grid):
        m = syndrome_length(N, d, q, f_design)
        codes.append({"q": q, "m": m, "distribution": nearest_distribution(1 - m / N, distributions)})
    return {"N": N, "d_fraction": d_fraction, "f_design": f_design, "seed": seed, "codes": codes}
