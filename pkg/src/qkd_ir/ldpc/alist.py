"""Reading and writing parity-check matrices in the alist format.

Layout (whitespace separated, 1-indexed, zero entries are padding)::

    N m
    max_column_degree max_row_degree
    column degrees (N values)
    row degrees (m values)
    N lines: row indices of each column
    m lines: column indices of each row
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .matrix import ParityCheckMatrix


class AlistError(ValueError):
    pass


def _ints(line: str, lineno: int) -> list[int]:
    try:
        return [int(t) for t in line.split()]
    except ValueError:
        raise AlistError(f"line {lineno}: non-integer token") from None


def parse_alist(text: str) -> ParityCheckMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 4:
        raise AlistError("truncated header")
    header = _ints(lines[0], 1)
    if len(header) != 2:
        raise AlistError("first line must hold 'N m'")
    N, m = header
    if N <= 0 or m <= 0:
        raise AlistError("dimensions must be positive")
    maxes = _ints(lines[1], 2)
    if len(maxes) != 2:
        raise AlistError("second line must hold the two maximum degrees")
    col_deg = _ints(lines[2], 3)
    row_deg = _ints(lines[3], 4)
    if len(col_deg) != N or len(row_deg) != m:
        raise AlistError("degree lists do not match the header dimensions")
    if len(lines) < 4 + N + m:
        raise AlistError("missing adjacency lines")
    rows, cols = [], []
    for i in range(N):
        entries = [e for e in _ints(lines[4 + i], 5 + i) if e != 0]
        if len(entries) != col_deg[i]:
            raise AlistError(f"column {i + 1}: {len(entries)} entries, degree says {col_deg[i]}")
        if len(set(entries)) != len(entries):
            raise AlistError(f"column {i + 1}: duplicate edge")
        for r in entries:
            if not 1 <= r <= m:
                raise AlistError(f"column {i + 1}: row index {r} out of range")
            rows.append(r - 1)
            cols.append(i)
    row_sets = []
    for j in range(m):
        entries = [e for e in _ints(lines[4 + N + j], 5 + N + j) if e != 0]
        if len(entries) != row_deg[j]:
            raise AlistError(f"row {j + 1}: {len(entries)} entries, degree says {row_deg[j]}")
        if any(not 1 <= c <= N for c in entries):
            raise AlistError(f"row {j + 1}: column index out of range")
        row_sets.append(sorted(c - 1 for c in entries))
    try:
        H = ParityCheckMatrix(N, m, rows, cols)
    except ValueError as exc:
        raise AlistError(str(exc)) from None
    for j in range(m):
        if H.row(j).tolist() != row_sets[j]:
            raise AlistError(f"row {j + 1} disagrees with the column lists")
    return H


def load_alist(path) -> ParityCheckMatrix:
    return parse_alist(Path(path).read_text())


def format_alist(H: ParityCheckMatrix) -> str:
    cdeg = H.col_degrees
    rdeg = H.row_degrees
    cmax, rmax = int(cdeg.max()), int(rdeg.max())
    out = [f"{H.N} {H.m}", f"{cmax} {rmax}",
           " ".join(map(str, cdeg.tolist())), " ".join(map(str, rdeg.tolist()))]
    for col in _column_lists(H):
        ent = (col + 1).tolist()
        out.append(" ".join(map(str, ent + [0] * (cmax - len(ent)))))
    for j in range(H.m):
        ent = (H.row(j) + 1).tolist()
        out.append(" ".join(map(str, ent + [0] * (rmax - len(ent)))))
    return "\n".join(out) + "\n"


def save_alist(H: ParityCheckMatrix, path) -> None:
    Path(path).write_text(format_alist(H))


def _column_lists(H: ParityCheckMatrix) -> list[np.ndarray]:
    order = H.var_edges
    rows = H.edge_check[order]
    return np.split(rows, H.var_ptr[1:-1])
