"""Plain-text serialization shared across the lab.

Matrix format: one row per line, entries whitespace-separated, printed with
17 significant digits (``%.17g``), which round-trips IEEE doubles exactly.
Vectors are written as single-row matrices.  Lines starting with ``#`` are
comments and are skipped on read.
"""

from __future__ import annotations

import os
from typing import Iterable

import numpy as np

FLOAT_FMT = "%.17g"


def format_float(x: float) -> str:
    """Render one float with 17 significant digits (exact round-trip)."""
    return FLOAT_FMT % (x,)


def write_matrix(path: str | os.PathLike, mat: np.ndarray,
                 comments: Iterable[str] = ()) -> None:
    """Write a 1-D or 2-D array in the plain-text matrix format."""
    arr = np.atleast_2d(np.asarray(mat, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"expected a 1-D or 2-D array, got shape {mat.shape}")
    with open(path, "w", encoding="ascii") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        for row in arr:
            fh.write(" ".join(format_float(v) for v in row))
            fh.write("\n")


def read_matrix(path: str | os.PathLike) -> np.ndarray:
    """Read a matrix written by :func:`write_matrix`. Always returns 2-D."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(tok) for tok in line.split()])
    if not rows:
        raise ValueError(f"{path}: no matrix rows found")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged rows in matrix file")
    return np.array(rows, dtype=float)
