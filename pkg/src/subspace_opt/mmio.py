"""Matrix Market reading and writing (coordinate and array formats).

Parsing is delegated to ``scipy.io``; the header line is checked here so
that files without the ``%%MatrixMarket matrix`` banner are rejected.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import InvalidInput
from .kernels import SparseMatrix

HEADER = "%%MatrixMarket matrix"


def _check_header(path: Path) -> str:
    with open(path, "r") as fh:
        first = fh.readline()
    if not first.lower().startswith(HEADER.lower()):
        raise InvalidInput(f"{path}: missing '{HEADER}' header")
    return first.split()[2].lower()


def read_matrix(path) -> np.ndarray | SparseMatrix:
    """Coordinate files come back as SparseMatrix, array files as ndarray."""
    path = Path(path)
    fmt = _check_header(path)
    M = scipy.io.mmread(str(path))
    if fmt == "coordinate":
        return SparseMatrix.from_scipy(M)
    return np.asarray(M, dtype=float)


def read_vector(path) -> np.ndarray:
    """A Matrix Market array (n x 1) or a plain whitespace-separated list."""
    path = Path(path)
    with open(path, "r") as fh:
        first = fh.readline()
    if first.startswith("%%"):
        M = read_matrix(path)
        M = M.to_dense() if isinstance(M, SparseMatrix) else M
        return np.asarray(M, dtype=float).ravel()
    try:
        x = np.array(path.read_text().split(), dtype=float)
    except ValueError as exc:
        raise InvalidInput(f"{path}: not a list of numbers") from exc
    if not np.all(np.isfinite(x)):
        raise InvalidInput(f"{path}: non-finite entries")
    return x


def write_matrix(path, A, comment: str = "") -> None:
    """Sparse inputs are written in coordinate form, dense ones as arrays."""
    if isinstance(A, SparseMatrix):
        A = A.csr
    # a file handle keeps scipy from appending ".mtx" to the name
    with open(path, "wb") as fh:
        if sp.issparse(A):
            scipy.io.mmwrite(fh, sp.coo_matrix(A), comment=comment, field="real")
        else:
            scipy.io.mmwrite(fh, np.atleast_2d(np.asarray(A, dtype=float)), comment=comment, field="real")


def write_vector(path, x) -> None:
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    with open(path, "wb") as fh:
        scipy.io.mmwrite(fh, x, field="real")
