"""Matrix Market coordinate-format export/import.

Values are written with ``repr`` (shortest exact decimal), so a round trip
reproduces every float bit-identically. Symmetric matrices store the lower
triangle under the ``symmetric`` qualifier; the flag is set exactly when the
matrix equals its transpose with zero tolerance. Vectors go out as n-by-1
general matrices.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = ["export_matrix", "read_matrix"]


def _is_symmetric(mat: sp.csr_matrix) -> bool:
    if mat.shape[0] != mat.shape[1]:
        return False
    return (mat != mat.T).nnz == 0


def export_matrix(path, matrix) -> None:
    """Write a sparse/dense matrix or a vector in coordinate format."""
    arr = matrix
    if not sp.issparse(arr):
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        arr = sp.coo_matrix(arr)
    mat = sp.csr_matrix(arr)
    symmetric = _is_symmetric(mat)
    coo = sp.tril(mat).tocoo() if symmetric else mat.tocoo()
    kind = "symmetric" if symmetric else "general"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {kind}\n")
        fh.write(f"{mat.shape[0]} {mat.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def read_matrix(path) -> sp.csr_matrix:
    """Read a coordinate-format file written by :func:`export_matrix`."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 5 or header[0] != "%%MatrixMarket":
            raise ValueError(f"{path}: not a Matrix Market coordinate file")
        symmetric = header[4] == "symmetric"
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        m, n, nnz = (int(t) for t in line.split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        data = np.empty(nnz)
        for k in range(nnz):
            i, j, v = fh.readline().split()
            rows[k] = int(i) - 1
            cols[k] = int(j) - 1
            data[k] = float(v)
    if symmetric:
        off = rows != cols
        rows, cols, data = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([data, data[off]]),
        )
    return sp.coo_matrix((data, (rows, cols)), shape=(m, n)).tocsr()
