"""Hot-kernel dispatch: the compiled Cython sweeps when available, otherwise
the pure scipy fallback. Both expose the same array-level signature."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

try:
    from . import _kernels as _impl

    COMPILED = True
except ImportError:  # pragma: no cover - depends on the build
    from . import _kernels_py as _impl

    COMPILED = False

from . import _kernels_py

__all__ = ["COMPILED", "using_compiled", "jacobi_sweeps", "jacobi_sweeps_reference"]


def using_compiled() -> bool:
    return COMPILED


def _csr_arrays(A: sp.csr_matrix):
    data = np.ascontiguousarray(A.data, dtype=np.float64)
    indices = np.ascontiguousarray(A.indices)
    indptr = np.ascontiguousarray(A.indptr)
    if indices.dtype != indptr.dtype:
        indices = indices.astype(np.int64)
        indptr = indptr.astype(np.int64)
    return indptr, indices, data


def jacobi_sweeps(A: sp.csr_matrix, inv_scale, omegas, rhs, x0) -> np.ndarray:
    """Run scaled Jacobi sweeps x <- x + omega_k * inv_scale * (rhs - A x)."""
    indptr, indices, data = _csr_arrays(A)
    return _impl.jacobi_sweeps(
        indptr,
        indices,
        data,
        np.ascontiguousarray(inv_scale, dtype=np.float64),
        np.ascontiguousarray(omegas, dtype=np.float64),
        np.ascontiguousarray(rhs, dtype=np.float64),
        np.ascontiguousarray(x0, dtype=np.float64),
    )


def jacobi_sweeps_reference(A: sp.csr_matrix, inv_scale, omegas, rhs, x0) -> np.ndarray:
    """Always-pure-python path, for equivalence tests and benchmarks."""
    indptr, indices, data = _csr_arrays(A)
    return _kernels_py.jacobi_sweeps(
        indptr,
        indices,
        data,
        np.ascontiguousarray(inv_scale, dtype=np.float64),
        np.ascontiguousarray(omegas, dtype=np.float64),
        np.ascontiguousarray(rhs, dtype=np.float64),
        np.ascontiguousarray(x0, dtype=np.float64),
    )
