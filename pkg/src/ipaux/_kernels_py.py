"""Pure numpy/scipy fallback for the compiled sweep kernel."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def jacobi_sweeps(indptr, indices, data, inv_scale, omegas, rhs, x0):
    """Scaled Jacobi sweeps x <- x + omega * inv_scale * (rhs - A x)."""
    n = rhs.shape[0]
    A = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    x = np.array(x0, dtype=np.float64, copy=True)
    for om in omegas:
        x += om * inv_scale * (rhs - A @ x)
    return x
