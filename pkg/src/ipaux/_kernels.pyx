# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR sweep kernel: fuses the matvec, residual scaling, and update
of one Jacobi-type sweep into a single pass over the matrix."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef fused idx_t:
    cnp.int32_t
    cnp.int64_t


def jacobi_sweeps(const idx_t[::1] indptr, const idx_t[::1] indices,
                  const double[::1] data, const double[::1] inv_scale,
                  const double[::1] omegas, const double[::1] rhs,
                  const double[::1] x0):
    """Scaled Jacobi sweeps x <- x + omega * inv_scale * (rhs - A x)."""
    cdef Py_ssize_t n = rhs.shape[0]
    cdef Py_ssize_t n_sweeps = omegas.shape[0]
    out = np.array(x0, dtype=np.float64)
    buf = np.empty(n, dtype=np.float64)
    cdef double[::1] xv = out
    cdef double[::1] yv = buf
    cdef double* cur = &xv[0] if n else NULL
    cdef double* nxt = &yv[0] if n else NULL
    cdef double* tmp
    cdef double acc, om
    cdef Py_ssize_t i, s
    cdef idx_t k
    if n == 0:
        return out
    with nogil:
        for s in range(n_sweeps):
            om = omegas[s]
            for i in range(n):
                acc = 0.0
                for k in range(indptr[i], indptr[i + 1]):
                    acc += data[k] * cur[indices[k]]
                nxt[i] = cur[i] + om * inv_scale[i] * (rhs[i] - acc)
            tmp = cur
            cur = nxt
            nxt = tmp
        if cur != &xv[0]:
            for i in range(n):
                xv[i] = cur[i]
    return out
