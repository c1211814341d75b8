"""Chebyshev-based polynomial smoother.

For a degree parameter nu >= 1 the error-propagation polynomial on [0, 1] is

    p(t) = (1 - T(sqrt(t))^2) * (-1)^nu / (2 nu + 1) * T(sqrt(t)) / sqrt(t),

with T the Chebyshev polynomial of the first kind of degree 2 nu + 1. It has
degree 3 nu + 1, satisfies p(0) = 1, and all its roots are real in (0, 1], so
the smoother action is a sequence of 3 nu + 1 diagonally scaled Jacobi sweeps

    x <- x + 1 / (b t_k) * S^{-1} (rhs - A x),

one per root t_k, where S is the scaling diagonal and b bounds the scaled
spectrum: v' A v <= b v' S v. With the weighted l1 diagonal, b = 1 holds
exactly. The induced operator M is SPD and I - M^{-1} A = p(b^{-1} S^{-1} A).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import kernels
from .mesh_fe import l1_weights

__all__ = ["PolySmoother", "cheb_roots", "estimate_b", "smoother_apply"]


def cheb_roots(nu: int) -> np.ndarray:
    """Sorted multiset of the 3 nu + 1 roots of the smoothing polynomial.

    Roots on (0, 1]: t = 1 once; the squared positive extrema arguments
    cos^2(k pi / (2 nu + 1)) each twice (from the 1 - T^2 factor); and the
    squared positive zeros cos^2((2j+1) pi / (2(2 nu + 1))) once each (from
    T(sqrt(t)) / sqrt(t)).
    """
    if nu < 1:
        raise ValueError("nu must be >= 1")
    m = 2 * nu + 1
    doubled = np.cos(np.arange(1, nu + 1) * np.pi / m) ** 2
    simple = np.cos((2 * np.arange(nu) + 1) * np.pi / (2 * m)) ** 2
    roots = np.concatenate([[1.0], np.repeat(doubled, 2), simple])
    return np.sort(roots)


def estimate_b(A: sp.csr_matrix, scaling) -> float:
    """Spectral bound b with v'Av <= b v'Sv.

    The l1 weighting admits b = 1 exactly. For the plain diagonal (or an
    arbitrary positive diagonal vector) the bound is estimated by 30 power
    iteration steps on the symmetrically scaled matrix, times a 1.1 safety
    factor.
    """
    if isinstance(scaling, str):
        if scaling == "l1":
            return 1.0
        if scaling == "diag":
            scale_vec = np.asarray(A.diagonal())
        else:
            raise ValueError(f"unknown scaling {scaling!r}")
    else:
        scale_vec = np.asarray(scaling, dtype=float)
    if np.any(scale_vec <= 0):
        raise ValueError("scaling diagonal must be positive")
    inv_sqrt = 1.0 / np.sqrt(scale_vec)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(30):
        w = inv_sqrt * (A @ (inv_sqrt * v))
        lam = np.linalg.norm(w)
        if lam == 0.0:
            break
        v = w / lam
    return 1.1 * float(lam)


class PolySmoother:
    """Polynomial smoother M with I - M^{-1}A = p(b^{-1} S^{-1} A)."""

    def __init__(self, A: sp.csr_matrix, nu: int, scaling="l1", b=None, validate=False):
        self.A = A.tocsr()
        self.nu = int(nu)
        if isinstance(scaling, str):
            if scaling == "l1":
                self.scale = l1_weights(self.A)
                self.b = 1.0 if b is None else float(b)
            elif scaling == "diag":
                self.scale = np.asarray(self.A.diagonal())
                self.b = float(b) if b is not None else estimate_b(self.A, "diag")
            else:
                raise ValueError(f"unknown scaling {scaling!r}")
        else:
            self.scale = np.asarray(scaling, dtype=float)
            self.b = float(b) if b is not None else estimate_b(self.A, self.scale)
        if np.any(self.scale <= 0):
            raise ValueError("scaling diagonal must be positive")
        if validate:
            est = estimate_b(self.A, self.scale) / 1.1
            if est > self.b * (1 + 1e-8):
                raise ValueError(f"bound b={self.b} violated: lambda_max ~ {est}")
        self.roots = cheb_roots(self.nu)
        self.omegas = 1.0 / (self.b * self.roots)
        self._inv_scale = 1.0 / self.scale

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def apply(self, rhs: np.ndarray, x0=None, transpose: bool = False) -> np.ndarray:
        """Run the 3 nu + 1 sweeps on A x = rhs from x0 (default 0).

        The result is x0 + M^{-1}(rhs - A x0); ``transpose`` reverses the
        sweep order, realizing M^{-T} (identical operator, M being SPD, but
        kept as a distinct code path).
        """
        x0 = np.zeros_like(rhs) if x0 is None else np.asarray(x0, dtype=float)
        omegas = self.omegas[::-1] if transpose else self.omegas
        return kernels.jacobi_sweeps(self.A, self._inv_scale, omegas, rhs, x0)

    def apply_transpose(self, rhs: np.ndarray, x0=None) -> np.ndarray:
        return self.apply(rhs, x0=x0, transpose=True)

    def __call__(self, rhs: np.ndarray) -> np.ndarray:
        return self.apply(rhs)


def smoother_apply(A, scaling_diag, b, nu, rhs, x0=None) -> np.ndarray:
    """One smoother application with an explicit scaling diagonal and bound."""
    sm = PolySmoother(A, nu, scaling=np.asarray(scaling_diag, dtype=float), b=b)
    return sm.apply(np.asarray(rhs, dtype=float), x0=x0)
