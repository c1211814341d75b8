"""PCG with the r' B^{-1} r stopping measure, the additive/multiplicative
auxiliary-space preconditioners, and spectral-equivalence diagnostics."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .smoothers import PolySmoother

__all__ = [
    "SolveReport",
    "AuxPreconditioner",
    "IndefinitePreconditionerError",
    "pcg",
    "extreme_eigs",
    "exact_inverse",
]

EXACT_SOLVE_CAP = 20000


class IndefinitePreconditionerError(RuntimeError):
    """The preconditioner produced a negative r' B^{-1} r."""


@dataclass
class SolveReport:
    iterations: int
    measures: list  # r' B^{-1} r per iterate, initial residual first
    final_relative: float
    converged: bool
    wall_ms: float = 0.0
    flag: str = ""
    alphas: list = field(default_factory=list, repr=False)
    betas: list = field(default_factory=list, repr=False)

    def history_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "measure"])
            for i, m in enumerate(self.measures):
                writer.writerow([i, repr(float(m))])


def pcg(A, rhs, precond, rel_tol=1e-8, max_iter=2000, flexible=False, x0=None):
    """Preconditioned CG; stops when r'B^{-1}r <= rel_tol^2 times its initial
    value (the squared form of the relative measure) or at ``max_iter``.

    ``flexible`` switches to the Polak-Ribiere beta, needed when the
    preconditioner action is nonlinear (e.g. an inner fixed-iteration PCG).
    """
    apply_b = precond.apply if hasattr(precond, "apply") else precond
    rhs = np.asarray(rhs, dtype=float)
    t0 = time.perf_counter()
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    r = rhs - A @ x if x0 is not None else rhs.copy()

    z = apply_b(r)
    rho = float(r @ z)
    if rho < 0:
        raise IndefinitePreconditionerError(f"r'B^-1 r = {rho} < 0 on the initial residual")
    measures = [rho]
    alphas, betas = [], []
    if rho == 0.0:
        return x, SolveReport(0, measures, 0.0, True, (time.perf_counter() - t0) * 1e3)
    threshold = rel_tol**2 * rho
    rho0 = rho
    p = z
    r_prev = r.copy() if flexible else None
    converged = False
    it = 0
    while it < max_iter:
        q = A @ p
        pq = float(p @ q)
        if pq <= 0:
            raise ValueError(f"p'Ap = {pq} <= 0; matrix not SPD")
        alpha = rho / pq
        x = x + alpha * p
        r = r - alpha * q
        it += 1
        z = apply_b(r)
        rho_new = float(r @ z)
        measures.append(rho_new)
        alphas.append(alpha)
        if rho_new < 0:
            raise IndefinitePreconditionerError(
                f"r'B^-1 r = {rho_new} < 0 at iteration {it}"
            )
        if rho_new <= threshold:
            converged = True
            break
        if flexible:
            beta = float(z @ (r - r_prev)) / rho
            r_prev = r.copy()
        else:
            beta = rho_new / rho
        betas.append(beta)
        p = z + beta * p
        rho = rho_new
    final_rel = float(np.sqrt(max(measures[-1], 0.0) / rho0))
    wall = (time.perf_counter() - t0) * 1e3
    flag = "" if converged else "max_iter"
    return x, SolveReport(it, measures, final_rel, converged, wall, flag, alphas, betas)


@dataclass
class AuxPreconditioner:
    """Additive or multiplicative auxiliary-space preconditioner.

    ``transfer`` maps auxiliary-space vectors to the original space and
    ``inner`` approximates the inverse of the auxiliary matrix (None disables
    the auxiliary correction, leaving the symmetrized smoother)."""

    mode: str
    smoother: PolySmoother
    transfer: sp.csr_matrix
    inner: object
    A: sp.csr_matrix

    def __post_init__(self):
        if self.mode not in ("additive", "multiplicative"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def apply(self, v0: np.ndarray) -> np.ndarray:
        v0 = np.asarray(v0, dtype=float)
        if self.mode == "additive":
            out = self.smoother.apply(v0)
            if self.inner is not None:
                out = out + self.transfer @ self.inner(self.transfer.T @ v0)
            return out
        v1 = self.smoother.apply(v0)
        if self.inner is not None:
            r_hat = self.transfer.T @ (v0 - self.A @ v1)
            v2 = v1 + self.transfer @ self.inner(r_hat)
        else:
            v2 = v1
        return self.smoother.apply(v0, x0=v2, transpose=True)

    def __call__(self, v0: np.ndarray) -> np.ndarray:
        return self.apply(v0)


def exact_inverse(matrix: sp.spmatrix, cap: int = EXACT_SOLVE_CAP):
    """Exact solve action by factorization: dense Cholesky up to 2000
    unknowns, sparse LU beyond, refused past ``cap``."""
    n = matrix.shape[0]
    if n > cap:
        raise ValueError(f"exact inner solves permitted only up to {cap} unknowns, got {n}")
    if n == 0:
        return lambda r: np.asarray(r, dtype=float).copy()
    if n <= 2000:
        factor = sla.cho_factor(
            matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix), lower=True
        )
        return lambda r: sla.cho_solve(factor, r)
    lu = spla.splu(sp.csc_matrix(matrix))
    return lambda r: lu.solve(r)


def extreme_eigs(A, precond, n_iter: int = 30, seed: int = 0):
    """Lanczos-type estimates of the extreme eigenvalues of B^{-1}A.

    Runs ``n_iter`` PCG steps on a random right-hand side and takes the Ritz
    values of the induced tridiagonal matrix; the estimates always lie inside
    the true spectrum interval. On early breakdown the partial tridiagonal is
    used.
    """
    rng = np.random.default_rng(seed)
    rhs = rng.standard_normal(A.shape[0])
    _, report = pcg(A, rhs, precond, rel_tol=0.0, max_iter=n_iter)
    alphas, betas = report.alphas, report.betas
    if not alphas:
        raise ValueError("Lanczos breakdown before the first step")
    k = len(alphas)
    diag = np.empty(k)
    diag[0] = 1.0 / alphas[0]
    for i in range(1, k):
        diag[i] = 1.0 / alphas[i] + betas[i - 1] / alphas[i - 1]
    off = np.array([np.sqrt(betas[i]) / alphas[i] for i in range(k - 1)])
    vals = sla.eigh_tridiagonal(diag, off, eigvals_only=True)
    return float(vals[0]), float(vals[-1])
