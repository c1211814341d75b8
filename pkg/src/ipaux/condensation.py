"""Static condensation: per-Element elimination of edofs, the assembled
interface Schur complement, and the induced preconditioner action.

The edof block of an IP matrix is block diagonal over Elements, so the
elimination is exact local work: each Element's ee block is Cholesky-factored
once at setup and reused by every application (it is applied twice per
action, once eliminating and once back-substituting).

Everything here operates on a :class:`~ipaux.ip_reformulation.BlockSystem`,
so the same code condenses the fine IP matrix and its spectrally coarsened
version.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .ip_reformulation import BlockSystem

__all__ = ["SchurSystem", "local_schur", "assemble_schur", "build_schur_system", "bsc_apply"]


def local_schur(a_t, n_ee: int):
    """Schur complement of the leading ``n_ee`` block of a local matrix.

    Returns ``(S_T, ee_factor, A_eb)`` with the Cholesky factor of the ee
    block cached for reuse. Raises if the ee block is not positive definite
    (an Element whose stiffness null space vanishes on all its Faces).
    """
    dense = a_t.toarray() if sp.issparse(a_t) else np.asarray(a_t, dtype=float)
    a_ee = dense[:n_ee, :n_ee]
    a_eb = dense[:n_ee, n_ee:]
    a_bb = dense[n_ee:, n_ee:]
    try:
        factor = sla.cho_factor(a_ee, lower=True)
    except sla.LinAlgError as exc:
        raise ValueError(f"ee block of size {n_ee} is not positive definite") from exc
    if a_eb.shape[1]:
        s_t = a_bb - a_eb.T @ sla.cho_solve(factor, a_eb)
        s_t = 0.5 * (s_t + s_t.T)
    else:
        s_t = a_bb
    return s_t, factor, a_eb


def assemble_schur(s_locals: list, local_b_ids: list, n_bdofs: int) -> sp.csr_matrix:
    """Accumulate local Schur complements into the global interface matrix."""
    rows, cols, data = [], [], []
    for s_t, ids in zip(s_locals, local_b_ids):
        if ids.size == 0:
            continue
        rows.append(np.repeat(ids, ids.size))
        cols.append(np.tile(ids, ids.size))
        data.append(s_t.reshape(-1))
    if not rows:
        return sp.csr_matrix((n_bdofs, n_bdofs))
    out = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_bdofs, n_bdofs),
    ).tocsr()
    out.sum_duplicates()
    return out


@dataclass
class SchurSystem:
    """Condensed interface system with cached per-Element elimination data."""

    n_edofs: int
    n_bdofs: int
    S: sp.csr_matrix
    s_locals: list
    ee_factors: list
    eb_blocks: list
    local_e_ids: list  # global edof ids per Element
    local_b_ids: list  # bdof indices (0-based in the bdof space) per Element

    @property
    def n_adofs(self) -> int:
        return self.n_edofs + self.n_bdofs


def build_schur_system(bs: BlockSystem) -> SchurSystem:
    """Factor every Element's ee block and assemble S from local complements."""
    s_locals, factors, ebs, e_ids, b_ids = [], [], [], [], []
    for a_t, ids, n_ee in zip(bs.locals, bs.local_ids, bs.n_ee):
        s_t, factor, a_eb = local_schur(a_t, n_ee)
        s_locals.append(s_t)
        factors.append(factor)
        ebs.append(a_eb)
        e_ids.append(ids[:n_ee])
        b_ids.append(ids[n_ee:] - bs.n_edofs)
    S = assemble_schur(s_locals, b_ids, bs.n_bdofs)
    return SchurSystem(
        n_edofs=bs.n_edofs,
        n_bdofs=bs.n_bdofs,
        S=S,
        s_locals=s_locals,
        ee_factors=factors,
        eb_blocks=ebs,
        local_e_ids=e_ids,
        local_b_ids=b_ids,
    )


def bsc_apply(ss: SchurSystem, schur_solver, residual: np.ndarray) -> np.ndarray:
    """Condensed preconditioner action: eliminate, solve on bdofs, back-substitute.

    ``schur_solver`` approximates the inverse of S symmetrically. The ee
    solves are exact (cached Cholesky factors) and happen exactly twice.
    """
    if residual.shape[0] != ss.n_adofs:
        raise ValueError(f"residual length {residual.shape[0]} != {ss.n_adofs} adofs")
    r_e = residual[: ss.n_edofs]
    r_b = residual[ss.n_edofs :]

    w_b = r_b.copy()
    y_locals = []
    for factor, a_eb, eid, bid in zip(
        ss.ee_factors, ss.eb_blocks, ss.local_e_ids, ss.local_b_ids
    ):
        y = sla.cho_solve(factor, r_e[eid])
        y_locals.append(y)
        if bid.size:
            w_b[bid] -= a_eb.T @ y

    z_b = schur_solver(w_b) if ss.n_bdofs else w_b

    z_e = np.empty(ss.n_edofs)
    for y, factor, a_eb, eid, bid in zip(
        y_locals, ss.ee_factors, ss.eb_blocks, ss.local_e_ids, ss.local_b_ids
    ):
        if bid.size:
            z_e[eid] = y - sla.cho_solve(factor, a_eb @ z_b[bid])
        else:
            z_e[eid] = y
    return np.concatenate([z_e, z_b])
