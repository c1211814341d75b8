"""Spectral coarse auxiliary pair: per-Element eigenbases, Face trace bases,
the block-diagonal prolongation, and the coarse IP matrix via local RAPs.

Element bases come from the generalized eigenproblem A_T q = lambda D_T q
(D_T the diagonal of A_T), keeping the eigenvectors below a relative
threshold theta of the largest eigenvalue. Face bases are the l2-orthonormal
span of the Element-basis traces on the Face, filtered by SVD. Coarse Adofs
are numbered Edofs Element by Element, then Bdofs Face by Face.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .ip_reformulation import BlockSystem, IpSystem

__all__ = ["CoarseSpace", "element_eigenbasis", "face_trace_basis", "build_coarse"]

logger = logging.getLogger(__name__)


def _fix_signs(Q: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column positive (determinism)."""
    if Q.size == 0:
        return Q
    idx = np.argmax(np.abs(Q), axis=0)
    signs = np.sign(Q[idx, np.arange(Q.shape[1])])
    signs[signs == 0] = 1.0
    return Q * signs


def element_eigenbasis(A_T, theta: float, fixed_count=None):
    """Smallest generalized eigenpairs of A_T q = lambda D_T q.

    Keeps the first m eigenvectors with lambda_m <= theta * lambda_max <
    lambda_{m+1} (or exactly ``fixed_count`` of them), enforcing
    1 <= m < n_T. The returned vectors are D_T-orthonormal.
    """
    dense = A_T.toarray() if sp.issparse(A_T) else np.asarray(A_T, dtype=float)
    n = dense.shape[0]
    if n < 2:
        raise ValueError("Element has fewer than two dofs; nothing to coarsen")
    d = np.diag(dense).copy()
    if np.any(d <= 0):
        raise ValueError("zero or negative diagonal entry in element matrix")
    if not (fixed_count or 0) and not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    inv_sqrt = 1.0 / np.sqrt(d)
    sym = dense * inv_sqrt[:, None] * inv_sqrt[None, :]
    sym = 0.5 * (sym + sym.T)
    lam, vec = sla.eigh(sym)
    if fixed_count:
        m = int(fixed_count)
    else:
        m = int(np.searchsorted(lam, theta * lam[-1], side="right"))
    m = max(1, min(m, n - 1))
    Q = _fix_signs(inv_sqrt[:, None] * vec[:, :m])
    return lam[:m], Q


def face_trace_basis(traces_plus: np.ndarray, traces_minus: np.ndarray, svd_rel_tol: float = 1e-10):
    """l2-orthonormal basis spanning the Element-basis traces on a Face.

    ``traces_plus``/``traces_minus`` hold the restrictions of the two
    adjacent Elements' basis vectors to the Face dofs, one column per vector.
    Singular directions below ``svd_rel_tol`` times the largest singular
    value are dropped; if every trace is numerically zero the basis is empty.
    """
    traces = np.hstack([traces_plus, traces_minus])
    if traces.size == 0:
        return np.zeros((traces.shape[0], 0))
    u, s, _ = sla.svd(traces, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        logger.warning("all traces on a Face are zero; empty Face basis")
        return np.zeros((traces.shape[0], 0))
    keep = s >= svd_rel_tol * s[0]
    return _fix_signs(u[:, : int(np.count_nonzero(keep))])


@dataclass
class CoarseSpace:
    """Coarse auxiliary pair with prolongation, coarse matrix, and transfer."""

    ip: IpSystem
    element_eigs: list = field(repr=False)
    face_bases: list = field(repr=False)
    element_Edofs: list = field(repr=False)  # coarse Edof ids per Element
    face_Bdofs: list = field(repr=False)  # coarse Bdof ids per Face
    local_ids: list = field(repr=False)  # Edofs of T then Bdofs of its Faces
    P: sp.csr_matrix = None
    PiH: sp.csr_matrix = None
    matrix: sp.csr_matrix = None
    local_mats: list = None
    n_Edofs: int = 0
    n_Bdofs: int = 0

    @property
    def n_Adofs(self) -> int:
        return self.n_Edofs + self.n_Bdofs

    def block_system(self) -> BlockSystem:
        return BlockSystem(
            matrix=self.matrix,
            locals=self.local_mats,
            local_ids=self.local_ids,
            n_ee=[len(e) for e in self.element_Edofs],
            n_edofs=self.n_Edofs,
            n_bdofs=self.n_Bdofs,
        )


def build_coarse(
    ip: IpSystem,
    theta: float = 0.05,
    svd_rel_tol: float = 1e-10,
    fixed_count=None,
) -> CoarseSpace:
    """Spectral coarsening of an IP system.

    Solves the Element eigenproblems on the original local stiffness
    matrices, traces the kept vectors onto Faces, and forms the coarse matrix
    both locally (P_T' A_T P_T, assembled) and the transfer Pi_H = Pi_h P.
    """
    topo = ip.topology
    amap = ip.adof_map

    element_eigs = [
        element_eigenbasis(ip.element_stiffness[T], theta, fixed_count=fixed_count)
        for T in range(topo.n_Elements)
    ]

    elem_pos = []
    for T in range(topo.n_Elements):
        pos = {d: i for i, d in enumerate(amap.element_dofs[T])}
        elem_pos.append(pos)

    face_bases = []
    for F in range(topo.n_Faces):
        t_plus, t_minus = topo.Face_Element.row(F)
        dofs_f = amap.face_dofs[F]
        blocks = []
        for T in (t_plus, t_minus):
            pos = np.array([elem_pos[T][d] for d in dofs_f], dtype=np.int64)
            blocks.append(element_eigs[T][1][pos, :])
        face_bases.append(face_trace_basis(blocks[0], blocks[1], svd_rel_tol))

    n_Edofs = 0
    element_Edofs = []
    for T in range(topo.n_Elements):
        m_t = element_eigs[T][1].shape[1]
        element_Edofs.append(np.arange(n_Edofs, n_Edofs + m_t))
        n_Edofs += m_t
    n_Bdofs = 0
    face_Bdofs = []
    for F in range(topo.n_Faces):
        m_f = face_bases[F].shape[1]
        face_Bdofs.append(n_Edofs + np.arange(n_Bdofs, n_Bdofs + m_f))
        n_Bdofs += m_f

    rows, cols, data = [], [], []
    for T in range(topo.n_Elements):
        Q = element_eigs[T][1]
        _check_block_rank(Q, f"Element {T}")
        r = np.repeat(amap.element_edofs[T], Q.shape[1])
        c = np.tile(element_Edofs[T], Q.shape[0])
        rows.append(r)
        cols.append(c)
        data.append(Q.reshape(-1))
    for F in range(topo.n_Faces):
        B = face_bases[F]
        if B.shape[1] == 0:
            continue
        _check_block_rank(B, f"Face {F}")
        rows.append(np.repeat(amap.face_bdofs[F], B.shape[1]))
        cols.append(np.tile(face_Bdofs[F], B.shape[0]))
        data.append(B.reshape(-1))
    n_coarse = n_Edofs + n_Bdofs
    P = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(amap.n_adofs, n_coarse),
    ).tocsr()

    local_mats, local_ids = [], []
    for T in range(topo.n_Elements):
        Q = element_eigs[T][1]
        n_e = amap.element_n_edofs[T]
        faces = topo.Element_Face.row(T)
        n_loc = n_e + sum(amap.face_dofs[F].size for F in faces)
        cols_T = [element_Edofs[T]] + [face_Bdofs[F] for F in faces]
        ids_T = np.concatenate(cols_T)
        p_t = np.zeros((n_loc, ids_T.size))
        p_t[:n_e, : Q.shape[1]] = Q
        r_off, c_off = n_e, Q.shape[1]
        for F in faces:
            B = face_bases[F]
            p_t[r_off : r_off + B.shape[0], c_off : c_off + B.shape[1]] = B
            r_off += amap.face_dofs[F].size
            c_off += B.shape[1]
        a_t = ip.local_mats[T]
        local_mats.append(p_t.T @ (a_t @ p_t))
        local_ids.append(ids_T)

    n = n_coarse
    rows, cols, data = [], [], []
    for mat, ids in zip(local_mats, local_ids):
        rows.append(np.repeat(ids, ids.size))
        cols.append(np.tile(ids, ids.size))
        data.append(mat.reshape(-1))
    matrix = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    matrix.sum_duplicates()

    return CoarseSpace(
        ip=ip,
        element_eigs=element_eigs,
        face_bases=face_bases,
        element_Edofs=element_Edofs,
        face_Bdofs=face_Bdofs,
        local_ids=local_ids,
        P=P,
        PiH=(ip.Pi @ P).tocsr(),
        matrix=matrix,
        local_mats=local_mats,
        n_Edofs=n_Edofs,
        n_Bdofs=n_Bdofs,
    )


def _check_block_rank(Q: np.ndarray, label: str):
    s = sla.svd(Q, compute_uv=False)
    if s.size and s[-1] <= 1e-12 * s[0]:
        raise ValueError(f"rank-deficient prolongation block on {label}")
