"""Element-based algebraic multigrid over given local data.

A level is a set of entities (agglomerates), each carrying its dof list and a
local SPSD matrix whose assembly is the level's global matrix. Coarsening:
group dofs into minimal intersection sets (equal owner sets of entities),
solve per-entity generalized eigenproblems against the local diagonal, TRACE
the kept vectors onto each MIS, filter by SVD, and prolongate block-wise per
MIS. Coarse element matrices are local RAPs, so the construction recurses on
its own output. The V-cycle smooths with the polynomial smoother on every
level and solves the coarsest level directly.

The entry points accept prepared data (matrix + entity dofs + local
matrices), so the same machinery runs on the IP matrix, its coarse version,
or either Schur complement.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coarse_aux import _fix_signs, element_eigenbasis
from .ip_reformulation import BlockSystem
from .relations import Relation, partition_by_row_pattern, transpose
from .smoothers import PolySmoother

__all__ = ["AmgeInput", "Hierarchy", "build_hierarchy", "vcycle_apply"]

logger = logging.getLogger(__name__)


@dataclass
class AmgeInput:
    """Given data for the hierarchy: global matrix, entity dof lists (ascending
    ids), and per-entity local matrices assembling to the global one."""

    matrix: sp.csr_matrix
    entity_dof: Relation
    locals: list  # (ids, dense) per entity

    @classmethod
    def from_block_system(cls, bs: BlockSystem) -> "AmgeInput":
        locals_ = []
        for mat, ids in zip(bs.locals, bs.local_ids):
            dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=float)
            locals_.append((np.asarray(ids), dense))
        rel = Relation(len(bs.locals), bs.n, [ids for ids, _ in locals_])
        return cls(matrix=bs.matrix, entity_dof=rel, locals=locals_)

    @classmethod
    def from_schur(cls, schur_system) -> "AmgeInput":
        locals_ = [
            (np.asarray(ids), np.asarray(s_t, dtype=float))
            for ids, s_t in zip(schur_system.local_b_ids, schur_system.s_locals)
        ]
        rel = Relation(len(locals_), schur_system.n_bdofs, [ids for ids, _ in locals_])
        return cls(matrix=schur_system.S, entity_dof=rel, locals=locals_)


@dataclass
class _Level:
    matrix: sp.csr_matrix
    smoother: PolySmoother
    P: sp.csr_matrix


@dataclass
class Hierarchy:
    """Multilevel structure; ``apply`` runs one symmetric V-cycle."""

    levels: list = field(repr=False)
    coarse_matrix: sp.csr_matrix = field(repr=False, default=None)
    coarse_solve: object = field(repr=False, default=None)
    dims: list = field(default_factory=list)
    nnz_levels: list = field(default_factory=list)

    @property
    def n_levels(self) -> int:
        """Total level count, coarsest included."""
        return len(self.levels) + 1

    def apply(self, residual: np.ndarray) -> np.ndarray:
        r = np.asarray(residual, dtype=float)
        if r.shape[0] != self.dims[0]:
            raise ValueError(f"residual length {r.shape[0]} != {self.dims[0]}")
        return self._cycle(0, r)

    def __call__(self, residual: np.ndarray) -> np.ndarray:
        return self.apply(residual)

    def _cycle(self, l: int, r: np.ndarray) -> np.ndarray:
        if l == len(self.levels):
            return self.coarse_solve(r)
        lev = self.levels[l]
        x = lev.smoother.apply(r)
        rc = lev.P.T @ (r - lev.matrix @ x)
        x = x + lev.P @ self._cycle(l + 1, rc)
        return lev.smoother.apply(r, x0=x, transpose=True)

    def summary(self) -> str:
        lines = []
        for l, (dim, nnz) in enumerate(zip(self.dims, self.nnz_levels)):
            lines.append(f"level {l}: dim {dim}, nnz {nnz}")
        return "\n".join(lines)


def _entity_eigenbasis(ids, dense, theta_s, fixed_count):
    if ids.size == 0:
        return np.zeros((0, 0))
    if ids.size == 1:
        return np.ones((1, 1))
    _, Q = element_eigenbasis(dense, theta_s, fixed_count=fixed_count)
    return Q


def _coarsen_level(entity_dof, locals_, theta_s, svd_rel_tol, min_svd_drop, fixed_count):
    """One coarsening pass; returns (P, coarse entity_dof, coarse locals) or
    None when the dimension would not decrease."""
    n_dofs = entity_dof.n_cols
    mis_dof, entity_mis = partition_by_row_pattern(entity_dof)
    mis_entity = transpose(entity_mis)

    bases = [_entity_eigenbasis(ids, dense, theta_s, fixed_count) for ids, dense in locals_]

    mis_bases, mis_ranges = [], []
    n_coarse = 0
    rows, cols, data = [], [], []
    for m in range(mis_dof.n_rows):
        dofs_m = mis_dof.row(m)
        blocks = []
        for T in mis_entity.row(m):
            ids = locals_[T][0]
            pos = np.searchsorted(ids, dofs_m)
            Q = bases[T]
            if Q.shape[1]:
                blocks.append(Q[pos, :])
        traces = np.hstack(blocks) if blocks else np.zeros((dofs_m.size, 0))
        if traces.shape[1]:
            u, s, _ = sla.svd(traces, full_matrices=False)
            rank = int(np.count_nonzero(s >= svd_rel_tol * s[0])) if s.size and s[0] > 0 else 0
        else:
            u, rank = np.zeros((dofs_m.size, 0)), 0
        if min_svd_drop > 0:
            rank = min(rank, max(dofs_m.size - min_svd_drop, 0))
        basis = _fix_signs(u[:, :rank])
        mis_bases.append(basis)
        mis_ranges.append(np.arange(n_coarse, n_coarse + rank))
        n_coarse += rank
        if rank:
            rows.append(np.repeat(dofs_m, rank))
            cols.append(np.tile(mis_ranges[-1], dofs_m.size))
            data.append(basis.reshape(-1))

    if n_coarse == 0 or n_coarse >= n_dofs:
        return None
    P = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_dofs, n_coarse),
    ).tocsr()

    coarse_locals = []
    for T, (ids, dense) in enumerate(locals_):
        mises = entity_mis.row(T)
        ids_c = (
            np.concatenate([mis_ranges[m] for m in mises])
            if mises.size
            else np.empty(0, dtype=np.int64)
        )
        p_t = np.zeros((ids.size, ids_c.size))
        c_off = 0
        for m in mises:
            dofs_m = mis_dof.row(m)
            b = mis_bases[m]
            p_t[np.searchsorted(ids, dofs_m), c_off : c_off + b.shape[1]] = b
            c_off += b.shape[1]
        coarse_locals.append((ids_c, p_t.T @ dense @ p_t))

    coarse_rel = Relation(len(coarse_locals), n_coarse, [ids for ids, _ in coarse_locals])
    return P, coarse_rel, coarse_locals


def _assemble(locals_, n):
    rows, cols, data = [], [], []
    for ids, dense in locals_:
        if ids.size == 0:
            continue
        rows.append(np.repeat(ids, ids.size))
        cols.append(np.tile(ids, ids.size))
        data.append(dense.reshape(-1))
    mat = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    mat.sum_duplicates()
    return mat


def _merge_pairs(entity_dof, locals_):
    """Greedily merge each entity with its smallest-id unmerged neighbor."""
    adjacency = entity_dof.multiply(transpose(entity_dof))
    n = entity_dof.n_rows
    taken = np.zeros(n, dtype=bool)
    groups = []
    for i in range(n):
        if taken[i]:
            continue
        taken[i] = True
        group = [i]
        for j in adjacency.row(i):
            if j != i and not taken[j]:
                taken[j] = True
                group.append(j)
                break
        groups.append(group)
    merged = []
    for group in groups:
        ids = np.unique(np.concatenate([locals_[g][0] for g in group]))
        dense = np.zeros((ids.size, ids.size))
        for g in group:
            gids, gmat = locals_[g]
            pos = np.searchsorted(ids, gids)
            dense[np.ix_(pos, pos)] += gmat
        merged.append((ids, dense))
    rel = Relation(len(merged), entity_dof.n_cols, [ids for ids, _ in merged])
    return rel, merged


def _direct_solver(matrix: sp.csr_matrix):
    n = matrix.shape[0]
    if n == 0:
        return lambda r: r.copy()
    if n <= 2000:
        factor = sla.cho_factor(matrix.toarray(), lower=True)
        return lambda r: sla.cho_solve(factor, r)
    lu = spla.splu(matrix.tocsc())
    return lambda r: lu.solve(r)


def build_hierarchy(
    inp: AmgeInput,
    theta_s: float = 0.05,
    nu_s: int = 2,
    svd_rel_tol: float = 1e-10,
    min_svd_drop: int = 0,
    max_levels: int = 20,
    coarse_size_target: int = 50,
    agglomerate: str = "none",
    fixed_count=None,
) -> Hierarchy:
    """Build the multilevel hierarchy by recursive spectral coarsening.

    ``agglomerate`` chooses whether entities are kept fixed between levels
    ("none", the p-multigrid-like mode) or merged pairwise with their
    smallest-id neighbor ("greedy").
    """
    if agglomerate not in ("none", "greedy"):
        raise ValueError(f"unknown agglomeration mode {agglomerate!r}")
    matrix, entity_dof, locals_ = inp.matrix, inp.entity_dof, inp.locals
    levels = []
    dims = [matrix.shape[0]]
    nnzs = [matrix.nnz]
    while len(levels) < max_levels and matrix.shape[0] > coarse_size_target:
        if agglomerate == "greedy" and levels:
            entity_dof, locals_ = _merge_pairs(entity_dof, locals_)
        result = _coarsen_level(
            entity_dof, locals_, theta_s, svd_rel_tol, min_svd_drop, fixed_count
        )
        if result is None:
            logger.warning(
                "coarsening failed to reduce dimension at %d dofs; stopping", matrix.shape[0]
            )
            break
        P, coarse_rel, coarse_locals = result
        levels.append(_Level(matrix=matrix, smoother=PolySmoother(matrix, nu_s, "l1"), P=P))
        matrix = _assemble(coarse_locals, coarse_rel.n_cols)
        entity_dof, locals_ = coarse_rel, coarse_locals
        dims.append(matrix.shape[0])
        nnzs.append(matrix.nnz)
    return Hierarchy(
        levels=levels,
        coarse_matrix=matrix,
        coarse_solve=_direct_solver(matrix),
        dims=dims,
        nnz_levels=nnzs,
    )


def vcycle_apply(hierarchy: Hierarchy, residual: np.ndarray) -> np.ndarray:
    """One symmetric V-cycle applied to a residual."""
    return hierarchy.apply(residual)
