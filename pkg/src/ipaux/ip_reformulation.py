"""Interior-penalty reformulation with interface unknowns.

Every dof of the conforming space is cloned once per owning Element (edof)
and once per owning Face (bdof). Each Element carries a local matrix: its
local stiffness plus diagonal-weighted penalties on the mismatch between its
traces and the Face unknowns. Elements couple only through Face unknowns, so
global assembly accumulates nothing but the bdof-bdof blocks.

Adof numbering: all edofs Element by Element (interior dofs first within each
Element), then all bdofs Face by Face. This makes the edof-edof block of the
assembled matrix contiguously block diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .agglomerate import AggTopology
from .mesh_fe import Discretization
from .relations import transpose

__all__ = [
    "AdofMap",
    "IpSystem",
    "BlockSystem",
    "build_adof_map",
    "build_local_ip",
    "assemble_ip",
    "build_pi",
    "build_injection",
    "build_ip_system",
    "measure_lambda",
]


@dataclass
class AdofMap:
    """Cloning structure from dofs to adofs (edofs + bdofs)."""

    n_dofs: int
    n_edofs: int
    n_bdofs: int
    adof_dof: np.ndarray = field(repr=False)
    adof_entity: np.ndarray = field(repr=False)
    adof_is_bdof: np.ndarray = field(repr=False)
    dof_adofs: list = field(repr=False)  # J_l per dof
    element_dofs: list = field(repr=False)  # dofs of T in edof layout order
    element_edofs: list = field(repr=False)
    face_dofs: list = field(repr=False)
    face_bdofs: list = field(repr=False)
    element_adofs: list = field(repr=False)  # edofs of T, then bdofs of its Faces
    element_n_edofs: list = field(repr=False)
    kappa: int = 1

    @property
    def n_adofs(self) -> int:
        return self.n_edofs + self.n_bdofs

    @cached_property
    def multiplicity(self) -> np.ndarray:
        """len(J_l) per dof."""
        return np.array([len(j) for j in self.dof_adofs], dtype=np.int64)

    @cached_property
    def idx_interior(self) -> np.ndarray:
        """Edofs of dofs whose clone set is that single edof ('i' class)."""
        mult = self.multiplicity[self.adof_dof]
        return np.flatnonzero((~self.adof_is_bdof) & (mult == 1))

    @cached_property
    def idx_element_boundary(self) -> np.ndarray:
        """Edofs that have sibling clones ('s' class)."""
        mult = self.multiplicity[self.adof_dof]
        return np.flatnonzero((~self.adof_is_bdof) & (mult > 1))

    @cached_property
    def idx_bdof(self) -> np.ndarray:
        return np.flatnonzero(self.adof_is_bdof)

    @cached_property
    def dofs_r(self) -> np.ndarray:
        """Dofs related to at least one bdof ('r' class)."""
        has_b = np.zeros(self.n_dofs, dtype=bool)
        has_b[self.adof_dof[self.adof_is_bdof]] = True
        return np.flatnonzero(has_b)


def build_adof_map(topology: AggTopology) -> AdofMap:
    """Clone every dof once per owning Element and once per owning Face."""
    n_dofs = topology.n_dofs
    dof_elements = transpose(topology.Element_dof)
    dof_faces = transpose(topology.Face_dof)
    for dof in range(n_dofs):
        if dof_elements.row(dof).size == 0:
            raise ValueError(f"dof {dof} belongs to no Element")

    n_owned_faces = np.array([dof_faces.row(d).size for d in range(n_dofs)])
    n_owned_elems = np.array([dof_elements.row(d).size for d in range(n_dofs)])
    interior = (n_owned_elems == 1) & (n_owned_faces == 0)

    dof_adofs = [[] for _ in range(n_dofs)]
    adof_dof, adof_entity = [], []
    element_dofs, element_edofs, element_n_edofs = [], [], []
    next_id = 0
    for T in range(topology.n_Elements):
        dofs = topology.Element_dof.row(T)
        ordered = np.concatenate([dofs[interior[dofs]], dofs[~interior[dofs]]])
        ids = np.arange(next_id, next_id + ordered.size)
        next_id += ordered.size
        element_dofs.append(ordered)
        element_edofs.append(ids)
        element_n_edofs.append(ordered.size)
        adof_dof.extend(ordered)
        adof_entity.extend([T] * ordered.size)
        for d, j in zip(ordered, ids):
            dof_adofs[d].append(j)
    n_edofs = next_id

    face_dofs, face_bdofs = [], []
    for F in range(topology.n_Faces):
        dofs = topology.Face_dof.row(F)
        ids = np.arange(next_id, next_id + dofs.size)
        next_id += dofs.size
        face_dofs.append(dofs)
        face_bdofs.append(ids)
        adof_dof.extend(dofs)
        adof_entity.extend([F] * dofs.size)
        for d, j in zip(dofs, ids):
            dof_adofs[d].append(j)
    n_bdofs = next_id - n_edofs

    element_adofs = []
    for T in range(topology.n_Elements):
        parts = [element_edofs[T]]
        for F in topology.Element_Face.row(T):
            parts.append(face_bdofs[F])
        element_adofs.append(np.concatenate(parts) if parts else np.empty(0, np.int64))

    dof_adofs = [np.array(j, dtype=np.int64) for j in dof_adofs]
    return AdofMap(
        n_dofs=n_dofs,
        n_edofs=n_edofs,
        n_bdofs=n_bdofs,
        adof_dof=np.array(adof_dof, dtype=np.int64),
        adof_entity=np.array(adof_entity, dtype=np.int64),
        adof_is_bdof=np.arange(next_id) >= n_edofs,
        dof_adofs=dof_adofs,
        element_dofs=element_dofs,
        element_edofs=element_edofs,
        face_dofs=face_dofs,
        face_bdofs=face_bdofs,
        element_adofs=element_adofs,
        element_n_edofs=element_n_edofs,
        kappa=max((j.size for j in dof_adofs), default=1),
    )


def build_local_ip(
    A_T, D: np.ndarray, topology: AggTopology, T: int, delta: float, adof_map: AdofMap
) -> sp.csr_matrix:
    """Local IP matrix of Element T on its (edofs, bdofs of its Faces).

    Realizes v_e' A_T v_e + (1/delta) sum_F (v_e|F - v_b|F)' D_F (v_e|F - v_b|F)
    where D_F restricts the global diagonal weight D to the dofs of F. The
    penalty touches only single entries per Face dof, so it adds diagonal
    terms to the ee/bb blocks and one coupling entry per (edof, bdof) pair.
    """
    if delta <= 0:
        raise ValueError("penalty delta must be positive")
    n_e = adof_map.element_n_edofs[T]
    faces = topology.Element_Face.row(T)
    n_b = sum(adof_map.face_dofs[F].size for F in faces)
    n = n_e + n_b

    a_t = sp.coo_matrix(A_T)
    rows = [a_t.row]
    cols = [a_t.col]
    data = [a_t.data]

    pos = {d: i for i, d in enumerate(adof_map.element_dofs[T])}
    off = n_e
    for F in faces:
        dofs_f = adof_map.face_dofs[F]
        if dofs_f.size == 0:
            raise ValueError(f"Face {F} has an empty dof set")
        w = D[dofs_f] / delta
        e_pos = np.array([pos[d] for d in dofs_f], dtype=np.int64)
        b_pos = off + np.arange(dofs_f.size, dtype=np.int64)
        rows.extend([e_pos, b_pos, e_pos, b_pos])
        cols.extend([e_pos, b_pos, b_pos, e_pos])
        data.extend([w, w, -w, -w])
        off += dofs_f.size

    mat = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    mat.sum_duplicates()
    return mat


def assemble_ip(local_mats: list, adof_map: AdofMap) -> sp.csr_matrix:
    """Assemble the global IP matrix; only bdof-bdof entries accumulate."""
    n = adof_map.n_adofs
    seen = np.zeros(n, dtype=bool)
    rows, cols, data = [], [], []
    for mat, ids in zip(local_mats, adof_map.element_adofs):
        seen[ids] = True
        loc = sp.coo_matrix(mat)
        rows.append(ids[loc.row])
        cols.append(ids[loc.col])
        data.append(loc.data)
    if not np.all(seen):
        missing = np.flatnonzero(~seen)
        raise ValueError(f"adofs {missing[:10]} referenced by no Element")
    out = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    out.sum_duplicates()
    return out


def build_pi(adof_map: AdofMap) -> sp.csr_matrix:
    """Averaging transfer: (Pi v)_l = mean of v over the clones J_l."""
    weights = 1.0 / adof_map.multiplicity[adof_map.adof_dof]
    cols = np.arange(adof_map.n_adofs)
    return sp.csr_matrix(
        (weights, (adof_map.adof_dof, cols)), shape=(adof_map.n_dofs, adof_map.n_adofs)
    )


def build_injection(adof_map: AdofMap) -> sp.csr_matrix:
    """Entry-copying injection; fill pattern of Pi^T with all nonzeros 1."""
    rows = np.arange(adof_map.n_adofs)
    return sp.csr_matrix(
        (np.ones(adof_map.n_adofs), (rows, adof_map.adof_dof)),
        shape=(adof_map.n_adofs, adof_map.n_dofs),
    )


@dataclass
class BlockSystem:
    """Element-by-element assembled system: global matrix plus local matrices
    with their global adof ids and edof/bdof split (edofs first)."""

    matrix: sp.csr_matrix
    locals: list
    local_ids: list
    n_ee: list
    n_edofs: int
    n_bdofs: int

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass
class IpSystem:
    """Assembled IP reformulation of one discretization/topology pair."""

    delta: float
    weights: np.ndarray
    topology: AggTopology
    adof_map: AdofMap
    element_stiffness: list  # A_T per Element (csr, edof layout order)
    local_mats: list  # local IP matrices per Element
    matrix: sp.csr_matrix
    Pi: sp.csr_matrix
    Ih: sp.csr_matrix

    @property
    def n_adofs(self) -> int:
        return self.adof_map.n_adofs

    @property
    def kappa(self) -> int:
        return self.adof_map.kappa

    def block_system(self) -> BlockSystem:
        return BlockSystem(
            matrix=self.matrix,
            locals=self.local_mats,
            local_ids=self.adof_map.element_adofs,
            n_ee=list(self.adof_map.element_n_edofs),
            n_edofs=self.adof_map.n_edofs,
            n_bdofs=self.adof_map.n_bdofs,
        )

    @cached_property
    def measured_lambda(self) -> float:
        return measure_lambda(self.element_stiffness, self.weights, self.adof_map)


def measure_lambda(element_stiffness, weights, adof_map) -> float:
    """Largest eigenvalue over Elements of A_T q = lambda D|_T q, with D the
    global penalty-weight diagonal restricted to the Element."""
    lam = 0.0
    for a_t, dofs in zip(element_stiffness, adof_map.element_dofs):
        d = weights[dofs]
        scale = 1.0 / np.sqrt(d)
        dense = a_t.toarray() if sp.issparse(a_t) else np.asarray(a_t)
        sym = dense * scale[:, None] * scale[None, :]
        sym = 0.5 * (sym + sym.T)
        lam = max(lam, float(sla.eigvalsh(sym)[-1]))
    return lam


def local_element_stiffness(disc: Discretization, topology: AggTopology, adof_map: AdofMap, T: int):
    """Assemble A_T on the dofs of Element T, in its edof layout order."""
    dofs = adof_map.element_dofs[T]
    pos = np.full(disc.n_free, -1, dtype=np.int64)
    pos[dofs] = np.arange(dofs.size)
    rows, cols, data = [], [], []
    for tau in topology.Element_element.row(T):
        fids = disc.element_free_dofs[tau]
        p = pos[fids]
        a = disc.element_matrices[tau]
        rows.append(np.repeat(p, p.size))
        cols.append(np.tile(p, p.size))
        data.append(np.asarray(a).reshape(-1))
    mat = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dofs.size, dofs.size),
    ).tocsr()
    mat.sum_duplicates()
    return mat


def build_ip_system(
    disc: Discretization,
    topology: AggTopology,
    delta: float = 1.0,
    penalty_weights: str = "diag",
) -> IpSystem:
    """Build the full IP system: local matrices, assembled matrix, transfers.

    ``penalty_weights`` selects D_F: "diag" restricts the diagonal of the
    global A, "l1" the weighted l1 diagonal.
    """
    if penalty_weights == "diag":
        weights = disc.D
    elif penalty_weights == "l1":
        weights = disc.W
    else:
        raise ValueError(f"unknown penalty weight choice {penalty_weights!r}")

    adof_map = build_adof_map(topology)
    stiffness = [
        local_element_stiffness(disc, topology, adof_map, T)
        for T in range(topology.n_Elements)
    ]
    local_mats = [
        build_local_ip(stiffness[T], weights, topology, T, delta, adof_map)
        for T in range(topology.n_Elements)
    ]
    matrix = assemble_ip(local_mats, adof_map)
    return IpSystem(
        delta=delta,
        weights=weights,
        topology=topology,
        adof_map=adof_map,
        element_stiffness=stiffness,
        local_mats=local_mats,
        matrix=matrix,
        Pi=build_pi(adof_map),
        Ih=build_injection(adof_map),
    )
