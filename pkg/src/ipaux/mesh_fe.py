"""Built-in problem generator: structured quad/hex meshes with tensor-product
Lagrange elements, per-element stiffness matrices, and the assembled SPD
system with homogeneous Dirichlet boundary eliminated.

Cells are axis-aligned with uniform spacing per axis, so every element shares
one reference stiffness matrix scaled by its coefficient value. Quadrature is
Gauss-Legendre with order+1 points per axis, exact for these integrands.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .relations import Relation

__all__ = [
    "Mesh",
    "CoefficientField",
    "Discretization",
    "build_mesh",
    "element_stiffness",
    "assemble",
    "l1_weights",
]


def _gauss_legendre_01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def lobatto_nodes_01(order: int) -> np.ndarray:
    """Gauss-Lobatto points on [0, 1] for a degree ``order`` basis."""
    if order == 1:
        return np.array([0.0, 1.0])
    coeff = np.zeros(order + 1)
    coeff[order] = 1.0
    interior = np.polynomial.legendre.legroots(np.polynomial.legendre.legder(coeff))
    return np.concatenate(([0.0], 0.5 * (np.sort(interior) + 1.0), [1.0]))


def _lagrange_values(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Values L_i(x_q) of the Lagrange basis on ``nodes``; shape (n_nodes, n_q)."""
    n = nodes.size
    out = np.ones((n, x.size))
    for i in range(n):
        for j in range(n):
            if j != i:
                out[i] *= (x - nodes[j]) / (nodes[i] - nodes[j])
    return out


def _lagrange_derivs(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Derivatives L_i'(x_q); product-rule form, valid at arbitrary points."""
    n = nodes.size
    out = np.zeros((n, x.size))
    for i in range(n):
        denom = np.prod([nodes[i] - nodes[j] for j in range(n) if j != i])
        for k in range(n):
            if k == i:
                continue
            term = np.ones_like(x)
            for j in range(n):
                if j != i and j != k:
                    term *= x - nodes[j]
            out[i] += term
        out[i] /= denom
    return out


def reference_matrices_1d(order: int, nodes: str = "equispaced"):
    """1D stiffness/mass matrices and node positions on the unit interval."""
    if nodes == "equispaced":
        pts = np.linspace(0.0, 1.0, order + 1)
    elif nodes == "lobatto":
        pts = lobatto_nodes_01(order)
    else:
        raise ValueError(f"unknown node placement {nodes!r}")
    xq, wq = _gauss_legendre_01(order + 1)
    vals = _lagrange_values(pts, xq)
    ders = _lagrange_derivs(pts, xq)
    stiff = (ders * wq) @ ders.T
    mass = (vals * wq) @ vals.T
    stiff = 0.5 * (stiff + stiff.T)
    mass = 0.5 * (mass + mass.T)
    return stiff, mass, pts


@dataclass
class Mesh:
    """Structured quad/hex mesh with nodal Lagrange dofs of degree ``order``.

    ``element_dof``, ``element_face``, ``face_dof`` and ``element_element``
    are relations over fine entities; only interior faces enter the face
    list. Dof ids enumerate the tensor grid lexicographically (x fastest).
    """

    dim: int
    cells: tuple
    order: int
    nodes: str
    n_elements: int
    n_dofs: int
    element_dof: Relation
    element_face: Relation
    face_dof: Relation
    element_element: Relation
    boundary_dofs: np.ndarray = field(repr=False)
    node_coords: np.ndarray = field(repr=False)

    @cached_property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs] = False
        return np.flatnonzero(mask)

    @cached_property
    def free_index(self) -> np.ndarray:
        idx = np.full(self.n_dofs, -1, dtype=np.int64)
        idx[self.free_dofs] = np.arange(self.free_dofs.size)
        return idx

    @property
    def n_free(self) -> int:
        return self.free_dofs.size

    @cached_property
    def element_centers(self) -> np.ndarray:
        idx = np.empty((self.n_elements, self.dim), dtype=np.int64)
        rem = np.arange(self.n_elements)
        for d in range(self.dim):
            idx[:, d] = rem % self.cells[d]
            rem //= self.cells[d]
        return (idx + 0.5) / np.array(self.cells, dtype=float)

    @cached_property
    def _reference(self):
        return reference_matrices_1d(self.order, self.nodes)

    @cached_property
    def geometric_stiffness(self) -> np.ndarray:
        """Element stiffness for unit coefficient (identical for all cells)."""
        stiff, mass, _ = self._reference
        h = [1.0 / c for c in self.cells]
        ks = [stiff / h[d] for d in range(self.dim)]
        ms = [mass * h[d] for d in range(self.dim)]
        total = None
        for d in range(self.dim):
            factors = [ks[a] if a == d else ms[a] for a in range(self.dim)]
            term = factors[0]
            for f in factors[1:]:
                term = np.kron(f, term)  # local index runs x fastest
            total = term if total is None else total + term
        return 0.5 * (total + total.T)

    @cached_property
    def geometric_load(self) -> np.ndarray:
        """Element load vector for f == 1."""
        _, mass, _ = self._reference
        h = [1.0 / c for c in self.cells]
        ones = [mass.sum(axis=1) * h[d] for d in range(self.dim)]
        vec = ones[0]
        for d in range(1, self.dim):
            vec = np.kron(ones[d], vec)
        return vec


def build_mesh(dim: int, cells_per_axis, order: int, nodes: str = "equispaced") -> Mesh:
    """Construct the structured mesh and all fine-scale relations."""
    if dim not in (2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    if order < 1:
        raise ValueError("order must be >= 1")
    if np.isscalar(cells_per_axis):
        cells = (int(cells_per_axis),) * dim
    else:
        cells = tuple(int(c) for c in cells_per_axis)
    if len(cells) != dim or any(c < 1 for c in cells):
        raise ValueError(f"invalid cells_per_axis {cells_per_axis!r}")

    p = order
    widths = [p * c + 1 for c in cells]
    n_dofs = int(np.prod(widths))
    n_elements = int(np.prod(cells))

    def node_id(g):
        out = g[-1]
        for d in range(dim - 2, -1, -1):
            out = out * widths[d] + g[d]
        return out

    def cell_id(c):
        out = c[-1]
        for d in range(dim - 2, -1, -1):
            out = out * cells[d] + c[d]
        return out

    local_ranges = [np.arange(p + 1)] * dim
    grids = np.meshgrid(*local_ranges, indexing="ij")
    # local index runs x fastest: order the (p+1)^dim offsets accordingly
    local_offsets = np.stack([g.reshape(-1, order="F") for g in grids], axis=1)

    element_dof_rows = []
    for e in range(n_elements):
        c = np.empty(dim, dtype=np.int64)
        rem = e
        for d in range(dim):
            c[d] = rem % cells[d]
            rem //= cells[d]
        g = local_offsets + p * c
        ids = g[:, -1].copy()
        for d in range(dim - 2, -1, -1):
            ids = ids * widths[d] + g[:, d]
        element_dof_rows.append(ids)
    element_dof = Relation(n_elements, n_dofs, element_dof_rows)

    # interior faces, grouped axis-by-axis, lexicographic within each axis
    face_dof_rows = []
    face_cells = []
    for axis in range(dim):
        tang = [d for d in range(dim) if d != axis]
        plane_counts = [cells[d] for d in tang]
        for k in range(1, cells[axis]):
            for plane in range(int(np.prod(plane_counts))):
                c = np.zeros(dim, dtype=np.int64)
                rem = plane
                for d in tang:
                    c[d] = rem % cells[d]
                    rem //= cells[d]
                c[axis] = k - 1
                left = cell_id(c)
                c[axis] = k
                right = cell_id(c)
                face_cells.append((left, right))
                offs = [np.arange(p + 1)] * (dim - 1)
                mg = np.meshgrid(*offs, indexing="ij") if dim == 3 else [offs[0]]
                dofs = []
                if dim == 2:
                    t = tang[0]
                    for b in range(p + 1):
                        g = [0, 0]
                        g[axis] = p * k
                        g[t] = p * c[t] + b
                        dofs.append(node_id(g))
                else:
                    t0, t1 = tang
                    for b1 in range(p + 1):
                        for b0 in range(p + 1):
                            g = [0, 0, 0]
                            g[axis] = p * k
                            g[t0] = p * c[t0] + b0
                            g[t1] = p * c[t1] + b1
                            dofs.append(node_id(g))
                face_dof_rows.append(sorted(dofs))
    n_faces = len(face_dof_rows)
    face_dof = Relation(n_faces, n_dofs, face_dof_rows)

    element_face_rows = [[] for _ in range(n_elements)]
    element_element_rows = [set() for _ in range(n_elements)]
    for f, (a, b) in enumerate(face_cells):
        element_face_rows[a].append(f)
        element_face_rows[b].append(f)
        element_element_rows[a].add(b)
        element_element_rows[b].add(a)
    element_face = Relation(n_elements, n_faces, element_face_rows)
    element_element = Relation(n_elements, n_elements, [sorted(s) for s in element_element_rows])

    grid_idx = np.empty((n_dofs, dim), dtype=np.int64)
    rem = np.arange(n_dofs)
    for d in range(dim):
        grid_idx[:, d] = rem % widths[d]
        rem //= widths[d]
    boundary = np.zeros(n_dofs, dtype=bool)
    for d in range(dim):
        boundary |= (grid_idx[:, d] == 0) | (grid_idx[:, d] == widths[d] - 1)
    boundary_dofs = np.flatnonzero(boundary)

    _, _, ref_pts = reference_matrices_1d(order, nodes)
    node_coords = np.empty((n_dofs, dim))
    for d in range(dim):
        g = grid_idx[:, d]
        cell = np.minimum(g // p, cells[d] - 1)
        local = g - p * cell
        node_coords[:, d] = (cell + ref_pts[local]) / cells[d]

    return Mesh(
        dim=dim,
        cells=cells,
        order=order,
        nodes=nodes,
        n_elements=n_elements,
        n_dofs=n_dofs,
        element_dof=element_dof,
        element_face=element_face,
        face_dof=face_dof,
        element_element=element_element,
        boundary_dofs=boundary_dofs,
        node_coords=node_coords,
    )


@dataclass(frozen=True)
class CoefficientField:
    """Piecewise-constant permeability: one strictly positive value per element."""

    values: np.ndarray

    def __post_init__(self):
        if np.any(self.values <= 0):
            raise ValueError("coefficient values must be strictly positive")

    @classmethod
    def constant(cls, mesh: Mesh, value: float = 1.0) -> "CoefficientField":
        return cls(np.full(mesh.n_elements, float(value)))

    @classmethod
    def checkerboard(
        cls, mesh: Mesh, contrast: float, pattern_cells: int = 4
    ) -> "CoefficientField":
        """Contrast value on the odd cells of a fixed coarse checkerboard.

        The pattern lives on a ``pattern_cells``-per-axis grid over the unit
        domain, so it is invariant under mesh refinement.
        """
        centers = mesh.element_centers
        cell = np.floor(centers * pattern_cells).astype(np.int64)
        parity = cell.sum(axis=1) % 2
        return cls(np.where(parity == 1, float(contrast), 1.0))


def element_stiffness(mesh: Mesh, coeff: CoefficientField, tau: int) -> np.ndarray:
    """Dense stiffness matrix of element ``tau`` (all local dofs, no BCs)."""
    return coeff.values[tau] * mesh.geometric_stiffness


@dataclass
class Discretization:
    """Assembled SPD system on free dofs, with per-element restrictions."""

    mesh: Mesh
    coeff: CoefficientField
    A: sp.csr_matrix
    D: np.ndarray
    W: np.ndarray
    rhs: np.ndarray
    element_free_dofs: list  # free-dof ids per element, ascending
    element_matrices: list  # dense A_tau restricted to those dofs

    @property
    def n_free(self) -> int:
        return self.A.shape[0]


def l1_weights(A: sp.csr_matrix) -> np.ndarray:
    """Weighted l1 diagonal w_i = sum_j |a_ij| sqrt(a_ii / a_jj)."""
    d = np.asarray(A.diagonal())
    if np.any(d <= 0):
        raise ValueError("matrix has a nonpositive diagonal entry")
    absA = abs(A)
    sq = np.sqrt(d)
    return sq * (absA @ (1.0 / sq))


def assemble(mesh: Mesh, coeff: CoefficientField) -> Discretization:
    """Assemble A, D, W and the f == 1 right-hand side on free dofs."""
    if mesh.n_free == 0:
        raise ValueError("all dofs are on the Dirichlet boundary; empty system")
    k_geom = mesh.geometric_stiffness
    load_geom = mesh.geometric_load
    m = k_geom.shape[0]
    free_index = mesh.free_index

    rows_l, cols_l, data_l = [], [], []
    rhs = np.zeros(mesh.n_free)
    element_free_dofs = []
    element_matrices = []
    for tau in range(mesh.n_elements):
        g = mesh.element_dof.row(tau)
        f = free_index[g]
        keep = f >= 0
        fids = f[keep]
        a_tau = coeff.values[tau] * k_geom[np.ix_(keep, keep)]
        element_free_dofs.append(fids)
        element_matrices.append(a_tau)
        rows_l.append(np.repeat(fids, fids.size))
        cols_l.append(np.tile(fids, fids.size))
        data_l.append(a_tau.reshape(-1))
        rhs[fids] += load_geom[keep]
    A = sp.coo_matrix(
        (np.concatenate(data_l), (np.concatenate(rows_l), np.concatenate(cols_l))),
        shape=(mesh.n_free, mesh.n_free),
    ).tocsr()
    A.sum_duplicates()
    D = np.asarray(A.diagonal())
    if np.any(D <= 0):
        raise ValueError("assembled matrix has a nonpositive diagonal entry")
    return Discretization(
        mesh=mesh,
        coeff=coeff,
        A=A,
        D=D,
        W=l1_weights(A),
        rhs=rhs,
        element_free_dofs=element_free_dofs,
        element_matrices=element_matrices,
    )
