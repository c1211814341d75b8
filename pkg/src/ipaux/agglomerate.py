"""Agglomeration of fine elements into Elements and construction of the
agglomerate interface Faces with all associated relations.

Dof-level relations are expressed in the free-dof numbering of the mesh
(Dirichlet dofs are eliminated before any interface construction).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh_fe import Mesh
from .relations import Relation, multiply, partition_by_row_pattern, transpose

__all__ = ["AggTopology", "partition_elements", "build_topology"]

logger = logging.getLogger(__name__)


@dataclass
class AggTopology:
    """Agglomerate entities of one partition level.

    Faces are maximal groups of interior fine faces separating the same pair
    of Elements; each Face relates exactly two Elements. ``Element_dof`` and
    ``Face_dof`` use free-dof ids.
    """

    mesh: Mesh
    Element_element: Relation
    Element_face: Relation
    Face_face: Relation
    Element_Face: Relation
    Element_dof: Relation
    Face_dof: Relation

    @property
    def n_Elements(self) -> int:
        return self.Element_element.n_rows

    @property
    def n_Faces(self) -> int:
        return self.Face_face.n_rows

    @property
    def n_dofs(self) -> int:
        return self.Element_dof.n_cols

    @cached_property
    def Face_Element(self) -> Relation:
        return transpose(self.Element_Face)

    @cached_property
    def element_adjacency(self) -> Relation:
        """Element graph through shared Faces, self loops removed."""
        full = multiply(self.Element_Face, self.Face_Element)
        rows = [r[r != i] for i, r in enumerate(full.rows)]
        return Relation(full.n_rows, full.n_cols, rows)


def partition_elements(mesh: Mesh, blocks_per_axis=None, n_parts=None) -> Relation:
    """Partition fine elements into Elements.

    Structured mode (``blocks_per_axis``) carves the cell grid into equal
    axis-aligned blocks; the block counts must divide the cell counts. Graph
    mode (``n_parts``) grows connected parts by BFS over the dual graph,
    smallest unassigned element first; a part can never come out
    disconnected, but the final part count may exceed the request when the
    remaining region fragments (reported via logging).
    """
    if (blocks_per_axis is None) == (n_parts is None):
        raise ValueError("specify exactly one of blocks_per_axis and n_parts")

    if blocks_per_axis is not None:
        if np.isscalar(blocks_per_axis):
            blocks = (int(blocks_per_axis),) * mesh.dim
        else:
            blocks = tuple(int(b) for b in blocks_per_axis)
        if len(blocks) != mesh.dim or any(b < 1 for b in blocks):
            raise ValueError(f"invalid blocks_per_axis {blocks_per_axis!r}")
        for c, b in zip(mesh.cells, blocks):
            if c % b != 0:
                raise ValueError(f"{b} blocks do not divide {c} cells")
        span = [c // b for c, b in zip(mesh.cells, blocks)]
        rows = [[] for _ in range(int(np.prod(blocks)))]
        rem = np.arange(mesh.n_elements)
        idx = np.empty((mesh.n_elements, mesh.dim), dtype=np.int64)
        for d in range(mesh.dim):
            idx[:, d] = rem % mesh.cells[d]
            rem //= mesh.cells[d]
        block_of = np.zeros(mesh.n_elements, dtype=np.int64)
        for d in range(mesh.dim - 1, -1, -1):
            block_of = block_of * blocks[d] + idx[:, d] // span[d]
        for e, b in enumerate(block_of):
            rows[b].append(e)
        return Relation(len(rows), mesh.n_elements, rows)

    n_parts = int(n_parts)
    if not 1 <= n_parts <= mesh.n_elements:
        raise ValueError(f"n_parts {n_parts} outside [1, {mesh.n_elements}]")
    neighbors = mesh.element_element
    unassigned = set(range(mesh.n_elements))
    parts = []
    while unassigned:
        left = n_parts - len(parts)
        target = int(np.ceil(len(unassigned) / left)) if left > 0 else len(unassigned)
        seed = min(unassigned)
        part = [seed]
        unassigned.discard(seed)
        frontier = [seed]
        while len(part) < target and frontier:
            nxt = sorted(
                {n for e in frontier for n in neighbors.row(e) if n in unassigned}
            )
            frontier = []
            for n in nxt:
                if len(part) >= target:
                    break
                part.append(n)
                unassigned.discard(n)
                frontier.append(n)
        parts.append(sorted(part))
    if len(parts) != n_parts:
        logger.warning(
            "greedy partition produced %d parts for requested %d", len(parts), n_parts
        )
    return Relation(len(parts), mesh.n_elements, parts)


def build_topology(mesh: Mesh, Element_element: Relation) -> AggTopology:
    """Derive all agglomerate relations from a partition of the elements."""
    covered = np.zeros(mesh.n_elements, dtype=np.int64)
    for row in Element_element.rows:
        covered[row] += 1
    if np.any(covered != 1):
        raise ValueError("partition does not cover all elements exactly once")

    Element_face = multiply(Element_element, mesh.element_face)
    face_element = transpose(mesh.element_face)
    owner = np.empty(mesh.n_elements, dtype=np.int64)
    for T, row in enumerate(Element_element.rows):
        owner[row] = T

    n_faces = mesh.face_dof.n_rows
    interface = np.zeros(n_faces, dtype=bool)
    for f in range(n_faces):
        elems = face_element.row(f)
        interface[f] = owner[elems[0]] != owner[elems[1]]
    interface_ids = np.flatnonzero(interface)
    sub_index = np.full(n_faces, -1, dtype=np.int64)
    sub_index[interface_ids] = np.arange(interface_ids.size)

    eif_rows = [sub_index[r[interface[r]]] for r in Element_face.rows]
    element_ifaces = Relation(Element_element.n_rows, interface_ids.size, eif_rows)
    face_face_sub, element_Face = partition_by_row_pattern(element_ifaces)
    face_face = Relation(
        face_face_sub.n_rows, n_faces, [interface_ids[r] for r in face_face_sub.rows]
    )
    face_Element = transpose(element_Face)
    bad = [F for F in range(face_face.n_rows) if face_Element.row(F).size != 2]
    if bad:
        raise AssertionError(f"Faces {bad} do not separate exactly two Elements")

    free_index = mesh.free_index
    n_free = mesh.n_free

    def to_free(rel: Relation) -> Relation:
        rows = []
        for r in rel.rows:
            f = free_index[r]
            rows.append(f[f >= 0])
        return Relation(rel.n_rows, n_free, rows)

    Element_dof = to_free(multiply(Element_element, mesh.element_dof))
    Face_dof = to_free(multiply(face_face, mesh.face_dof))

    return AggTopology(
        mesh=mesh,
        Element_element=Element_element,
        Element_face=Element_face,
        Face_face=face_face,
        Element_Face=element_Face,
        Element_dof=Element_dof,
        Face_dof=Face_dof,
    )
