"""Boolean relation tables between entity classes and their algebra.

A relation records which entities of one class are incident to entities of
another class (element_dof, Element_face, mis_dof, ...). The three operations
here -- transpose, boolean product, and grouping by identical owner sets --
are the building blocks for agglomerate interfaces and minimal intersection
sets.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = ["Relation", "transpose", "multiply", "partition_by_row_pattern"]


class Relation:
    """Sparse boolean incidence table.

    Rows are stored as strictly increasing numpy index arrays; construction
    canonicalizes (sorts, deduplicates) so that equal relations compare equal.
    Instances are immutable after construction.
    """

    __slots__ = ("n_rows", "n_cols", "_rows")

    def __init__(self, n_rows, n_cols, rows):
        if n_rows < 0 or n_cols < 0:
            raise ValueError("negative relation shape")
        if len(rows) != n_rows:
            raise ValueError(f"expected {n_rows} rows, got {len(rows)}")
        canon = []
        for i, row in enumerate(rows):
            r = np.unique(np.asarray(row, dtype=np.int64))
            if r.size and (r[0] < 0 or r[-1] >= n_cols):
                raise ValueError(f"row {i} has ids outside [0, {n_cols})")
            canon.append(r)
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self._rows = tuple(canon)

    @property
    def rows(self):
        return self._rows

    def row(self, i: int) -> np.ndarray:
        return self._rows[i]

    @property
    def nnz(self) -> int:
        return sum(r.size for r in self._rows)

    @classmethod
    def identity(cls, n: int) -> "Relation":
        return cls(n, n, [[i] for i in range(n)])

    @classmethod
    def from_csr(cls, mat: sp.spmatrix) -> "Relation":
        mat = mat.tocsr()
        rows = [mat.indices[mat.indptr[i] : mat.indptr[i + 1]] for i in range(mat.shape[0])]
        return cls(mat.shape[0], mat.shape[1], rows)

    def to_csr(self) -> sp.csr_matrix:
        indptr = np.zeros(self.n_rows + 1, dtype=np.int64)
        np.cumsum([r.size for r in self._rows], out=indptr[1:])
        indices = np.concatenate(self._rows) if self.n_rows else np.empty(0, dtype=np.int64)
        data = np.ones(indices.size, dtype=np.int64)
        return sp.csr_matrix((data, indices, indptr), shape=(self.n_rows, self.n_cols))

    def transpose(self) -> "Relation":
        cols = [[] for _ in range(self.n_cols)]
        for i, row in enumerate(self._rows):
            for j in row:
                cols[j].append(i)
        return Relation(self.n_cols, self.n_rows, cols)

    def multiply(self, other: "Relation") -> "Relation":
        if self.n_cols != other.n_rows:
            raise ValueError(
                f"dimension mismatch: {self.n_rows}x{self.n_cols} times "
                f"{other.n_rows}x{other.n_cols}"
            )
        prod = self.to_csr() @ other.to_csr()
        prod.sort_indices()
        return Relation.from_csr(prod)

    def __matmul__(self, other: "Relation") -> "Relation":
        return self.multiply(other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Relation):
            return NotImplemented
        return (
            self.n_rows == other.n_rows
            and self.n_cols == other.n_cols
            and all(np.array_equal(a, b) for a, b in zip(self._rows, other._rows))
        )

    def __hash__(self):
        return hash((self.n_rows, self.n_cols, tuple(r.tobytes() for r in self._rows)))

    def __repr__(self):
        return f"Relation({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


def transpose(r: Relation) -> Relation:
    """Reverse a relation: (i, j) related in the output iff (j, i) in the input."""
    return r.transpose()


def multiply(a: Relation, b: Relation) -> Relation:
    """Boolean product: (i, k) related iff some j links i to j in a and j to k in b."""
    return a.multiply(b)


def partition_by_row_pattern(owner_entity: Relation):
    """Group right-hand entities (dofs) by identical owner sets.

    ``owner_entity`` relates owners to dofs (e.g. Element_dof). Two dofs land
    in the same class iff the sets of owners containing them are identical.
    Class ids are assigned by ascending smallest member dof id.

    Returns ``(class_dof, entity_class)`` where ``class_dof`` lists the dofs
    of each class and ``entity_class`` relates every owner to the classes
    fully contained in it.

    Raises ValueError if some dof has no owner.
    """
    dof_owner = owner_entity.transpose()
    classes: dict[bytes, int] = {}
    class_members: list[list[int]] = []
    class_owner_rows: list[np.ndarray] = []
    for dof in range(dof_owner.n_rows):
        owners = dof_owner.row(dof)
        if owners.size == 0:
            raise ValueError(f"dof {dof} has an empty owner set")
        key = owners.tobytes()
        cid = classes.get(key)
        if cid is None:
            cid = len(class_members)
            classes[key] = cid
            class_members.append([])
            class_owner_rows.append(owners)
        class_members[cid].append(dof)
    class_dof = Relation(len(class_members), dof_owner.n_rows, class_members)
    entity_rows = [[] for _ in range(owner_entity.n_rows)]
    for cid, owners in enumerate(class_owner_rows):
        for e in owners:
            entity_rows[e].append(cid)
    entity_class = Relation(owner_entity.n_rows, len(class_members), entity_rows)
    return class_dof, entity_class
