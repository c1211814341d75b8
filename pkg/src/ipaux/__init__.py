"""Auxiliary-space preconditioning toolkit built on an interior-penalty
reformulation with interface unknowns."""

from .agglomerate import AggTopology, build_topology, partition_elements
from .amge import AmgeInput, Hierarchy, build_hierarchy, vcycle_apply
from .coarse_aux import CoarseSpace, build_coarse, element_eigenbasis, face_trace_basis
from .condensation import SchurSystem, assemble_schur, bsc_apply, build_schur_system, local_schur
from .ip_reformulation import (
    AdofMap,
    BlockSystem,
    IpSystem,
    assemble_ip,
    build_adof_map,
    build_injection,
    build_ip_system,
    build_local_ip,
    build_pi,
)
from .mesh_fe import (
    CoefficientField,
    Discretization,
    Mesh,
    assemble,
    build_mesh,
    element_stiffness,
    l1_weights,
)
from .mmio import export_matrix, read_matrix
from .relations import Relation, multiply, partition_by_row_pattern, transpose
from .smoothers import PolySmoother, cheb_roots, estimate_b, smoother_apply
from .solvers import (
    AuxPreconditioner,
    IndefinitePreconditionerError,
    SolveReport,
    exact_inverse,
    extreme_eigs,
    pcg,
)

__version__ = "0.1.0"
