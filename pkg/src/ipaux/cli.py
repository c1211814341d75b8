"""Experiment harness: configuration, solver composition, operator-complexity
metrics, CSV reports, and matrix export.

Commands:
    ipaux run    --config FILE | --preset NAME [--set key=value ...] --csv OUT
    ipaux export --config FILE | --preset NAME --what {A,ip,schur,coarse} --dir PATH

Configs are plain key=value files; presets are named after the experiment
scenarios they reproduce. Exit code is nonzero when any row fails.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import amge as amge_mod
from . import mmio
from .agglomerate import build_topology, partition_elements
from .coarse_aux import build_coarse
from .condensation import build_schur_system, bsc_apply
from .ip_reformulation import build_ip_system
from .mesh_fe import CoefficientField, assemble, build_mesh
from .smoothers import PolySmoother
from .solvers import AuxPreconditioner, exact_inverse, pcg

__all__ = [
    "ExperimentConfig",
    "OcMetrics",
    "PRESETS",
    "compute_oc",
    "build_stack",
    "run_experiment",
    "write_csv",
    "export_matrix",
    "main",
]

export_matrix = mmio.export_matrix

ROW_COLUMNS = [
    "step",
    "n_dofs",
    "n_adofs_or_bdofs",
    "oc_ip",
    "oc_aux",
    "oc_orig",
    "n_it",
    "final_measure",
    "wall_ms",
    "converged",
]


@dataclass
class ExperimentConfig:
    dim: int = 2
    cells: int = 16
    order: int = 1
    refinements: list = None  # cells-per-axis sweep; None means [cells]
    orders: list = None  # order sweep; None means [order]
    contrast: float = 1.0
    pattern_cells: int = 4
    agg_elems: int = 4  # fine elements per agglomerate, per axis
    delta: float = 1.0
    theta: float = 0.05
    theta_s: float = 0.05
    nu: int = 2
    nu_s: int = 2
    precond: str = "mult"  # add | mult
    coarse: str = "spectral"  # none | spectral
    coarse_vectors: int = 0  # 0: theta rule; k>0: fixed count per Element
    condense: bool = False
    aux_solver: str = "exact"  # exact | amge | pcg-amge
    aux_pcg_iters: int = 3
    amge_vectors: int = 0  # 0: theta_s rule; k>0: fixed count per entity
    min_svd_drop: int = 0
    svd_tol: float = 1e-10
    amge_agglomerate: str = "none"  # none | greedy
    amge_max_levels: int = 20
    amge_coarse_target: int = 50
    penalty_weights: str = "diag"  # diag | l1
    smoother_scaling: str = "l1"  # l1 | diag
    rel_tol: float = 1e-8
    max_iter: int = 2000
    nodes: str = "equispaced"
    timing: bool = True

    def validate(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.precond not in ("add", "mult"):
            raise ValueError("precond must be add or mult")
        if self.coarse not in ("none", "spectral"):
            raise ValueError("coarse must be none or spectral")
        if self.aux_solver not in ("exact", "amge", "pcg-amge"):
            raise ValueError("aux_solver must be exact, amge or pcg-amge")
        if self.refinements is not None and self.orders is not None:
            raise ValueError("refinements and orders sweeps are mutually exclusive")
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")
        return self

    def steps(self):
        """(kind, step label, cells, order) per CSV row."""
        if self.orders is not None:
            return [("order", o, self.cells, o) for o in self.orders]
        if self.refinements is not None:
            return [
                ("refs", i, c, self.order) for i, c in enumerate(self.refinements)
            ]
        return [("refs", 0, self.cells, self.order)]

    @classmethod
    def from_preset(cls, name: str) -> "ExperimentConfig":
        if name not in PRESETS:
            raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
        return cls(**PRESETS[name]).validate()

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        values = {}
        for line_no, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
        cfg = cls()
        cfg.apply_overrides(values)
        return cfg.validate()

    def apply_overrides(self, values: dict):
        fields = {f.name: f for f in dataclasses.fields(self)}
        for key, raw in values.items():
            if key not in fields:
                raise KeyError(f"unknown config key {key!r}")
            setattr(self, key, _parse_value(key, raw, getattr(self, key)))
        return self

    def to_file(self, path):
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, (list, tuple)):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        Path(path).write_text("\n".join(lines) + "\n")


_LIST_KEYS = {"refinements", "orders"}
_BOOL_KEYS = {"condense", "timing"}
_INT_KEYS = {
    "dim", "cells", "order", "pattern_cells", "agg_elems", "nu", "nu_s",
    "coarse_vectors", "aux_pcg_iters", "amge_vectors", "min_svd_drop",
    "amge_max_levels", "amge_coarse_target", "max_iter",
}
_FLOAT_KEYS = {"contrast", "delta", "theta", "theta_s", "svd_tol", "rel_tol"}


def _parse_value(key, raw, current):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if key in _LIST_KEYS:
        return [int(tok) for tok in raw.split(",") if tok.strip()] if raw else []
    if key in _BOOL_KEYS:
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    return raw


PRESETS = {
    # low-order 3D refinement studies, spectral coarse pair with one vector
    # per Element everywhere, nu = 4
    "loworder-exact": dict(
        dim=3, cells=8, order=1, refinements=[4, 8], contrast=1e4, agg_elems=2,
        coarse="spectral", coarse_vectors=1, amge_vectors=1, condense=False,
        aux_solver="exact", nu=4, nu_s=4,
    ),
    "loworder-amge": dict(
        dim=3, cells=8, order=1, refinements=[4, 8], contrast=1e4, agg_elems=2,
        coarse="spectral", coarse_vectors=1, amge_vectors=1, condense=False,
        aux_solver="amge", amge_agglomerate="greedy", nu=4, nu_s=4,
    ),
    "loworder-schur-exact": dict(
        dim=3, cells=8, order=1, refinements=[4, 8], contrast=1e4, agg_elems=2,
        coarse="spectral", coarse_vectors=1, amge_vectors=1, condense=True,
        aux_solver="exact", nu=4, nu_s=4,
    ),
    "loworder-schur-pcg-amge": dict(
        dim=3, cells=8, order=1, refinements=[4, 8], contrast=1e4, agg_elems=2,
        coarse="spectral", coarse_vectors=1, amge_vectors=1, condense=True,
        aux_solver="pcg-amge", aux_pcg_iters=3, amge_agglomerate="greedy",
        nu=4, nu_s=4,
    ),
    # 2D mesh-independence refinement study at order 1
    "mesh-independence": dict(
        dim=2, cells=16, order=1, refinements=[16, 32, 64, 128], contrast=1e4,
        agg_elems=4, coarse="spectral", coarse_vectors=1, condense=False,
        aux_solver="exact", nu=4,
    ),
    # high-order 2D order sweeps on a fixed mesh, theta = 0.05, nu = 2
    "highorder-schur": dict(
        dim=2, cells=16, orders=list(range(1, 9)), contrast=1e4, agg_elems=4,
        coarse="spectral", theta=0.05, condense=True, aux_solver="exact", nu=2,
    ),
    "highorder-schur-amge": dict(
        dim=2, cells=16, orders=list(range(1, 9)), contrast=1e4, agg_elems=4,
        coarse="spectral", theta=0.05, condense=True, aux_solver="amge",
        theta_s=0.05, min_svd_drop=2, amge_agglomerate="none", nu=2,
    ),
    "highorder-exact": dict(
        dim=2, cells=16, orders=list(range(1, 9)), contrast=1e4, agg_elems=4,
        coarse="spectral", theta=0.05, condense=False, aux_solver="exact", nu=2,
    ),
    "highorder-amge": dict(
        dim=2, cells=16, orders=list(range(1, 9)), contrast=1e4, agg_elems=4,
        coarse="spectral", theta=0.05, condense=False, aux_solver="amge",
        theta_s=0.05, min_svd_drop=2, amge_agglomerate="none", nu=2,
    ),
}


@dataclass
class OcMetrics:
    """Operator-complexity ledger: NNZ ratios of the reformulated operators."""

    oc_ip: float
    oc_aux: float
    oc_orig: float
    nnz_a: int
    nnz_h0: int
    level_nnzs: tuple = ()


def compute_oc(nnz_a: int, nnz_h0: int, level_nnzs=()) -> OcMetrics:
    """OC_IP = 1 + NNZ(H0)/NNZ(A); OC_aux = 1 + sum NNZ(H_l)/NNZ(H0);
    OC_orig = 1 + OC_aux (OC_IP - 1)."""
    if nnz_a <= 0 or nnz_h0 <= 0:
        raise ValueError("NNZ counts must be positive")
    level_nnzs = tuple(int(v) for v in level_nnzs)
    oc_ip = 1.0 + nnz_h0 / nnz_a
    oc_aux = 1.0 + sum(level_nnzs) / nnz_h0
    oc_orig = 1.0 + oc_aux * (oc_ip - 1.0)
    return OcMetrics(oc_ip, oc_aux, oc_orig, int(nnz_a), int(nnz_h0), level_nnzs)


@dataclass
class SolverStack:
    """Everything composed for one experiment step."""

    config: ExperimentConfig
    cells: int
    order: int
    disc: object
    topology: object
    ip: object
    coarse: object
    schur: object
    hierarchy: object
    smoother: PolySmoother
    preconditioner: AuxPreconditioner
    aux_count: int
    oc: OcMetrics
    flexible: bool


def build_stack(cfg: ExperimentConfig, cells=None, order=None) -> SolverStack:
    """Compose mesh, IP system, optional coarse pair/condensation, inner
    solver, smoother and the auxiliary-space preconditioner for one step."""
    cfg.validate()
    cells = cfg.cells if cells is None else cells
    order = cfg.order if order is None else order

    mesh = build_mesh(cfg.dim, cells, order, nodes=cfg.nodes)
    if cfg.contrast != 1.0:
        coeff = CoefficientField.checkerboard(mesh, cfg.contrast, cfg.pattern_cells)
    else:
        coeff = CoefficientField.constant(mesh)
    disc = assemble(mesh, coeff)

    if cells % cfg.agg_elems != 0:
        raise ValueError(f"agg_elems={cfg.agg_elems} does not divide cells={cells}")
    partition = partition_elements(mesh, blocks_per_axis=cells // cfg.agg_elems)
    topology = build_topology(mesh, partition)
    ip = build_ip_system(disc, topology, delta=cfg.delta, penalty_weights=cfg.penalty_weights)

    coarse = None
    if cfg.coarse == "spectral":
        coarse = build_coarse(
            ip,
            theta=cfg.theta,
            svd_rel_tol=cfg.svd_tol,
            fixed_count=cfg.coarse_vectors or None,
        )
        block = coarse.block_system()
        transfer = coarse.PiH
    else:
        block = ip.block_system()
        transfer = ip.Pi

    schur = None
    hierarchy = None
    if cfg.condense:
        schur = build_schur_system(block)
        target_matrix = schur.S
        aux_count = schur.n_bdofs
        amge_input = lambda: amge_mod.AmgeInput.from_schur(schur)  # noqa: E731
    else:
        target_matrix = block.matrix
        aux_count = block.n
        amge_input = lambda: amge_mod.AmgeInput.from_block_system(block)  # noqa: E731

    if cfg.aux_solver == "exact":
        core = exact_inverse(target_matrix)
    else:
        hierarchy = amge_mod.build_hierarchy(
            amge_input(),
            theta_s=cfg.theta_s,
            nu_s=cfg.nu_s,
            svd_rel_tol=cfg.svd_tol,
            min_svd_drop=cfg.min_svd_drop,
            max_levels=cfg.amge_max_levels,
            coarse_size_target=cfg.amge_coarse_target,
            agglomerate=cfg.amge_agglomerate,
            fixed_count=cfg.amge_vectors or None,
        )
        if cfg.aux_solver == "amge":
            core = hierarchy.apply
        else:
            k = cfg.aux_pcg_iters
            core = lambda r: pcg(  # noqa: E731
                target_matrix, r, hierarchy.apply, rel_tol=0.0, max_iter=k
            )[0]

    if cfg.condense:
        inner = lambda r: bsc_apply(schur, core, r)  # noqa: E731
    else:
        inner = core

    smoother = PolySmoother(disc.A, cfg.nu, scaling=cfg.smoother_scaling)
    preconditioner = AuxPreconditioner(
        mode="multiplicative" if cfg.precond == "mult" else "additive",
        smoother=smoother,
        transfer=transfer,
        inner=inner,
        A=disc.A,
    )

    level_nnzs = hierarchy.nnz_levels[1:] if hierarchy is not None else ()
    oc = compute_oc(disc.A.nnz, target_matrix.nnz, level_nnzs)
    return SolverStack(
        config=cfg,
        cells=cells,
        order=order,
        disc=disc,
        topology=topology,
        ip=ip,
        coarse=coarse,
        schur=schur,
        hierarchy=hierarchy,
        smoother=smoother,
        preconditioner=preconditioner,
        aux_count=aux_count,
        oc=oc,
        flexible=cfg.aux_solver == "pcg-amge",
    )


def run_experiment(cfg: ExperimentConfig, history_dir=None, verbose=False):
    """Run every step of the configured sweep; returns (rows, all_converged)."""
    cfg.validate()
    rows = []
    all_ok = True
    for kind, label, cells, order in cfg.steps():
        try:
            stack = build_stack(cfg, cells=cells, order=order)
            t0 = time.perf_counter()
            _, report = pcg(
                stack.disc.A,
                stack.disc.rhs,
                stack.preconditioner,
                rel_tol=cfg.rel_tol,
                max_iter=cfg.max_iter,
                flexible=stack.flexible,
            )
            wall_ms = (time.perf_counter() - t0) * 1e3
            row = {
                "step": label,
                "n_dofs": stack.disc.n_free,
                "n_adofs_or_bdofs": stack.aux_count,
                "oc_ip": stack.oc.oc_ip,
                "oc_aux": stack.oc.oc_aux,
                "oc_orig": stack.oc.oc_orig,
                "n_it": report.iterations,
                "final_measure": report.final_relative,
                "wall_ms": wall_ms if cfg.timing else 0.0,
                "converged": report.converged,
            }
            all_ok &= report.converged
            if history_dir is not None:
                Path(history_dir).mkdir(parents=True, exist_ok=True)
                report.history_to_csv(Path(history_dir) / f"history_{kind}_{label}.csv")
            if verbose and stack.hierarchy is not None:
                print(stack.hierarchy.summary(), file=sys.stderr)
        except (ValueError, RuntimeError) as exc:
            row = {
                "step": label,
                "n_dofs": 0,
                "n_adofs_or_bdofs": 0,
                "oc_ip": 1.0,
                "oc_aux": 1.0,
                "oc_orig": 1.0,
                "n_it": 0,
                "final_measure": float("nan"),
                "wall_ms": 0.0,
                "converged": False,
            }
            all_ok = False
            print(f"step {label} failed: {exc}", file=sys.stderr)
        rows.append(row)
    return rows, all_ok


def _format_cell(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows, path_or_file):
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh)
        writer.writerow(ROW_COLUMNS)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in ROW_COLUMNS])
    finally:
        if own:
            fh.close()


def rows_to_csv_text(rows) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def export_matrices(cfg: ExperimentConfig, what: str, out_dir):
    """Export the configured first step's operators in Matrix Market format."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind, label, cells, order = cfg.steps()[0]
    stack = build_stack(cfg, cells=cells, order=order)
    if what == "A":
        export_matrix(out / "A.mtx", stack.disc.A)
        export_matrix(out / "D.mtx", stack.disc.D)
        export_matrix(out / "W.mtx", stack.disc.W)
        export_matrix(out / "rhs.mtx", stack.disc.rhs)
    elif what == "ip":
        export_matrix(out / "ip_A.mtx", stack.ip.matrix)
        export_matrix(out / "pi.mtx", stack.ip.Pi)
        export_matrix(out / "ih.mtx", stack.ip.Ih)
    elif what == "schur":
        schur = stack.schur
        if schur is None:
            block = stack.coarse.block_system() if stack.coarse else stack.ip.block_system()
            schur = build_schur_system(block)
        export_matrix(out / "schur.mtx", schur.S)
    elif what == "coarse":
        if stack.coarse is None:
            raise ValueError("config has coarse=none; nothing to export")
        export_matrix(out / "coarse_A.mtx", stack.coarse.matrix)
        export_matrix(out / "pi_H.mtx", stack.coarse.PiH)
        if stack.schur is not None:
            export_matrix(out / "coarse_schur.mtx", stack.schur.S)
    else:
        raise ValueError(f"unknown export target {what!r}")
    return out


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
    elif args.preset:
        cfg = ExperimentConfig.from_preset(args.preset)
    else:
        raise SystemExit("one of --config or --preset is required")
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    cfg.apply_overrides(overrides)
    return cfg.validate()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ipaux", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment sweep and write CSV rows")
    run_p.add_argument("--config", help="key=value config file")
    run_p.add_argument("--preset", help=f"one of {sorted(PRESETS)}")
    run_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    run_p.add_argument("--csv", required=True, help="output CSV path")
    run_p.add_argument("--history", help="directory for per-step residual histories")
    run_p.add_argument("--verbose", action="store_true")

    exp_p = sub.add_parser("export", help="export operators in Matrix Market format")
    exp_p.add_argument("--config", help="key=value config file")
    exp_p.add_argument("--preset", help=f"one of {sorted(PRESETS)}")
    exp_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    exp_p.add_argument("--what", required=True, choices=["A", "ip", "schur", "coarse"])
    exp_p.add_argument("--dir", required=True, help="output directory")

    args = parser.parse_args(argv)
    cfg = _config_from_args(args)
    if args.command == "run":
        rows, ok = run_experiment(cfg, history_dir=args.history, verbose=args.verbose)
        write_csv(rows, args.csv)
        return 0 if ok else 1
    export_matrices(cfg, args.what, args.dir)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
