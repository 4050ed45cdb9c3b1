"""Command-line driver.

Subcommands::

    nks-transport run CONFIG              solve and write reports / fluxes
    nks-transport oracle CONFIG           dense reference eigenvalue
    nks-transport partition-report CONFIG element and node balance of both assignments
    nks-transport hierarchy-report CONFIG multilevel hierarchy summary

Exit codes: 0 success, 2 configuration or argument error, 3 solver
nonconvergence, 1 any other solver error.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import RunConfig, load_config, serialize_config
from .errors import ArgumentError, ConfigurationError, NonConvergenceError, TransportError
from .mesh import (
    assign_nodes_balanced,
    assign_nodes_lowest_rank,
    hierarchical_partition,
    node_ratio,
)
from .oracle import dense_eigen, dense_operators
from .solver import STATS_COLUMNS, SolverStats, format_stats_table, make_preconditioner, newton_eigen
from .sparse import write_matrix_market

__all__ = [
    "RunReport",
    "PartitionSummary",
    "THREADS_ENV",
    "run",
    "oracle",
    "partition_summary",
    "write_report_csv",
    "write_flux_csv",
    "format_report",
    "main",
]

THREADS_ENV = "NKS_TRANSPORT_THREADS"


@dataclass
class PartitionSummary:
    np1: int
    np2: int
    element_counts: list
    node_counts: dict
    NR: dict

    def lines(self):
        out = [f"parts {self.np1 * self.np2} (np1={self.np1}, np2={self.np2})",
               f"elements per part: {self.element_counts}"]
        for kind in self.node_counts:
            out.append(f"nodes per part ({kind}): {self.node_counts[kind]}")
            out.append(f"NR ({kind}): {self.NR[kind]:.4f}")
        return out


@dataclass
class RunReport:
    k_effective: float
    stats: SolverStats
    hierarchy_summary: str
    partition: PartitionSummary
    config_text: str
    psi: np.ndarray | None = field(default=None, repr=False)


def _ownerships(mesh, partition):
    return {"lowest": assign_nodes_lowest_rank(mesh, partition),
            "balanced": assign_nodes_balanced(mesh, partition)}


def _summary(config, part, owns):
    return PartitionSummary(
        config.partition.np1, config.partition.np2, part.element_counts.tolist(),
        {k: o.node_counts.tolist() for k, o in owns.items()},
        {k: node_ratio(o) for k, o in owns.items()})


def partition_summary(config: RunConfig, mesh=None) -> PartitionSummary:
    mesh = mesh or config.build_mesh()
    part = hierarchical_partition(mesh, config.partition.np1, config.partition.np2)
    return _summary(config, part, _ownerships(mesh, part))


def run(config: RunConfig) -> RunReport:
    """Build everything from ``config``, solve, and return the report."""
    problem = config.build_problem()
    mesh = problem.mesh
    part = hierarchical_partition(mesh, config.partition.np1, config.partition.np2)
    owns = _ownerships(mesh, part)
    own = owns[config.partition.node_assignment]
    prec = make_preconditioner(config.preconditioner, problem.preconditioner,
                               own.owner_of_node, config.hierarchy, part.np,
                               config.solver.m_pre, config.solver.m_post)
    k, psi, stats = newton_eigen(problem, prec, config.solver)
    stats.np = part.np
    stats.scheme = config.preconditioner
    stats.NR = node_ratio(own)
    summary = prec.hierarchy.summary() if getattr(prec, "hierarchy", None) else "(no hierarchy)"
    report = RunReport(k, stats, summary, _summary(config, part, owns),
                       serialize_config(config), psi)
    _write_outputs(config, problem, report)
    return report


def oracle(config: RunConfig, tol: float = 1e-12):
    """Dense reference ``(k, psi)``; refuses problems above the size cap."""
    problem = config.build_problem()
    A, B = dense_operators(problem)
    return dense_eigen(A, B, tol=tol)


# --------------------------------------------------------------------------
# Output


def format_report(report: RunReport) -> str:
    s = report.stats
    lines = [f"k_effective = {report.k_effective:.12f}",
             "flux normalisation: ||B psi|| = k (Euclidean norm)",
             f"newton iterations {s.NI}, gmres iterations {s.LI} "
             f"(of which {s.LI_init} in the power start)",
             "",
             format_stats_table([s.row()]),
             "",
             "partition:"]
    lines += ["  " + x for x in report.partition.lines()]
    lines += ["", "hierarchy:", report.hierarchy_summary, "", "configuration:",
              report.config_text]
    return "\n".join(lines)


def write_report_csv(path_or_file, rows) -> None:
    """Stats CSV whose header is exactly :data:`STATS_COLUMNS`."""
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.DictWriter(fh, fieldnames=list(STATS_COLUMNS), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in STATS_COLUMNS})
    finally:
        if own:
            fh.close()


def write_flux_csv(path, problem, psi) -> None:
    """``node_id, x, y, phi_1 .. phi_G``."""
    phi = problem.scalar_fluxes(psi)
    xy = problem.mesh.node_coords
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "x", "y"] + [f"phi_{g + 1}" for g in range(problem.n_groups)])
        for v in range(problem.mesh.n_nodes):
            w.writerow([v, repr(float(xy[v, 0])), repr(float(xy[v, 1]))]
                       + [repr(float(phi[g, v])) for g in range(problem.n_groups)])


def write_block_dumps(directory, problem) -> list:
    os.makedirs(directory, exist_ok=True)
    paths = []
    N = problem.quad.n_dirs
    for b, block in enumerate(problem.preconditioner.blocks):
        g, d = divmod(b, N)
        path = os.path.join(directory, f"block_g{g}_d{d}.mtx")
        write_matrix_market(path, block, comment=f"group {g} direction {d}")
        paths.append(path)
    return paths


def _write_outputs(config, problem, report):
    out = config.output
    if out.report:
        with open(out.report, "w") as fh:
            fh.write(format_report(report) + "\n")
    if out.report_csv:
        write_report_csv(out.report_csv, [report.stats.row()])
    if out.flux_csv:
        write_flux_csv(out.flux_csv, problem, report.psi)
    if out.matrix_market_dir:
        write_block_dumps(out.matrix_market_dir, problem)


# --------------------------------------------------------------------------
# Entry point


def _set_threads(n):
    if n is None:
        env = os.environ.get(THREADS_ENV)
        n = int(env) if env else None
    if n is None:
        return
    if n < 1:
        raise ArgumentError("thread count must be >= 1")
    import numba

    # the TBB layer is tried first by default and warns on old installs
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _cmd_run(args):
    config = load_config(args.config)
    if args.output_dir:
        os.makedirs(args.output_dir, exist_ok=True)
        o = config.output
        o.report = o.report or os.path.join(args.output_dir, "report.txt")
        o.report_csv = o.report_csv or os.path.join(args.output_dir, "report.csv")
        o.flux_csv = o.flux_csv or os.path.join(args.output_dir, "flux.csv")
    if args.preconditioner:
        config.preconditioner = args.preconditioner
    report = run(config)
    print(f"k_effective = {report.k_effective:.12f}")
    print(format_stats_table([report.stats.row()]))
    buf = io.StringIO()
    write_report_csv(buf, [report.stats.row()])
    if args.csv:
        print(buf.getvalue(), end="")
    return 0


def _cmd_oracle(args):
    config = load_config(args.config)
    k, _ = oracle(config, tol=args.tol)
    print(f"k_oracle = {k:.14f}")
    return 0


def _cmd_partition(args):
    config = load_config(args.config)
    for line in partition_summary(config).lines():
        print(line)
    return 0


def _cmd_hierarchy(args):
    config = load_config(args.config)
    problem = config.build_problem()
    mesh = problem.mesh
    part = hierarchical_partition(mesh, config.partition.np1, config.partition.np2)
    own = _ownerships(mesh, part)[config.partition.node_assignment]
    prec = make_preconditioner("masm_sub", problem.preconditioner, own.owner_of_node,
                               config.hierarchy, part.np)
    prec.setup()
    print(prec.hierarchy.summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nks-transport", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=None,
                   help=f"cap on worker threads (default: ${THREADS_ENV} or library default)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve the eigenproblem")
    r.add_argument("config")
    r.add_argument("--output-dir", help="write report.txt, report.csv and flux.csv here")
    r.add_argument("--preconditioner", choices=("masm_sub", "masm_onelevel", "none"))
    r.add_argument("--csv", action="store_true", help="also print the stats CSV")
    r.set_defaults(func=_cmd_run)

    o = sub.add_parser("oracle", help="dense reference eigenvalue")
    o.add_argument("config")
    o.add_argument("--tol", type=float, default=1e-12)
    o.set_defaults(func=_cmd_oracle)

    pr = sub.add_parser("partition-report", help="element and node balance")
    pr.add_argument("config")
    pr.set_defaults(func=_cmd_partition)

    h = sub.add_parser("hierarchy-report", help="multilevel hierarchy summary")
    h.add_argument("config")
    h.set_defaults(func=_cmd_hierarchy)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _set_threads(args.threads)
        return args.func(args)
    except (ConfigurationError, ArgumentError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except NonConvergenceError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (TransportError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
