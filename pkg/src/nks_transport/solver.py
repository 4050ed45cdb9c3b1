"""Eigenvalue solvers and their preconditioners.

The eigenproblem ``A psi = (1/k) B psi`` is solved as the nonlinear system
``F(psi) = A psi - B psi / ||B psi|| = 0`` whose root satisfies
``k = ||B psi||``.  Newton steps use matrix-free Jacobian products and
right-preconditioned restarted GMRES; a few inexact inverse power
iterations provide the starting guess.

Operators are taken from any object exposing ``apply_A``, ``apply_B`` and
``size`` (a :class:`~nks_transport.transport.TransportProblem` or a
:class:`DenseOperatorPair`).
"""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    ArgumentError,
    DegeneratePartitionError,
    NonConvergenceError,
    ZeroFissionSourceError,
)
from .interpolation import HierarchyParams, MultilevelHierarchy, build_hierarchy
from .sparse import SymmetricSOR, as_csr, extract_principal_submatrix, gmres
from .transport import BlockDiagonal

__all__ = [
    "EigenSolveParams",
    "SolverStats",
    "PhaseTimer",
    "DenseOperatorPair",
    "SchwarzData",
    "build_schwarz",
    "one_level_apply",
    "masm_apply",
    "NoPreconditioner",
    "OneLevelPreconditioner",
    "MasmPreconditioner",
    "make_preconditioner",
    "residual_F",
    "jfnk_apply_jacobian",
    "power_iteration",
    "inverse_power",
    "newton_eigen",
    "STATS_COLUMNS",
    "format_stats_table",
]

STATS_COLUMNS = ("np", "scheme", "NI", "LI", "Newton", "LSolver", "MF", "PCSetup", "PCApply", "NR")


@dataclass
class EigenSolveParams:
    newton_rtol: float = 1e-6
    newton_atol: float = 1e-13
    max_newton: int = 50
    inner_linear_rtol: float = 0.5
    power_iters_init: int = 4
    power_inner_rtol: float = 1e-2
    tol_k: float = 1e-8
    tol_psi: float = 1e-6
    max_power: int = 2000
    fd_delta: float = float(np.sqrt(np.finfo(float).eps))
    gmres_restart: int = 30
    gmres_max_iters: int = 1000
    m_pre: int = 2
    m_post: int = 2

    def validate(self):
        if not 0 < self.newton_rtol < 1 or not 0 < self.inner_linear_rtol < 1:
            raise ArgumentError("tolerances must lie in (0, 1)")
        if self.power_iters_init < 0 or self.max_newton < 1:
            raise ArgumentError("iteration counts must be non-negative")
        if self.gmres_restart < 1 or self.gmres_max_iters < 1:
            raise ArgumentError("GMRES restart and iteration limits must be positive")
        return self


class PhaseTimer:
    """Accumulating wall-clock timers keyed by phase name."""

    def __init__(self):
        self.totals = {}

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] = self.totals.get(name, 0.0) + time.perf_counter() - t0

    def get(self, name) -> float:
        return self.totals.get(name, 0.0)


@dataclass
class SolverStats:
    NI: int = 0
    LI: int = 0
    LI_init: int = 0
    power_iterations: int = 0
    k: float = float("nan")
    k_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)
    times: dict = field(default_factory=dict)
    converged: bool = False
    np: int = 1
    scheme: str = ""
    NR: float = float("nan")

    def row(self) -> dict:
        t = self.times
        return {"np": self.np, "scheme": self.scheme, "NI": self.NI, "LI": self.LI,
                "Newton": t.get("Newton", 0.0), "LSolver": t.get("LSolver", 0.0),
                "MF": t.get("MF", 0.0), "PCSetup": t.get("PCSetup", 0.0),
                "PCApply": t.get("PCApply", 0.0), "NR": self.NR}


def format_stats_table(rows) -> str:
    """Fixed-width table of :meth:`SolverStats.row` dictionaries."""
    head = (f"{'np':>4} {'scheme':<13} {'NI':>4} {'LI':>6} {'Newton':>9} {'LSolver':>9} "
            f"{'MF':>9} {'PCSetup':>9} {'PCApply':>9} {'NR':>6}")
    lines = [head]
    for r in rows:
        lines.append(f"{r['np']:>4} {r['scheme']:<13} {r['NI']:>4} {r['LI']:>6} "
                     f"{r['Newton']:>9.3f} {r['LSolver']:>9.3f} {r['MF']:>9.3f} "
                     f"{r['PCSetup']:>9.3f} {r['PCApply']:>9.3f} {r['NR']:>6.3f}")
    return "\n".join(lines)


@dataclass
class DenseOperatorPair:
    """Explicit ``A`` and ``B`` matrices behind the operator interface."""

    A: np.ndarray
    B: np.ndarray

    @property
    def size(self) -> int:
        return self.A.shape[0]

    def apply_A(self, x):
        return self.A @ x

    def apply_B(self, x):
        return self.B @ x


# --------------------------------------------------------------------------
# Schwarz smoothers


@dataclass
class SchwarzData:
    """Nonoverlapping block smoother.

    ``row_sets[i]`` are the sorted global rows of part ``i`` and ``blocks[i]``
    the principal submatrix on them.  ``decoupled`` is the operator with all
    couplings between different parts removed; one symmetric SOR sweep on it
    in global row order performs an independent local sweep on every part,
    which is how the smoother is applied.
    """

    row_sets: list
    blocks: list
    decoupled: sp.csr_matrix
    owner: np.ndarray
    smoother: SymmetricSOR

    @property
    def n_parts(self) -> int:
        return len(self.row_sets)


def build_schwarz(P, ownership, layout=None, n_parts=None, allow_empty=False,
                  omega: float = 1.0) -> SchwarzData:
    """Subdomain row sets and blocks for a node ownership.

    ``ownership`` is a :class:`~nks_transport.mesh.NodeOwnership` or an owner
    array per node or per row.  Per-node owners are replicated over the
    ``layout`` blocks (row ``(g*N_d + d)*n_nodes + node`` goes to the owner
    of ``node``).
    """
    A = P.tocsr() if isinstance(P, BlockDiagonal) else as_csr(P)
    owner = np.asarray(getattr(ownership, "owner_of_node", ownership), dtype=np.int64)
    n = A.shape[0]
    if layout is not None and owner.shape == (layout.n_nodes,):
        owner = np.tile(owner, layout.n_blocks)
    elif owner.size and n % owner.size == 0:
        owner = np.tile(owner, n // owner.size)
    if owner.shape != (n,):
        raise ArgumentError("ownership does not match the operator size")
    n_parts = int(owner.max()) + 1 if n_parts is None else int(n_parts)
    row_sets = [np.flatnonzero(owner == i) for i in range(n_parts)]
    if not allow_empty:
        for i, rows in enumerate(row_sets):
            if rows.size == 0:
                raise DegeneratePartitionError(f"subdomain {i} owns no rows")
    blocks = [extract_principal_submatrix(A, rows) for rows in row_sets]
    C = A.tocoo()
    keep = owner[C.row] == owner[C.col]
    D = as_csr(sp.csr_matrix((C.data[keep], (C.row[keep], C.col[keep])), shape=A.shape))
    return SchwarzData(row_sets, blocks, D, owner, SymmetricSOR(D, omega))


def one_level_apply(data: SchwarzData, r) -> np.ndarray:
    """Sum over parts of one local symmetric SOR sweep from a zero guess."""
    return data.smoother(np.asarray(r, dtype=np.float64))


def masm_apply(hierarchy: MultilevelHierarchy, smoothers, r, level: int = 0,
               m_pre: int = 2, m_post: int = 2) -> np.ndarray:
    """Multiplicative multilevel Schwarz V-cycle starting at ``level``."""
    if level == hierarchy.n_levels - 1:
        return hierarchy.coarsest.solve(r)
    lv = hierarchy.levels[level]
    A = lv.operator.csr
    S = smoothers[level]
    e = np.zeros_like(r)
    for _ in range(m_pre):
        e += one_level_apply(S, r - A @ e)
    rc = lv.interp.T @ (r - A @ e)
    e += lv.interp @ masm_apply(hierarchy, smoothers, rc, level + 1, m_pre, m_post)
    for _ in range(m_post):
        e += one_level_apply(S, r - A @ e)
    return e


class NoPreconditioner:
    name = "none"

    def setup(self):
        return self

    def __call__(self, r):
        return np.array(r, dtype=np.float64, copy=True)


class OneLevelPreconditioner:
    """One-level nonoverlapping Schwarz on the block-diagonal operator."""

    name = "onelevel"

    def __init__(self, P: BlockDiagonal, owner_of_node, n_parts=None):
        self.P = P
        self.owner_of_node = np.asarray(owner_of_node, dtype=np.int64)
        self.n_parts = n_parts
        self.data = None

    def setup(self):
        if self.data is None:
            self.data = build_schwarz(self.P, self.owner_of_node, n_parts=self.n_parts)
        return self

    def __call__(self, r):
        return one_level_apply(self.setup().data, r)


class MasmPreconditioner:
    """Multilevel multiplicative Schwarz built on a subspace hierarchy.

    The hybrid coarsening uses one contiguous row block per subdomain.  A
    coarse point belongs to the subdomain owning the fine point it came
    from, so coarse subdomains may be empty.
    """

    name = "masm_sub"

    def __init__(self, P: BlockDiagonal, owner_of_node, params: HierarchyParams | None = None,
                 n_parts=None, m_pre: int = 2, m_post: int = 2):
        self.P = P
        self.owner_of_node = np.asarray(owner_of_node, dtype=np.int64)
        self.params = params or HierarchyParams()
        self.n_parts = n_parts
        self.m_pre, self.m_post = m_pre, m_post
        self.hierarchy = None
        self.smoothers = None

    def setup(self):
        if self.hierarchy is not None:
            return self
        n_parts = self.n_parts or int(self.owner_of_node.max()) + 1
        self.hierarchy = build_hierarchy(self.P, self.params, blocks=n_parts)
        owner = self.owner_of_node
        smoothers = []
        for depth, lv in enumerate(self.hierarchy.levels[:-1]):
            smoothers.append(build_schwarz(lv.operator, owner, n_parts=n_parts,
                                           allow_empty=depth > 0))
            owner = owner[lv.coarse_points]
        self.smoothers = smoothers
        return self

    def __call__(self, r):
        self.setup()
        return masm_apply(self.hierarchy, self.smoothers, np.asarray(r, dtype=np.float64),
                          0, self.m_pre, self.m_post)


def make_preconditioner(kind: str, P: BlockDiagonal, owner_of_node, params=None,
                        n_parts=None, m_pre=2, m_post=2):
    if kind == "masm_sub":
        return MasmPreconditioner(P, owner_of_node, params, n_parts, m_pre, m_post)
    if kind == "masm_onelevel":
        return OneLevelPreconditioner(P, owner_of_node, n_parts)
    if kind == "none":
        return NoPreconditioner()
    raise ArgumentError(f"unknown preconditioner '{kind}'")


# --------------------------------------------------------------------------
# Nonlinear residual and Jacobian


def _fission(problem, psi):
    b = problem.apply_B(psi)
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        raise ZeroFissionSourceError("fission source vanishes for the current iterate")
    return b, nb


def residual_F(problem, psi) -> np.ndarray:
    """``A psi - B psi / ||B psi||``."""
    b, nb = _fission(problem, psi)
    return problem.apply_A(psi) - b / nb


def jfnk_apply_jacobian(problem, psi, v, F_psi=None, delta=None) -> np.ndarray:
    """Forward-difference Jacobian product ``(F(psi + h v) - F(psi)) / h``."""
    v = np.asarray(v, dtype=np.float64)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return np.zeros_like(v)
    delta = float(np.sqrt(np.finfo(float).eps)) if delta is None else delta
    F0 = residual_F(problem, psi) if F_psi is None else F_psi
    h = delta * (1.0 + float(np.linalg.norm(psi))) / nv
    return (residual_F(problem, psi + h * v) - F0) / h


# --------------------------------------------------------------------------
# Eigen solvers


def _counted(fn, timer, name):
    def wrapped(x):
        with timer.phase(name):
            return fn(x)
    return wrapped


def _linear_solve(timer, op, prec, b, rtol, params, start=None):
    """GMRES inside the LSolver phase.

    ``start(op)`` may supply an initial guess ``x0``; the solve is then for
    the correction, with ``rtol`` relative to the residual of ``x0`` so a
    good start never ends the solve before it has reduced anything.
    """
    with timer.phase("LSolver"):
        op = _counted(op, timer, "MF")
        x0 = start(op) if start is not None else None
        rhs = b if x0 is None else b - op(x0)
        x, rep = gmres(op, _counted(prec, timer, "PCApply"), rhs, rtol=rtol,
                       max_iters=params.gmres_max_iters, restart=params.gmres_restart)
        if x0 is not None:
            x += x0
    return x, rep


def _power_step(problem, prec, params, psi, timer):
    """Solve ``A y = B psi`` starting from the best multiple of ``psi``.

    Near an eigenvector the start is already close to the solution, so the
    inexact inner solve does not keep injecting fresh error.
    """
    rhs = problem.apply_B(psi)

    def start(op):
        a = op(psi)
        aa = float(a @ a)
        return psi * (float(a @ rhs) / aa) if aa > 0 else None

    return _linear_solve(timer, problem.apply_A, prec, rhs, params.power_inner_rtol, params,
                         start)


def _initial_guess(problem, psi0):
    psi = np.ones(problem.size) if psi0 is None else np.array(psi0, dtype=np.float64)
    if psi.shape != (problem.size,):
        raise ArgumentError("initial guess has the wrong length")
    _, nb = _fission(problem, psi)
    return psi / nb


def power_iteration(problem, prec, params: EigenSolveParams, n_iters: int, psi0=None,
                    stats: SolverStats | None = None, timer: PhaseTimer | None = None):
    """``n_iters`` inexact inverse power steps.

    Returns ``psi`` scaled so that ``||B psi||`` is the eigenvalue estimate,
    which is the scaling of a root of ``F``.  With ``n_iters = 0`` a given
    ``psi0`` is returned unscaled, since its scale carries the estimate.
    """
    stats = stats or SolverStats()
    timer = timer or PhaseTimer()
    psi = _initial_guess(problem, psi0)
    if n_iters == 0 and psi0 is not None:
        return np.array(psi0, dtype=np.float64)
    y = psi
    for _ in range(n_iters):
        y, rep = _power_step(problem, prec, params, psi, timer)
        stats.LI += rep.iterations
        stats.LI_init += rep.iterations
        stats.power_iterations += 1
        _, k = _fission(problem, y)
        stats.k_history.append(k)
        psi = y / k
    if n_iters == 0:
        return psi
    return y


def inverse_power(problem, prec, params: EigenSolveParams | None = None, psi0=None):
    """Inexact inverse power iteration.

    Stops when both the relative eigenvalue change is below ``tol_k`` and the
    relative change of the normalised iterate is below ``tol_psi``.
    Returns ``(k, psi, stats)`` with ``||B psi|| = k``.
    """
    params = (params or EigenSolveParams()).validate()
    stats, timer = SolverStats(), PhaseTimer()
    with timer.phase("PCSetup"):
        prec.setup()
    psi = _initial_guess(problem, psi0)
    k_old = None
    k = float("nan")
    for _ in range(params.max_power):
        y, rep = _power_step(problem, prec, params, psi, timer)
        stats.LI += rep.iterations
        stats.power_iterations += 1
        _, k = _fission(problem, y)
        stats.k_history.append(k)
        new = y / k
        dpsi = np.linalg.norm(new - psi) / np.linalg.norm(new)
        psi = new
        if (k_old is not None and abs(k - k_old) <= params.tol_k * abs(k)
                and dpsi <= params.tol_psi):
            stats.converged = True
            break
        k_old = k
    stats.k = k
    stats.times = dict(timer.totals)
    if not stats.converged:
        raise NonConvergenceError("power iteration did not converge", stats)
    return k, psi * k, stats


def newton_eigen(problem, prec, params: EigenSolveParams | None = None, psi0=None):
    """Newton-Krylov solve of ``F(psi) = 0``.

    Returns ``(k, psi, stats)`` with ``||B psi|| = k``.  Converges when
    ``||F|| <= newton_rtol * ||F_0||`` (``F_0`` after the power start) or
    when ``||F||`` falls below ``newton_atol * ||A psi||``.
    """
    params = (params or EigenSolveParams()).validate()
    stats, timer = SolverStats(), PhaseTimer()
    with timer.phase("Newton"):
        with timer.phase("PCSetup"):
            prec.setup()
        psi = power_iteration(problem, prec, params, params.power_iters_init, psi0, stats, timer)
        F = residual_F(problem, psi)
        f0 = float(np.linalg.norm(F))
        fnorm = f0
        stats.residual_history.append(fnorm)
        stats.k_history.append(float(np.linalg.norm(problem.apply_B(psi))))
        while True:
            floor = params.newton_atol * float(np.linalg.norm(problem.apply_A(psi)))
            if fnorm <= params.newton_rtol * f0 or fnorm <= floor:
                stats.converged = True
                break
            if stats.NI >= params.max_newton:
                break

            def jac(v, psi=psi, F=F):
                return jfnk_apply_jacobian(problem, psi, v, F, params.fd_delta)

            step, rep = _linear_solve(timer, jac, prec, -F, params.inner_linear_rtol, params)
            stats.LI += rep.iterations
            stats.linear_iterations.append(rep.iterations)
            stats.NI += 1
            psi = psi + step
            F = residual_F(problem, psi)
            fnorm = float(np.linalg.norm(F))
            stats.residual_history.append(fnorm)
            stats.k_history.append(float(np.linalg.norm(problem.apply_B(psi))))
    stats.times = dict(timer.totals)
    stats.k = stats.k_history[-1]
    if not stats.converged:
        raise NonConvergenceError(
            f"Newton did not converge in {params.max_newton} steps "
            f"(||F|| = {fnorm:.3e}, ||F0|| = {f0:.3e})", stats)
    return stats.k, psi, stats
