"""Sparse and dense linear-algebra kernels.

CSR storage is ``scipy.sparse.csr_matrix`` kept in canonical form (sorted
column indices, no duplicates).  Everything else in the package goes through
the helpers here so that the canonical form is maintained.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp

from .errors import (
    ArgumentError,
    NumericalBreakdownError,
    SingularDiagonalError,
    SingularMatrixError,
)

__all__ = [
    "as_csr",
    "check_csr",
    "spmv",
    "transpose",
    "triple_product",
    "extract_principal_submatrix",
    "sor_sweep",
    "SymmetricSOR",
    "gmres",
    "KrylovReport",
    "DenseFactor",
    "dense_factor",
    "solve",
    "read_matrix_market",
    "write_matrix_market",
]


def as_csr(A) -> sp.csr_matrix:
    """Return ``A`` as a canonical float64 CSR matrix (sorted, no duplicates)."""
    if sp.issparse(A):
        A = sp.csr_matrix(A, dtype=np.float64)
    else:
        A = sp.csr_matrix(np.asarray(A, dtype=np.float64))
    A.sum_duplicates()
    A.sort_indices()
    return A


def check_csr(A: sp.csr_matrix) -> None:
    """Raise ``AssertionError`` if ``A`` violates the CSR invariants."""
    n_rows, n_cols = A.shape
    indptr, indices = A.indptr, A.indices
    assert len(indptr) == n_rows + 1
    assert indptr[0] == 0 and indptr[-1] == len(indices) == len(A.data)
    assert np.all(np.diff(indptr) >= 0)
    if len(indices):
        assert indices.min() >= 0 and indices.max() < n_cols
    for i in range(n_rows):
        row = indices[indptr[i]:indptr[i + 1]]
        assert np.all(np.diff(row) > 0), f"row {i} not strictly increasing"
    assert np.all(np.isfinite(A.data))


def spmv(A: sp.csr_matrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.shape[1]:
        raise ArgumentError(f"spmv: vector of length {x.shape} does not match {A.shape}")
    return A @ x


def transpose(A: sp.csr_matrix) -> sp.csr_matrix:
    return as_csr(A.T)


def triple_product(R: sp.csr_matrix, A: sp.csr_matrix, P: sp.csr_matrix) -> sp.csr_matrix:
    """Galerkin product ``R @ A @ P``; exact zeros from cancellation are dropped."""
    if R.shape[1] != A.shape[0] or A.shape[1] != P.shape[0]:
        raise ArgumentError(
            f"triple_product: incompatible shapes {R.shape}, {A.shape}, {P.shape}"
        )
    C = as_csr(R @ (A @ P))
    C.eliminate_zeros()
    return C


def extract_principal_submatrix(A: sp.csr_matrix, rows) -> sp.csr_matrix:
    rows = np.asarray(rows, dtype=np.int64)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ArgumentError("extract_principal_submatrix: matrix must be square")
    if rows.ndim != 1:
        raise ArgumentError("row set must be one-dimensional")
    if len(rows) and (rows.min() < 0 or rows.max() >= n):
        raise ArgumentError(f"row index out of range [0, {n})")
    if np.any(np.diff(rows) <= 0):
        raise ArgumentError("row set must be sorted and unique")
    return as_csr(A[rows][:, rows])


# --------------------------------------------------------------------------
# SOR


@numba.njit(cache=True)
def _sor_forward(indptr, indices, data, diag, x, b, omega):
    n = len(b)
    for i in range(n):
        s = b[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j != i:
                s -= data[k] * x[j]
        x[i] = (1.0 - omega) * x[i] + omega * s / diag[i]


@numba.njit(cache=True)
def _sor_backward(indptr, indices, data, diag, x, b, omega):
    n = len(b)
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j != i:
                s -= data[k] * x[j]
        x[i] = (1.0 - omega) * x[i] + omega * s / diag[i]


def _checked_diagonal(A: sp.csr_matrix) -> np.ndarray:
    diag = A.diagonal()
    zero = np.flatnonzero(diag == 0.0)
    if len(zero):
        raise SingularDiagonalError(zero[0])
    return diag


_SWEEP_MODES = ("forward", "backward", "symmetric")


def sor_sweep(A, x, b, omega=1.0, mode="forward", sweeps=1) -> np.ndarray:
    """Apply ``sweeps`` SOR sweeps to ``A x = b`` starting from ``x``.

    ``mode`` is one of ``forward``, ``backward`` or ``symmetric`` (a forward
    sweep followed by a backward sweep).  Returns a new vector; ``x`` is not
    modified.
    """
    if A.shape[0] != A.shape[1]:
        raise ArgumentError("sor_sweep: matrix must be square")
    if not 0.0 < omega < 2.0:
        raise ArgumentError(f"sor_sweep: omega={omega} outside (0, 2)")
    if mode not in _SWEEP_MODES:
        raise ArgumentError(f"sor_sweep: unknown mode {mode!r}")
    A = as_csr(A)
    diag = _checked_diagonal(A)
    x = np.array(x, dtype=np.float64, copy=True)
    b = np.asarray(b, dtype=np.float64)
    if x.shape != (A.shape[0],) or b.shape != x.shape:
        raise ArgumentError("sor_sweep: vector sizes do not match matrix")
    for _ in range(sweeps):
        if mode in ("forward", "symmetric"):
            _sor_forward(A.indptr, A.indices, A.data, diag, x, b, omega)
        if mode in ("backward", "symmetric"):
            _sor_backward(A.indptr, A.indices, A.data, diag, x, b, omega)
    return x


class SymmetricSOR:
    """Pre-validated symmetric SOR on a fixed matrix, zero initial guess."""

    def __init__(self, A: sp.csr_matrix, omega: float = 1.0, sweeps: int = 1):
        self.A = as_csr(A)
        self.diag = _checked_diagonal(self.A)
        self.omega = float(omega)
        self.sweeps = int(sweeps)

    def __call__(self, b: np.ndarray) -> np.ndarray:
        A = self.A
        b = np.ascontiguousarray(b, dtype=np.float64)
        x = np.zeros_like(b)
        for _ in range(self.sweeps):
            _sor_forward(A.indptr, A.indices, A.data, self.diag, x, b, self.omega)
            _sor_backward(A.indptr, A.indices, A.data, self.diag, x, b, self.omega)
        return x


# --------------------------------------------------------------------------
# GMRES


@dataclass
class KrylovReport:
    iterations: int
    final_relative_residual: float
    converged: bool
    residual_history: list = field(default_factory=list, repr=False)
    restarts: int = 0


def _identity(v):
    return v


def gmres(apply_op, apply_prec, b, rtol=1e-8, max_iters=1000, restart=30, x0=None):
    """Right-preconditioned restarted GMRES.

    Solves ``op(x) = b`` through ``op(M(y)) = b``, ``x = M(y)``.  The residual
    that is monitored is the unpreconditioned one.  Orthogonalisation is
    modified Gram-Schmidt with one extra pass when the new basis vector loses
    orthogonality beyond 1e-8.

    Returns
    -------
    x : ndarray
    report : KrylovReport
        ``residual_history`` holds the relative residual estimate after every
        Arnoldi step, with the true residual at the start of each cycle.
    """
    if rtol <= 0:
        raise ArgumentError("gmres: rtol must be positive")
    if restart < 1:
        raise ArgumentError("gmres: restart must be >= 1")
    apply_prec = apply_prec or _identity
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), KrylovReport(0, 0.0, True, [0.0])

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    r = b - apply_op(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    history = [beta / bnorm]
    iters = 0
    cycles = 0

    while True:
        if not np.isfinite(beta):
            raise NumericalBreakdownError("gmres: non-finite residual")
        if beta / bnorm <= rtol or iters >= max_iters:
            break
        cycles += 1
        m = min(restart, max_iters - iters)
        V = np.empty((m + 1, n))
        Z = np.empty((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k = 0
        for j in range(m):
            z = apply_prec(V[j])
            Z[j] = z
            w = apply_op(z)
            if not np.all(np.isfinite(w)):
                raise NumericalBreakdownError(f"gmres: non-finite vector at iteration {iters + 1}")
            wnorm0 = np.linalg.norm(w)
            for i in range(j + 1):
                H[i, j] = np.dot(V[i], w)
                w -= H[i, j] * V[i]
            hnext = np.linalg.norm(w)
            if hnext > 0.0 and np.max(np.abs(V[: j + 1] @ (w / hnext))) > 1e-8:
                for i in range(j + 1):
                    c = np.dot(V[i], w)
                    H[i, j] += c
                    w -= c * V[i]
                hnext = np.linalg.norm(w)
            H[j + 1, j] = hnext
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                raise NumericalBreakdownError("gmres: singular Hessenberg column")
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            iters += 1
            k = j + 1
            history.append(abs(g[j + 1]) / bnorm)
            breakdown = hnext <= 1e-14 * max(wnorm0, 1e-300)
            if breakdown or abs(g[j + 1]) / bnorm <= rtol:
                break
            V[j + 1] = w / hnext
        y = scipy.linalg.solve_triangular(H[:k, :k], g[:k])
        x += Z[:k].T @ y
        r = b - apply_op(x)
        beta = np.linalg.norm(r)
        history.append(beta / bnorm)

    rel = beta / bnorm
    return x, KrylovReport(iters, float(rel), bool(rel <= rtol), history, cycles)


# --------------------------------------------------------------------------
# Dense direct solver


@dataclass
class DenseFactor:
    n: int
    lu: np.ndarray
    piv: np.ndarray

    def solve(self, b) -> np.ndarray:
        return scipy.linalg.lu_solve((self.lu, self.piv), np.asarray(b, dtype=np.float64))


def dense_factor(A, cap: int | None = None) -> DenseFactor:
    """Partial-pivoted LU of a dense (or small sparse) square matrix."""
    A = A.toarray() if sp.issparse(A) else np.array(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ArgumentError("dense_factor: matrix must be square")
    n = A.shape[0]
    if cap is not None and n > cap:
        raise ArgumentError(f"dense_factor: size {n} exceeds coarse cap {cap}")
    if n == 0:
        return DenseFactor(0, np.zeros((0, 0)), np.zeros(0, dtype=np.int32))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    udiag = np.abs(np.diag(lu))
    scale = max(np.abs(A).max(), 1e-300)
    if udiag.min() <= n * np.finfo(float).eps * scale:
        raise SingularMatrixError(
            f"matrix of size {n} is singular to machine precision (min |u_ii| = {udiag.min():.3e})"
        )
    return DenseFactor(n, lu, piv)


def solve(f: DenseFactor, b) -> np.ndarray:
    return f.solve(b)


# --------------------------------------------------------------------------
# Matrix Market exchange


def read_matrix_market(path) -> sp.csr_matrix:
    return as_csr(scipy.io.mmread(path))


def write_matrix_market(path, A: sp.csr_matrix, comment: str = "") -> None:
    scipy.io.mmwrite(path, sp.coo_matrix(A), comment=comment, precision=17)
