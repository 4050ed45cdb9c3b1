"""Dense brute-force reference for the discrete eigenproblem.

Everything here is assembled element by element from basis functions
evaluated in physical coordinates, without the reference-element matrices or
the sparse operators used by the solver.  It is only meant for small
problems.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import ArgumentError
from .transport import TransportProblem

__all__ = ["ORACLE_MAX_UNKNOWNS", "dense_operators", "dense_eigen", "dense_preconditioner"]

ORACLE_MAX_UNKNOWNS = 20000

_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def _bilinear(x, y, x0, y0, hx, hy):
    """Values and gradients of the four bilinear basis functions at (x, y)."""
    s = (x - x0) / hx
    t = (y - y0) / hy
    phi = np.array([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])
    dx = np.array([-(1 - t), (1 - t), t, -t]) / hx
    dy = np.array([-(1 - s), -s, s, (1 - s)]) / hy
    return phi, dx, dy


def _reflected_index(dirs, d, normal):
    om = dirs[d]
    target = om - 2.0 * np.dot(om, normal) * normal
    return int(np.argmin(np.linalg.norm(dirs - target, axis=1)))


def _check_size(problem):
    if problem.size > ORACLE_MAX_UNKNOWNS:
        raise ArgumentError(
            f"oracle refuses {problem.size} unknowns (cap {ORACLE_MAX_UNKNOWNS})")


def dense_operators(problem: TransportProblem, include_scattering=True, include_reflection=True):
    """Dense loss and fission matrices ``(A, B)`` of the full weak form."""
    _check_size(problem)
    mesh, xs, quad = problem.mesh, problem.xs, problem.quad
    G, N, n = problem.n_groups, quad.n_dirs, mesh.n_nodes
    dirs, wts = quad.directions, quad.weights
    size = G * N * n
    A = np.zeros((size, size))
    B = np.zeros((size, size))

    def idx(g, d, node):
        return (g * N + d) * n + node

    hx, hy = mesh.hx, mesh.hy
    for e in range(mesh.n_elements):
        i, j = e % mesh.nx, e // mesh.nx
        x0, y0 = i * hx, j * hy
        nodes = mesh.element_nodes[e]
        mat = xs[int(mesh.material_of_element[e])]
        for a in _GAUSS:
            for b in _GAUSS:
                x = x0 + 0.5 * (1 + a) * hx
                y = y0 + 0.5 * (1 + b) * hy
                w = 0.25 * hx * hy
                phi, dx, dy = _bilinear(x, y, x0, y0, hx, hy)
                for g in range(G):
                    st = mat.sigma_t[g]
                    for d in range(N):
                        ox, oy = dirs[d]
                        grad = ox * dx + oy * dy
                        test = grad / st + phi
                        rows = [idx(g, d, v) for v in nodes]
                        local = w * (np.outer(grad, grad) / st + st * np.outer(phi, phi))
                        A[np.ix_(rows, rows)] += local
                        for gp in range(G):
                            ss = mat.sigma_s[gp, g] if include_scattering else 0.0
                            fis = mat.chi[g] * mat.nu_sigma_f[gp]
                            for dp in range(N):
                                cols = [idx(gp, dp, v) for v in nodes]
                                coupling = w * wts[dp] / (2 * np.pi) * np.outer(test, phi)
                                if ss:
                                    A[np.ix_(rows, cols)] -= ss * coupling
                                if fis:
                                    B[np.ix_(rows, cols)] += fis * coupling

    sides = {
        "left": (np.array([-1.0, 0.0]), [(0, jj) for jj in range(mesh.ny)], "y"),
        "right": (np.array([1.0, 0.0]), [(mesh.nx, jj) for jj in range(mesh.ny)], "y"),
        "bottom": (np.array([0.0, -1.0]), [(ii, 0) for ii in range(mesh.nx)], "x"),
        "top": (np.array([0.0, 1.0]), [(ii, mesh.ny) for ii in range(mesh.nx)], "x"),
    }
    for side, (normal, starts, along) in sides.items():
        reflective = mesh.boundary_condition_of_side[side] == "reflective"
        h = hy if along == "y" else hx
        for (ii, jj) in starts:
            n0 = jj * (mesh.nx + 1) + ii
            n1 = n0 + (mesh.nx + 1 if along == "y" else 1)
            for a in _GAUSS:
                s = 0.5 * (1 + a)
                phi = np.array([1 - s, s])
                w = 0.5 * h
                edge = w * np.outer(phi, phi)
                for g in range(G):
                    for d in range(N):
                        mu = float(np.dot(dirs[d], normal))
                        rows = [idx(g, d, n0), idx(g, d, n1)]
                        if mu > 0:
                            A[np.ix_(rows, rows)] += mu * edge
                        elif mu < 0 and reflective and include_reflection:
                            r = _reflected_index(dirs, d, normal)
                            cols = [idx(g, r, n0), idx(g, r, n1)]
                            A[np.ix_(rows, cols)] -= abs(mu) * edge
    return A, B


def dense_preconditioner(problem: TransportProblem) -> np.ndarray:
    """Dense block-diagonal SPD part (no scattering, no reflection)."""
    A, _ = dense_operators(problem, include_scattering=False, include_reflection=False)
    return A


def dense_eigen(A, B, tol=1e-12, max_iters=200000, psi0=None):
    """Inverse power iteration with a dense LU of ``A``.

    Returns ``(k, psi)`` with ``psi`` scaled so that ``||B psi|| = k``.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    lu = scipy.linalg.lu_factor(A)
    psi = np.ones(A.shape[0]) if psi0 is None else np.array(psi0, dtype=np.float64)
    k = np.linalg.norm(B @ psi)
    psi /= k
    for _ in range(max_iters):
        new = scipy.linalg.lu_solve(lu, B @ psi)
        k_new = np.linalg.norm(B @ new)
        converged = abs(k_new - k) <= tol * abs(k_new)
        change = np.linalg.norm(new / k_new - psi) / np.linalg.norm(psi)
        psi, k = new / k_new, k_new
        if converged and change <= 1e3 * tol:
            break
    return float(k), psi * k
