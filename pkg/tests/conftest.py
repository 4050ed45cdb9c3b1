from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from nks_transport.mesh import Region, build_mesh
from nks_transport.transport import CrossSectionLibrary, Material, TransportProblem, build_quadrature

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

ALL_REFLECTIVE = {s: "reflective" for s in ("left", "right", "bottom", "top")}


def laplacian_1d(n):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()


def laplacian_2d(m):
    """5-point Laplacian on an m x m grid of points (Dirichlet rows)."""
    T = laplacian_1d(m)
    I = sp.identity(m)
    return (sp.kron(T, I) + sp.kron(I, T)).tocsr()


def neumann_laplacian_2d(m):
    """5-point graph Laplacian: zero row sums everywhere."""
    L = laplacian_2d(m).tolil()
    L.setdiag(0)
    L = L.tocsr()
    d = -np.asarray(L.sum(axis=1)).ravel()
    return (L + sp.diags(d)).tocsr()


def random_m_matrix(rng, n, density=0.15, zero_row_sum=False):
    """Symmetric M-matrix with random negative off-diagonals."""
    A = sp.random(n, n, density=density, random_state=rng, format="csr")
    A = A + A.T
    A.setdiag(0)
    A.eliminate_zeros()
    A = -A
    row = -np.asarray(A.sum(axis=1)).ravel()
    shift = 0.0 if zero_row_sum else 1e-2
    return (A + sp.diags(row + shift)).tocsr()


def one_group(sigma_t=1.0, sigma_s=0.5, nu_sigma_f=0.6):
    return Material([sigma_t], [[sigma_s]], [nu_sigma_f], [1.0], name="medium")


def two_group_materials():
    reflector = Material([0.8, 1.6], [[0.55, 0.2], [0.0, 1.5]], [0.0, 0.0], [0.0, 0.0],
                         name="reflector")
    fuel = Material([0.9, 1.8], [[0.5, 0.25], [0.0, 1.3]], [0.03, 0.9], [1.0, 0.0], name="fuel")
    return CrossSectionLibrary({0: reflector, 1: fuel})


def make_problem(nx=4, ny=4, n_dirs=4, groups=1, boundary=None, hx=1.0, hy=1.0, mixed=False):
    """Small problem; ``mixed`` puts a fissile block in the middle."""
    if groups == 2:
        xs = two_group_materials()
        regions = [Region(1, nx // 4, nx - nx // 4, ny // 4, ny - ny // 4)]
        mesh = build_mesh(nx, ny, hx, hy, 0 if mixed else 1, regions if mixed else (), boundary)
    else:
        mats = {0: one_group()}
        regions = ()
        if mixed:
            mats[1] = Material([1.5], [[0.3]], [0.9], [1.0], name="fuel")
            regions = [Region(1, nx // 4, nx - nx // 4, ny // 4, ny - ny // 4)]
        xs = CrossSectionLibrary(mats)
        mesh = build_mesh(nx, ny, hx, hy, 0, regions, boundary)
    return TransportProblem(mesh, xs, build_quadrature(n_dirs))


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
