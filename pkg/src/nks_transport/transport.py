"""SAAF discrete-ordinates discretisation on structured quadrilateral meshes.

Unknowns are nodal values of bilinear Lagrange elements, one field per
(group, direction), stored group-major then direction-major:
``index(g, d, node) = (g * n_dirs + d) * n_nodes + node``.

The angular domain is the unit circle (total measure 2*pi).  Scattering is
isotropic and the fission and scattering sources carry the 1/(2*pi) factor.
Each (group, direction) equation is left unweighted by ``w_d``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, InvalidCrossSectionError
from .mesh import SIDES, StructuredMesh2D
from .sparse import as_csr

__all__ = [
    "Material",
    "CrossSectionLibrary",
    "AngularQuadrature2D",
    "FluxLayout",
    "FluxVector",
    "TransportProblem",
    "BlockDiagonal",
    "build_quadrature",
    "assemble_block",
    "assemble_preconditioner",
    "apply_A",
    "apply_B",
    "scalar_flux",
]

TWO_PI = 2.0 * np.pi
OUTWARD_NORMALS = {
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "bottom": (0.0, -1.0),
    "top": (0.0, 1.0),
}


# --------------------------------------------------------------------------
# Cross sections


@dataclass
class Material:
    """Multigroup data.  ``sigma_s[gp, g]`` scatters from ``gp`` into ``g``."""

    sigma_t: np.ndarray
    sigma_s: np.ndarray
    nu_sigma_f: np.ndarray
    chi: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.sigma_t = np.atleast_1d(np.asarray(self.sigma_t, dtype=np.float64))
        G = len(self.sigma_t)
        self.sigma_s = np.asarray(self.sigma_s, dtype=np.float64).reshape(G, G)
        self.nu_sigma_f = np.atleast_1d(np.asarray(self.nu_sigma_f, dtype=np.float64))
        self.chi = np.atleast_1d(np.asarray(self.chi, dtype=np.float64))
        if self.nu_sigma_f.shape != (G,) or self.chi.shape != (G,):
            raise InvalidCrossSectionError(f"material {self.name!r}: inconsistent group counts")

    @property
    def n_groups(self) -> int:
        return len(self.sigma_t)

    @property
    def fissile(self) -> bool:
        return bool(np.any(self.nu_sigma_f > 0))

    def validate(self):
        label = self.name or "<unnamed>"
        if np.any(self.sigma_t <= 0) or not np.all(np.isfinite(self.sigma_t)):
            raise InvalidCrossSectionError(f"material {label}: sigma_t must be positive")
        for arr, what in ((self.sigma_s, "sigma_s"), (self.nu_sigma_f, "nu_sigma_f"), (self.chi, "chi")):
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise InvalidCrossSectionError(f"material {label}: {what} must be finite and >= 0")
        out_scatter = self.sigma_s.sum(axis=1)
        if np.any(out_scatter > self.sigma_t * (1 + 1e-12)):
            raise InvalidCrossSectionError(
                f"material {label}: scattering out of a group exceeds sigma_t")
        if self.fissile and abs(self.chi.sum() - 1.0) > 1e-10:
            raise InvalidCrossSectionError(f"material {label}: chi must sum to 1")


class CrossSectionLibrary(dict):
    """Mapping ``material id -> Material`` with a common group count."""

    def __init__(self, materials):
        super().__init__(materials)
        groups = {m.n_groups for m in self.values()}
        if len(groups) != 1:
            raise InvalidCrossSectionError(f"materials disagree on group count: {sorted(groups)}")
        for m in self.values():
            m.validate()

    @property
    def n_groups(self) -> int:
        return next(iter(self.values())).n_groups

    def per_element(self, material_of_element, attr):
        table = {mid: getattr(m, attr) for mid, m in self.items()}
        return np.stack([table[int(m)] for m in material_of_element])


# --------------------------------------------------------------------------
# Angular quadrature


@dataclass
class AngularQuadrature2D:
    angles: np.ndarray
    directions: np.ndarray
    weights: np.ndarray

    @property
    def n_dirs(self) -> int:
        return len(self.weights)

    def reflect_x(self, d):
        """Direction index of (Omega_x, -Omega_y)."""
        return (self.n_dirs - 1 - np.asarray(d)) % self.n_dirs

    def reflect_y(self, d):
        """Direction index of (-Omega_x, Omega_y)."""
        return (self.n_dirs // 2 - 1 - np.asarray(d)) % self.n_dirs

    def reflect(self, d, side):
        return self.reflect_y(d) if side in ("left", "right") else self.reflect_x(d)


def build_quadrature(n_dirs: int) -> AngularQuadrature2D:
    """Equal-weight product set on the circle, offset half a step from the axes."""
    if n_dirs < 4 or n_dirs % 4:
        raise ArgumentError(f"number of directions must be a positive multiple of 4, got {n_dirs}")
    angles = TWO_PI * (np.arange(n_dirs) + 0.5) / n_dirs
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return AngularQuadrature2D(angles, dirs, np.full(n_dirs, TWO_PI / n_dirs))


# --------------------------------------------------------------------------
# Layout and block-diagonal operators


@dataclass(frozen=True)
class FluxLayout:
    n_groups: int
    n_dirs: int
    n_nodes: int

    @property
    def size(self) -> int:
        return self.n_groups * self.n_dirs * self.n_nodes

    @property
    def n_blocks(self) -> int:
        return self.n_groups * self.n_dirs

    def index(self, g, d, node):
        return (g * self.n_dirs + d) * self.n_nodes + node

    def block_rows(self, g, d) -> slice:
        start = (g * self.n_dirs + d) * self.n_nodes
        return slice(start, start + self.n_nodes)

    def view(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.size,):
            raise ArgumentError(f"flux vector of shape {x.shape}, expected ({self.size},)")
        return x.reshape(self.n_groups, self.n_dirs, self.n_nodes)


@dataclass
class FluxVector:
    """Flat angular flux with its layout."""

    data: np.ndarray
    layout: FluxLayout

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.layout.view(self.data)
        if not np.all(np.isfinite(self.data)):
            raise ArgumentError("flux vector has non-finite entries")

    def group(self, g) -> np.ndarray:
        return self.layout.view(self.data)[g]


class BlockDiagonal:
    """Square block-diagonal operator with equally sized CSR blocks."""

    def __init__(self, blocks):
        self.blocks = [as_csr(b) for b in blocks]
        sizes = {b.shape for b in self.blocks}
        if len(sizes) != 1:
            raise ArgumentError("blocks must share one square shape")
        self.block_size = self.blocks[0].shape[0]

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def shape(self):
        n = self.n_blocks * self.block_size
        return (n, n)

    @property
    def nnz(self) -> int:
        return sum(b.nnz for b in self.blocks)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return as_csr(sp.block_diag(self.blocks, format="csr"))

    def tocsr(self) -> sp.csr_matrix:
        return self.csr

    def __matmul__(self, x):
        return self.csr @ x


# --------------------------------------------------------------------------
# Reference element


def _gauss2():
    g = 1.0 / np.sqrt(3.0)
    return np.array([-g, g]), np.array([1.0, 1.0])


def _reference_matrices(hx, hy):
    """Bilinear element matrices on an ``hx`` x ``hy`` rectangle (2x2 Gauss)."""
    pts, wts = _gauss2()
    s_nodes = np.array([0.0, 1.0, 1.0, 0.0])
    t_nodes = np.array([0.0, 0.0, 1.0, 1.0])
    M = np.zeros((4, 4))
    Gx = np.zeros((4, 4))
    Gy = np.zeros((4, 4))
    Kxx = np.zeros((4, 4))
    Kyy = np.zeros((4, 4))
    Kxy = np.zeros((4, 4))
    for a, wa in zip(pts, wts):
        for b, wb in zip(pts, wts):
            s, t = 0.5 * (1 + a), 0.5 * (1 + b)
            w = wa * wb * 0.25 * hx * hy
            fs = np.where(s_nodes == 1.0, s, 1 - s)
            ft = np.where(t_nodes == 1.0, t, 1 - t)
            phi = fs * ft
            dphix = np.where(s_nodes == 1.0, 1.0, -1.0) * ft / hx
            dphiy = np.where(t_nodes == 1.0, 1.0, -1.0) * fs / hy
            M += w * np.outer(phi, phi)
            Gx += w * np.outer(dphix, phi)
            Gy += w * np.outer(dphiy, phi)
            Kxx += w * np.outer(dphix, dphix)
            Kyy += w * np.outer(dphiy, dphiy)
            Kxy += w * np.outer(dphix, dphiy)
    return {"M": M, "Gx": Gx, "Gy": Gy, "Kxx": Kxx, "Kyy": Kyy, "Kxy": Kxy}


def _edge_mass(h):
    pts, wts = _gauss2()
    E = np.zeros((2, 2))
    for a, w in zip(pts, wts):
        s = 0.5 * (1 + a)
        phi = np.array([1 - s, s])
        E += w * 0.5 * h * np.outer(phi, phi)
    return E


# --------------------------------------------------------------------------
# Problem


class TransportProblem:
    """Mesh, cross sections and angular quadrature, plus cached operators."""

    def __init__(self, mesh: StructuredMesh2D, xs: CrossSectionLibrary, quad: AngularQuadrature2D):
        self.mesh = mesh
        self.xs = xs
        self.quad = quad
        missing = set(np.unique(mesh.material_of_element).tolist()) - set(xs)
        if missing:
            raise InvalidCrossSectionError(f"mesh uses undefined material ids {sorted(missing)}")
        self.layout = FluxLayout(xs.n_groups, quad.n_dirs, mesh.n_nodes)

    @property
    def n_groups(self) -> int:
        return self.layout.n_groups

    G = n_groups

    @property
    def size(self) -> int:
        return self.layout.size

    # element data ---------------------------------------------------------
    @cached_property
    def reference(self):
        return _reference_matrices(self.mesh.hx, self.mesh.hy)

    @cached_property
    def sigma_t_e(self):
        return self.xs.per_element(self.mesh.material_of_element, "sigma_t")

    @cached_property
    def sigma_s_e(self):
        return self.xs.per_element(self.mesh.material_of_element, "sigma_s")

    @cached_property
    def nu_sigma_f_e(self):
        return self.xs.per_element(self.mesh.material_of_element, "nu_sigma_f")

    @cached_property
    def chi_e(self):
        return self.xs.per_element(self.mesh.material_of_element, "chi")

    def _assemble(self, terms) -> sp.csr_matrix:
        """Sum of ``coef_e * local`` over elements for each ``(coef, local)`` term."""
        en = self.mesh.element_nodes
        data = sum(c[:, None, None] * L[None, :, :] for c, L in terms)
        rows = np.broadcast_to(en[:, :, None], data.shape)
        cols = np.broadcast_to(en[:, None, :], data.shape)
        n = self.mesh.n_nodes
        A = sp.coo_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))
        return as_csr(A)

    @cached_property
    def side_mass(self) -> dict:
        """Boundary edge-mass matrices, one per side, on the full node set."""
        out = {}
        n = self.mesh.n_nodes
        for side in SIDES:
            nodes = self.mesh.side_nodes(side)
            E = _edge_mass(self.mesh.side_length(side))
            rows, cols, vals = [], [], []
            for a, b in zip(nodes[:-1], nodes[1:]):
                pair = (a, b)
                for p in range(2):
                    for q in range(2):
                        rows.append(pair[p])
                        cols.append(pair[q])
                        vals.append(E[p, q])
            out[side] = as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))
        return out

    @cached_property
    def blocks(self) -> list:
        return [assemble_block(self, g, d)
                for g in range(self.n_groups) for d in range(self.quad.n_dirs)]

    @cached_property
    def preconditioner(self) -> BlockDiagonal:
        return BlockDiagonal(self.blocks)

    def _source_operators(self, coef_stream, coef_mass):
        """Group-coupled test operators for an isotropic source.

        ``coef_*[e, g, gp]`` multiply the streaming and mass parts of the
        SAAF test function for the source flowing from ``gp`` into ``g``.
        Returns three ``(G*n, G*n)`` matrices acting on stacked scalar fluxes.
        """
        G = self.n_groups
        ref = self.reference
        mats = {"x": [], "y": [], "m": []}
        for g in range(G):
            rx, ry, rm = [], [], []
            for gp in range(G):
                rx.append(self._assemble([(coef_stream[:, g, gp], ref["Gx"])]))
                ry.append(self._assemble([(coef_stream[:, g, gp], ref["Gy"])]))
                rm.append(self._assemble([(coef_mass[:, g, gp], ref["M"])]))
            mats["x"].append(rx)
            mats["y"].append(ry)
            mats["m"].append(rm)
        return tuple(as_csr(sp.bmat(mats[k], format="csr")) for k in ("x", "y", "m"))

    @cached_property
    def scattering_operators(self):
        # sigma_s_e[e, gp, g] -> coefficient indexed [e, g, gp]
        ss = np.transpose(self.sigma_s_e, (0, 2, 1))
        return self._source_operators(ss / self.sigma_t_e[:, :, None], ss)

    @cached_property
    def fission_operators(self):
        prod = self.chi_e[:, :, None] * self.nu_sigma_f_e[:, None, :]
        return self._source_operators(prod / self.sigma_t_e[:, :, None], prod)

    @cached_property
    def reflective_sides(self) -> list:
        return [s for s in SIDES if self.mesh.boundary_condition_of_side[s] == "reflective"]

    def scalar_fluxes(self, x) -> np.ndarray:
        X = self.layout.view(x)
        return np.einsum("d,gdn->gn", self.quad.weights, X)

    def apply_A(self, x) -> np.ndarray:
        return apply_A(self, x)

    def apply_B(self, x) -> np.ndarray:
        return apply_B(self, x)


# --------------------------------------------------------------------------
# Operators


def assemble_block(problem: TransportProblem, g: int, d: int) -> sp.csr_matrix:
    """SPD streaming + collision + outflow block for group ``g``, direction ``d``."""
    G, N = problem.n_groups, problem.quad.n_dirs
    if not (0 <= g < G and 0 <= d < N):
        raise ArgumentError(f"block ({g}, {d}) outside {G} groups x {N} directions")
    sig = problem.sigma_t_e[:, g]
    if np.any(sig <= 0):
        raise InvalidCrossSectionError(f"non-positive sigma_t in group {g}")
    ox, oy = problem.quad.directions[d]
    ref = problem.reference
    stream = ox * ox * ref["Kxx"] + ox * oy * (ref["Kxy"] + ref["Kxy"].T) + oy * oy * ref["Kyy"]
    P = problem._assemble([(1.0 / sig, stream), (sig, ref["M"])])
    for side in SIDES:
        nx_, ny_ = OUTWARD_NORMALS[side]
        mu = ox * nx_ + oy * ny_
        if mu > 0:
            P = P + mu * problem.side_mass[side]
    return as_csr(P)


def assemble_preconditioner(problem: TransportProblem) -> BlockDiagonal:
    """Block-diagonal SPD part of the operator, group-major then direction."""
    return problem.preconditioner


def _source_apply(problem, x, ops):
    """Apply ``(L2^-1 L v, q)`` with ``q`` built by ``ops`` from the scalar fluxes."""
    lay = problem.layout
    phi = problem.scalar_fluxes(x).ravel()
    Sx, Sy, Sm = ops
    ux = (Sx @ phi).reshape(lay.n_groups, lay.n_nodes)
    uy = (Sy @ phi).reshape(lay.n_groups, lay.n_nodes)
    um = (Sm @ phi).reshape(lay.n_groups, lay.n_nodes)
    ox = problem.quad.directions[:, 0]
    oy = problem.quad.directions[:, 1]
    out = (ox[None, :, None] * ux[:, None, :] + oy[None, :, None] * uy[:, None, :]
           + um[:, None, :]) / TWO_PI
    return out.ravel()


def apply_A(problem: TransportProblem, x) -> np.ndarray:
    """Matrix-free loss operator: SPD blocks minus scattering minus reflection."""
    x = np.asarray(x, dtype=np.float64)
    lay = problem.layout
    X = lay.view(x)
    y = problem.preconditioner @ x
    y -= _source_apply(problem, x, problem.scattering_operators)
    if problem.reflective_sides:
        Y = y.reshape(X.shape)
        dirs = problem.quad.directions
        for side in problem.reflective_sides:
            mu = dirs @ np.array(OUTWARD_NORMALS[side])
            incoming = np.flatnonzero(mu < 0)
            refl = problem.quad.reflect(incoming, side)
            E = problem.side_mass[side]
            src = X[:, refl, :].reshape(-1, lay.n_nodes)
            contrib = (E @ src.T).T.reshape(lay.n_groups, len(incoming), lay.n_nodes)
            Y[:, incoming, :] -= np.abs(mu[incoming])[None, :, None] * contrib
    return y


def apply_B(problem: TransportProblem, x) -> np.ndarray:
    """Matrix-free fission operator."""
    x = np.asarray(x, dtype=np.float64)
    problem.layout.view(x)
    return _source_apply(problem, x, problem.fission_operators)


def scalar_flux(x, quad: AngularQuadrature2D, g: int) -> np.ndarray:
    """Scalar flux of group ``g``: quadrature sum of the angular flux.

    ``x`` is a :class:`FluxVector` or an array shaped ``(G, n_dirs, n_nodes)``.
    """
    if isinstance(x, FluxVector):
        x = x.layout.view(x.data)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != quad.n_dirs:
        raise ArgumentError(f"expected a (G, {quad.n_dirs}, n_nodes) flux array, got {x.shape}")
    if not 0 <= g < x.shape[0]:
        raise ArgumentError(f"group {g} out of range")
    return quad.weights @ x[g]
