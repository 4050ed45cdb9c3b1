"""Structured 2D meshes, element dual graphs, partitioning and node ownership.

Numbering is row-major: element ``(i, j)`` is ``j * nx + i`` and node
``(i, j)`` is ``j * (nx + 1) + i``.  Local element nodes are ordered
lower-left, lower-right, upper-right, upper-left.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ArgumentError, ConfigurationError, DegeneratePartitionError

SIDES = ("left", "right", "bottom", "top")
BOUNDARY_KINDS = ("vacuum", "reflective")

__all__ = [
    "SIDES",
    "Region",
    "StructuredMesh2D",
    "DualGraph",
    "Partition",
    "NodeOwnership",
    "build_mesh",
    "dual_graph",
    "partition_bisect",
    "hierarchical_partition",
    "assign_nodes_lowest_rank",
    "assign_nodes_balanced",
    "node_ratio",
    "write_partition_csv",
    "write_ownership_csv",
]


@dataclass(frozen=True)
class Region:
    """Rectangle of elements ``i0 <= i < i1``, ``j0 <= j < j1`` filled with ``material``."""

    material: int
    i0: int
    i1: int
    j0: int
    j1: int


@dataclass
class StructuredMesh2D:
    nx: int
    ny: int
    hx: float
    hy: float
    material_of_element: np.ndarray
    boundary_condition_of_side: dict = field(
        default_factory=lambda: {s: "vacuum" for s in SIDES}
    )

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    def node_id(self, i, j):
        return j * (self.nx + 1) + i

    @cached_property
    def element_nodes(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        i, j = i.ravel(), j.ravel()
        ll = self.node_id(i, j)
        return np.stack([ll, ll + 1, ll + self.nx + 2, ll + self.nx + 1], axis=1)

    @cached_property
    def node_coords(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nx + 1), np.arange(self.ny + 1))
        return np.stack([i.ravel() * self.hx, j.ravel() * self.hy], axis=1)

    @cached_property
    def element_centroids(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        return np.stack([(i.ravel() + 0.5) * self.hx, (j.ravel() + 0.5) * self.hy], axis=1)

    def side_nodes(self, side: str) -> np.ndarray:
        """Node ids along one side, in increasing coordinate order."""
        if side == "left":
            return self.node_id(0, np.arange(self.ny + 1))
        if side == "right":
            return self.node_id(self.nx, np.arange(self.ny + 1))
        if side == "bottom":
            return self.node_id(np.arange(self.nx + 1), 0)
        if side == "top":
            return self.node_id(np.arange(self.nx + 1), self.ny)
        raise ArgumentError(f"unknown side {side!r}")

    def side_length(self, side: str) -> float:
        """Length of one boundary edge on ``side``."""
        return self.hy if side in ("left", "right") else self.hx

    @cached_property
    def elements_of_node(self) -> list:
        adj = [[] for _ in range(self.n_nodes)]
        for e, nodes in enumerate(self.element_nodes):
            for v in nodes:
                adj[v].append(e)
        return adj


def build_mesh(nx, ny, hx=1.0, hy=1.0, material=0, regions=(), boundary=None,
               known_materials=None) -> StructuredMesh2D:
    """Build a uniform rectangular mesh.

    ``material`` is either a single material id applied to every element, an
    ``(ny, nx)`` array of ids (``None``/negative entries mean "unassigned"),
    or ``None``.  ``regions`` are painted on top in order.  Every element must
    end up with a material listed in ``known_materials`` when that is given.
    """
    if nx < 1 or ny < 1:
        raise ConfigurationError(f"element counts must be >= 1, got {nx}x{ny}", key="mesh")
    if not (hx > 0 and hy > 0):
        raise ConfigurationError(f"element sizes must be positive, got {hx}, {hy}", key="mesh")

    mats = np.full((ny, nx), -1, dtype=np.int64)
    if material is not None:
        arr = np.asarray(material, dtype=object)
        if arr.ndim == 0:
            mats[:, :] = int(material)
        else:
            if arr.shape != (ny, nx):
                raise ConfigurationError(
                    f"material map has shape {arr.shape}, expected {(ny, nx)}", key="mesh.material")
            for (j, i), m in np.ndenumerate(arr):
                mats[j, i] = -1 if m is None else int(m)
    for r in regions:
        if not (0 <= r.i0 < r.i1 <= nx and 0 <= r.j0 < r.j1 <= ny):
            raise ConfigurationError(f"region {r} outside the {nx}x{ny} mesh", key="mesh.regions")
        mats[r.j0:r.j1, r.i0:r.i1] = r.material

    flat = mats.ravel()
    for e, m in enumerate(flat):
        if m < 0 or (known_materials is not None and m not in known_materials):
            i, j = e % nx, e // nx
            raise ConfigurationError(
                f"element {e} (i={i}, j={j}) has no valid material (got {m})", key="mesh")

    bc = {s: "vacuum" for s in SIDES}
    if boundary:
        for side, kind in boundary.items():
            if side not in SIDES:
                raise ConfigurationError(f"unknown side {side!r}", key="mesh.boundary")
            if kind not in BOUNDARY_KINDS:
                raise ConfigurationError(f"unknown boundary kind {kind!r}", key=f"mesh.boundary.{side}")
            bc[side] = kind
    return StructuredMesh2D(nx, ny, float(hx), float(hy), flat, bc)


# --------------------------------------------------------------------------
# Dual graph and partitioning


@dataclass
class DualGraph:
    n_vertices: int
    adjacency: list

    @property
    def n_edges(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2


def dual_graph(mesh: StructuredMesh2D) -> DualGraph:
    nx, ny = mesh.nx, mesh.ny
    adjacency = []
    for e in range(mesh.n_elements):
        i, j = e % nx, e // nx
        nbrs = []
        if j > 0:
            nbrs.append(e - nx)
        if i > 0:
            nbrs.append(e - 1)
        if i < nx - 1:
            nbrs.append(e + 1)
        if j < ny - 1:
            nbrs.append(e + nx)
        adjacency.append(np.array(nbrs, dtype=np.int64))
    return DualGraph(mesh.n_elements, adjacency)


@dataclass
class Partition:
    part_of_element: np.ndarray
    np: int
    np1: int = 1
    np2: int = 0

    def __post_init__(self):
        if self.np2 == 0:
            self.np2 = self.np
        counts = np.bincount(self.part_of_element, minlength=self.np)
        if len(counts) != self.np or np.any(counts == 0):
            raise DegeneratePartitionError("every part must own at least one element")

    @property
    def element_counts(self) -> np.ndarray:
        return np.bincount(self.part_of_element, minlength=self.np)


def _bisect(ids, coords, nparts, first_part, out):
    if nparts == 1:
        out[ids] = first_part
        return
    pts = coords[ids]
    extent = pts.max(axis=0) - pts.min(axis=0)
    axis = 0 if extent[0] >= extent[1] else 1
    other = 1 - axis
    # Stable lexicographic sort: split axis, then the other axis, then id.
    order = np.lexsort((ids, pts[:, other], pts[:, axis]))
    left_parts = nparts // 2
    n_left = int(round(len(ids) * left_parts / nparts))
    n_left = min(max(n_left, left_parts), len(ids) - (nparts - left_parts))
    sorted_ids = ids[order]
    _bisect(sorted_ids[:n_left], coords, left_parts, first_part, out)
    _bisect(sorted_ids[n_left:], coords, nparts - left_parts, first_part + left_parts, out)


def partition_bisect(graph: DualGraph, np_: int, coords) -> Partition:
    """Recursive coordinate bisection of the element set into ``np_`` parts."""
    n = graph.n_vertices
    if np_ < 1 or np_ > n:
        raise ArgumentError(f"cannot split {n} elements into {np_} parts")
    coords = np.asarray(coords, dtype=np.float64)
    out = np.empty(n, dtype=np.int64)
    _bisect(np.arange(n), coords, np_, 0, out)
    return Partition(out, np_, 1, np_)


def hierarchical_partition(mesh: StructuredMesh2D, np1: int, np2: int) -> Partition:
    """Two-stage partition: ``np1`` big parts, each cut into ``np2`` small parts."""
    if np1 < 1 or np2 < 1 or np1 * np2 > mesh.n_elements:
        raise ArgumentError(f"cannot split {mesh.n_elements} elements into {np1}x{np2} parts")
    graph = dual_graph(mesh)
    coords = mesh.element_centroids
    big = partition_bisect(graph, np1, coords).part_of_element
    out = np.empty(mesh.n_elements, dtype=np.int64)
    for b in range(np1):
        ids = np.flatnonzero(big == b)
        if np2 > len(ids):
            raise ArgumentError(f"big part {b} has {len(ids)} elements, fewer than np2={np2}")
        local = np.empty(mesh.n_elements, dtype=np.int64)
        _bisect(ids, coords, np2, 0, local)
        out[ids] = b * np2 + local[ids]
    return Partition(out, np1 * np2, np1, np2)


# --------------------------------------------------------------------------
# Node ownership


@dataclass
class NodeOwnership:
    owner_of_node: np.ndarray
    node_counts: np.ndarray

    @classmethod
    def from_owners(cls, owners, n_parts):
        owners = np.asarray(owners, dtype=np.int64)
        return cls(owners, np.bincount(owners, minlength=n_parts))


def _parts_of_nodes(mesh, partition):
    parts = partition.part_of_element
    return [sorted({int(parts[e]) for e in els}) for els in mesh.elements_of_node]


def assign_nodes_lowest_rank(mesh: StructuredMesh2D, partition: Partition) -> NodeOwnership:
    owners = [p[0] for p in _parts_of_nodes(mesh, partition)]
    return NodeOwnership.from_owners(owners, partition.np)


def assign_nodes_balanced(mesh: StructuredMesh2D, partition: Partition) -> NodeOwnership:
    """Partition-based assignment: split each two-part interface in half.

    Interior nodes go to their only part.  The nodes shared by exactly two
    parts ``p < q`` are sorted by id and split at the midpoint, the first
    half going to ``p``; when the count is odd the larger half goes to the
    part owning fewer nodes so far (``p`` on a tie).  Nodes touching three
    or more parts are then given, in id order, to the currently least-loaded
    adjacent part.
    """
    node_parts = _parts_of_nodes(mesh, partition)
    owners = np.full(mesh.n_nodes, -1, dtype=np.int64)
    counts = np.zeros(partition.np, dtype=np.int64)
    interfaces = {}
    multi = []
    for v, parts in enumerate(node_parts):
        if len(parts) == 1:
            owners[v] = parts[0]
            counts[parts[0]] += 1
        elif len(parts) == 2:
            interfaces.setdefault(tuple(parts), []).append(v)
        else:
            multi.append(v)
    for (p, q) in sorted(interfaces):
        nodes = interfaces[(p, q)]
        small = len(nodes) // 2
        # an odd node goes to whichever side currently owns fewer nodes
        n_p = len(nodes) - small if counts[p] <= counts[q] else small
        owners[nodes[:n_p]] = p
        owners[nodes[n_p:]] = q
        counts[p] += n_p
        counts[q] += len(nodes) - n_p
    for v in multi:
        parts = node_parts[v]
        best = min(parts, key=lambda p: (counts[p], p))
        owners[v] = best
        counts[best] += 1
    return NodeOwnership(owners, counts)


def node_ratio(ownership: NodeOwnership) -> float:
    counts = np.asarray(ownership.node_counts)
    if np.any(counts == 0):
        raise DegeneratePartitionError("a part owns no mesh nodes")
    return float(counts.max() / counts.min())


def write_partition_csv(path, partition: Partition) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element_id", "part"])
        w.writerows(enumerate(partition.part_of_element.tolist()))


def write_ownership_csv(path, ownership: NodeOwnership) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "owner"])
        w.writerows(enumerate(ownership.owner_of_node.tolist()))
