"""Strength graphs and C/F splittings of a subspace block.

Four splitting algorithms are provided: two-pass Ruge-Stueben (RS), the
randomised-round CLJP algorithm, the hybrid scheme that runs the RS first
pass inside each row block and finishes with CLJP (HCLJP), and an aggressive
variant that applies HCLJP a second time to the C-points it produced.

Edge ``i -> j`` means "i strongly depends on j" (equivalently, j strongly
influences i).
"""
from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError
from .sparse import as_csr, extract_principal_submatrix

__all__ = [
    "C_POINT",
    "F_POINT",
    "UNDECIDED",
    "StrengthGraph",
    "CfSplit",
    "extract_subspace",
    "strength_graph",
    "initial_measures",
    "random_perturbation",
    "rs_first_pass",
    "rs_coarsen",
    "cljp_coarsen",
    "hcljp_coarsen",
    "aggressive_coarsen",
    "contiguous_blocks",
    "write_coarsening_csv",
]

C_POINT = 1
F_POINT = 0
UNDECIDED = -1


@dataclass
class StrengthGraph:
    n: int
    depends_on: list
    influences: list

    @classmethod
    def from_dependencies(cls, n, depends_on):
        deps = [np.unique(np.asarray(d, dtype=np.int64)) for d in depends_on]
        for i, d in enumerate(deps):
            if np.any(d == i):
                raise ArgumentError(f"self-dependency at point {i}")
        infl = [[] for _ in range(n)]
        for i, d in enumerate(deps):
            for j in d:
                infl[j].append(i)
        return cls(n, deps, [np.array(x, dtype=np.int64) for x in infl])

    @classmethod
    def from_edges(cls, n, edges):
        deps = [[] for _ in range(n)]
        for i, j in edges:
            deps[i].append(j)
        return cls.from_dependencies(n, deps)

    def neighbors(self, i) -> np.ndarray:
        return np.union1d(self.depends_on[i], self.influences[i])

    @property
    def n_edges(self) -> int:
        return sum(len(d) for d in self.depends_on)

    def subgraph(self, points):
        """Graph induced on ``points`` (renumbered by position)."""
        points = np.asarray(points, dtype=np.int64)
        local = np.full(self.n, -1, dtype=np.int64)
        local[points] = np.arange(len(points))
        deps = []
        for p in points:
            d = local[self.depends_on[p]]
            deps.append(d[d >= 0])
        return StrengthGraph.from_dependencies(len(points), deps)


@dataclass
class CfSplit:
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def is_coarse(self) -> np.ndarray:
        return self.labels == C_POINT

    @property
    def c_points(self) -> np.ndarray:
        return np.flatnonzero(self.labels == C_POINT)

    @property
    def f_points(self) -> np.ndarray:
        return np.flatnonzero(self.labels == F_POINT)

    @property
    def n_coarse(self) -> int:
        return int(np.count_nonzero(self.labels == C_POINT))

    def is_complete(self) -> bool:
        return bool(np.all((self.labels == C_POINT) | (self.labels == F_POINT)))


# --------------------------------------------------------------------------
# Subspace and strength


def extract_subspace(P, n_groups: int, n_dirs: int, which: int = 0) -> sp.csr_matrix:
    """Diagonal block ``which`` of a block-diagonal operator (group-major)."""
    n_blocks = n_groups * n_dirs
    if not 0 <= which < n_blocks:
        raise ArgumentError(f"subspace index {which} outside [0, {n_blocks})")
    if hasattr(P, "blocks"):
        return P.blocks[which]
    P = as_csr(P)
    if P.shape[0] % n_blocks:
        raise ArgumentError("operator size is not a multiple of the block count")
    m = P.shape[0] // n_blocks
    return extract_principal_submatrix(P, np.arange(which * m, (which + 1) * m))


def strength_graph(P_s, theta: float = 0.25) -> StrengthGraph:
    """Classical strength of connection: ``-p_ij >= theta * max_{k!=i}(-p_ik)``."""
    if not 0.0 < theta <= 1.0:
        raise ArgumentError(f"theta={theta} outside (0, 1]")
    A = as_csr(P_s)
    if A.shape[0] != A.shape[1]:
        raise ArgumentError("strength graph needs a square matrix")
    n = A.shape[0]
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    off = A.indices != rows
    neg = np.where(off, -A.data, -np.inf)
    row_max = np.full(n, -np.inf)
    np.maximum.at(row_max, rows, neg)
    strong = off & (row_max[rows] > 0) & (neg >= theta * row_max[rows])
    deps = [[] for _ in range(n)]
    for i, j in zip(rows[strong], A.indices[strong]):
        deps[i].append(j)
    return StrengthGraph.from_dependencies(n, deps)


# --------------------------------------------------------------------------
# Measures


_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def random_perturbation(n: int, seed: int) -> np.ndarray:
    """Platform-independent values in (0, 1), one per point."""
    base = _splitmix64(int(seed) & _MASK64)
    out = np.empty(n)
    for i in range(n):
        h = _splitmix64(base ^ i) % (1 << 53)
        out[i] = (h if h else 0.5) / float(1 << 53)
    return out


def initial_measures(graph: StrengthGraph, seed=None) -> np.ndarray:
    """Number of points each point strongly influences, plus an optional perturbation."""
    m = np.array([len(x) for x in graph.influences], dtype=np.float64)
    if seed is not None:
        m += random_perturbation(graph.n, seed)
    return m


# --------------------------------------------------------------------------
# Ruge-Stueben


def rs_first_pass(graph: StrengthGraph, active=None, labels=None) -> np.ndarray:
    """Greedy maximum-measure selection restricted to ``active`` points.

    Only edges between active points are seen.  Returns a label array where
    inactive points stay ``UNDECIDED`` (unless already labelled in ``labels``).
    """
    n = graph.n
    active = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    labels = np.full(n, UNDECIDED, dtype=np.int8) if labels is None else labels.copy()
    measure = np.zeros(n, dtype=np.int64)
    for i in np.flatnonzero(active):
        infl = graph.influences[i]
        measure[i] = np.count_nonzero(active[infl])
    heap = [(-measure[i], i) for i in np.flatnonzero(active & (labels == UNDECIDED))]
    heapq.heapify(heap)
    while heap:
        neg_m, v = heapq.heappop(heap)
        if labels[v] != UNDECIDED or -neg_m != measure[v]:
            continue
        labels[v] = C_POINT
        new_f = [j for j in graph.influences[v] if active[j] and labels[j] == UNDECIDED]
        for j in new_f:
            labels[j] = F_POINT
        for j in new_f:
            for k in graph.depends_on[j]:
                if active[k] and labels[k] == UNDECIDED:
                    measure[k] += 1
                    heapq.heappush(heap, (-measure[k], k))
    return labels


def _rs_second_pass(graph: StrengthGraph, labels: np.ndarray) -> np.ndarray:
    labels = labels.copy()
    for i in np.flatnonzero(labels == F_POINT):
        if labels[i] != F_POINT:
            continue
        deps_i = graph.depends_on[i]
        for j in deps_i:
            if labels[j] != F_POINT:
                continue
            common = np.intersect1d(deps_i, graph.depends_on[j], assume_unique=True)
            if not np.any(labels[common] == C_POINT):
                labels[j] = C_POINT
    return labels


def rs_coarsen(graph: StrengthGraph) -> CfSplit:
    """Two-pass RS splitting."""
    labels = rs_first_pass(graph)
    return CfSplit(_rs_second_pass(graph, labels))


# --------------------------------------------------------------------------
# CLJP


def cljp_coarsen(graph: StrengthGraph, initial=None, seed: int = 0, return_measures=False,
                 return_rounds=False):
    """Randomised-round independent-set splitting.

    Each round selects every undecided point whose measure exceeds the
    measures of all undecided neighbours (either edge direction, over the
    edges still present) and makes them C-points together.  For every new
    C-point ``c`` and every undecided ``j`` depending on ``c``: ``m_j`` drops
    by one and the edge ``j -> c`` is removed; for every undecided ``k``
    depending on both ``j`` and ``c``, ``m_j`` drops by one more and the edge
    ``k -> j`` is removed.  After all updates of the round, the touched
    points with ``m_j < 1`` become F-points.

    ``initial`` is a label array (or :class:`CfSplit`) whose C/F entries are
    kept; its C-points are processed as if selected before the first round.
    ``return_rounds`` adds the round in which each C-point was selected
    (0 for initial C-points, -1 for F-points).
    """
    n = graph.n
    if initial is None:
        labels = np.full(n, UNDECIDED, dtype=np.int8)
    else:
        labels = np.array(getattr(initial, "labels", initial), dtype=np.int8)
        if labels.shape != (n,):
            raise ArgumentError("initial labelling has the wrong length")
    measure = initial_measures(graph, seed)
    deps = [set(d.tolist()) for d in graph.depends_on]
    infl = [set(x.tolist()) for x in graph.influences]
    orig_deps = [set(d.tolist()) for d in graph.depends_on]

    def select(c, touched):
        for j in sorted(infl[c]):
            deps[j].discard(c)
            infl[c].discard(j)
            if labels[j] != UNDECIDED:
                continue
            measure[j] -= 1.0
            touched.add(j)
            for k in sorted(infl[j]):
                if labels[k] == UNDECIDED and c in orig_deps[k]:
                    measure[j] -= 1.0
                    deps[k].discard(j)
                    infl[j].discard(k)

    def finish_round(touched):
        for j in sorted(touched):
            if labels[j] == UNDECIDED and measure[j] < 1.0:
                labels[j] = F_POINT

    round_of = np.full(n, -1, dtype=np.int64)
    round_of[labels == C_POINT] = 0
    touched = set()
    for c in np.flatnonzero(labels == C_POINT):
        select(int(c), touched)
    finish_round(touched)
    rnd = 0

    undecided = set(np.flatnonzero(labels == UNDECIDED).tolist())
    while undecided:
        chosen = []
        for i in sorted(undecided):
            mi = measure[i]
            if all(mi > measure[j] for j in deps[i] | infl[i] if labels[j] == UNDECIDED):
                chosen.append(i)
        if not chosen:
            # unreachable with distinct measures; kept as a guard
            chosen = [max(sorted(undecided), key=lambda i: measure[i])]
        rnd += 1
        for c in chosen:
            labels[c] = C_POINT
            round_of[c] = rnd
        touched = set()
        for c in chosen:
            select(c, touched)
        finish_round(touched)
        undecided = {i for i in undecided if labels[i] == UNDECIDED}

    split = CfSplit(labels)
    out = (split,) + ((measure,) if return_measures else ()) + ((round_of,) if return_rounds else ())
    return out if len(out) > 1 else split


# --------------------------------------------------------------------------
# Hybrid and aggressive


def contiguous_blocks(n: int, n_blocks: int) -> np.ndarray:
    """Block id per point for ``n_blocks`` contiguous, near-equal row blocks."""
    n_blocks = max(1, min(int(n_blocks), n)) if n else 1
    return (np.arange(n) * n_blocks) // max(n, 1)


def _block_array(graph, blocks):
    if np.isscalar(blocks):
        return contiguous_blocks(graph.n, int(blocks))
    if isinstance(blocks, np.ndarray) and blocks.ndim == 1 and blocks.dtype.kind in "iu":
        if len(blocks) != graph.n:
            raise ArgumentError("block id array must have one entry per point")
        return blocks.astype(np.int64)
    out = np.full(graph.n, -1, dtype=np.int64)
    for b, pts in enumerate(blocks):
        out[np.asarray(pts, dtype=np.int64)] = b
    if np.any(out < 0):
        raise ArgumentError("blocks do not cover every point")
    return out


def hcljp_coarsen(graph: StrengthGraph, blocks=1, seed: int = 0) -> CfSplit:
    """RS first pass inside each block's interior, completed by CLJP.

    ``blocks`` is a block count (contiguous row blocks), a block id per
    point, or a list of index arrays.
    """
    block_of = _block_array(graph, blocks)
    interior = np.zeros(graph.n, dtype=bool)
    for i in range(graph.n):
        nb = graph.neighbors(i)
        interior[i] = np.all(block_of[nb] == block_of[i])
    labels = np.full(graph.n, UNDECIDED, dtype=np.int8)
    for b in np.unique(block_of):
        active = interior & (block_of == b)
        if active.any():
            labels = rs_first_pass(graph, active, labels)
    return cljp_coarsen(graph, labels, seed)


def distance_two_graph(graph: StrengthGraph, points) -> StrengthGraph:
    """Strength graph on ``points``: ``a -> b`` when b is reachable from a by a
    strong dependency path of length one or two."""
    points = np.asarray(points, dtype=np.int64)
    local = np.full(graph.n, -1, dtype=np.int64)
    local[points] = np.arange(len(points))
    deps = []
    for a in points:
        reach = set(graph.depends_on[a].tolist())
        for k in graph.depends_on[a]:
            reach.update(graph.depends_on[k].tolist())
        reach.discard(int(a))
        targets = local[np.fromiter(reach, dtype=np.int64, count=len(reach))]
        deps.append(targets[targets >= 0])
    return StrengthGraph.from_dependencies(len(points), deps)


def aggressive_coarsen(graph: StrengthGraph, blocks=1, seed: int = 0,
                       return_first=False):
    """HCLJP applied twice: once to the graph, once to its C-points."""
    block_of = _block_array(graph, blocks)
    first = hcljp_coarsen(graph, block_of, seed)
    c1 = first.c_points
    graph2 = distance_two_graph(graph, c1)
    second = hcljp_coarsen(graph2, block_of[c1], seed)
    labels = np.full(graph.n, F_POINT, dtype=np.int8)
    labels[c1[second.is_coarse]] = C_POINT
    split = CfSplit(labels)
    return (split, first) if return_first else split


def write_coarsening_csv(path, graph: StrengthGraph, measures, split: CfSplit) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["point", "label", "measure", "depends_on"])
        for i in range(graph.n):
            label = {C_POINT: "C", F_POINT: "F"}.get(int(split.labels[i]), "U")
            w.writerow([i, label, repr(float(measures[i])),
                        " ".join(str(j) for j in graph.depends_on[i])])
