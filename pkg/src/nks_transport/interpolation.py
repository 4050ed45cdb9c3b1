"""Interpolation operators and the multilevel hierarchy.

Interpolation is built on one subspace block and expanded block-diagonally
to the full space, so every block of the preconditioner shares the same
coarse space.  Coarse operators are Galerkin products computed block by
block.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .coarsening import (
    CfSplit,
    StrengthGraph,
    aggressive_coarsen,
    contiguous_blocks,
    hcljp_coarsen,
    strength_graph,
)
from .errors import (
    ArgumentError,
    CoverageError,
    InterpolationValidityError,
    StagnationError,
    UnreachablePointError,
)
from .sparse import DenseFactor, as_csr, dense_factor, triple_product
from .transport import BlockDiagonal

__all__ = [
    "Interpolation",
    "direct_interpolation",
    "classical_interpolation",
    "multipass_interpolation",
    "truncate_row",
    "expand_interpolation",
    "HierarchyParams",
    "Level",
    "MultilevelHierarchy",
    "build_hierarchy",
]

DEFAULT_TRUNCATION = 1e-4


@dataclass
class Interpolation:
    """Fine-by-coarse matrix with the coarse column of every C-point."""

    matrix: sp.csr_matrix
    coarse_index_of: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def truncate_row(weights: dict, factor: float = DEFAULT_TRUNCATION) -> dict:
    """Drop ``|w| < factor * max|w|`` and rescale so the row sum is kept."""
    if not weights or factor <= 0:
        return dict(weights)
    big = max(abs(w) for w in weights.values())
    kept = {k: w for k, w in weights.items() if abs(w) >= factor * big}
    total, kept_total = sum(weights.values()), sum(kept.values())
    if len(kept) < len(weights) and kept_total != 0.0:
        scale = total / kept_total
        kept = {k: w * scale for k, w in kept.items()}
    return kept


def _rows(P):
    A = as_csr(P)
    n = A.shape[0]
    diag = A.diagonal()
    rows = []
    for i in range(n):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        cols, vals = A.indices[lo:hi], A.data[lo:hi]
        keep = cols != i
        rows.append(dict(zip(cols[keep].tolist(), vals[keep].tolist())))
    return diag, rows


def _assemble(n, split: CfSplit, weights: dict) -> Interpolation:
    coarse = split.c_points
    index = np.full(n, -1, dtype=np.int64)
    index[coarse] = np.arange(len(coarse))
    r, c, v = [], [], []
    for i in coarse:
        r.append(i)
        c.append(index[i])
        v.append(1.0)
    for i, row in weights.items():
        for j, w in sorted(row.items()):
            r.append(i)
            c.append(index[j])
            v.append(w)
    M = sp.csr_matrix((v, (r, c)), shape=(n, len(coarse)))
    M.sum_duplicates()
    M.sort_indices()
    return Interpolation(M, index)


def _check_inputs(P, graph, split):
    n = as_csr(P).shape[0]
    if graph.n != n or split.n != n:
        raise ArgumentError("operator, strength graph and splitting sizes differ")
    if not split.is_complete():
        raise ArgumentError("splitting still has undecided points")
    return n


def direct_interpolation(P, graph: StrengthGraph, split: CfSplit,
                         truncation: float = DEFAULT_TRUNCATION) -> Interpolation:
    """Weights ``-(p_ij / p_ii) * sum_k p_ik / sum_{l in C_i} p_il``.

    ``C_i`` are the C-points ``i`` strongly depends on; the first sum runs
    over all off-diagonal neighbours.
    """
    n = _check_inputs(P, graph, split)
    diag, rows = _rows(P)
    is_c = split.is_coarse
    weights = {}
    for i in split.f_points:
        ci = [j for j in graph.depends_on[i] if is_c[j]]
        if not ci:
            raise CoverageError(int(i))
        row = rows[i]
        total = sum(row.values())
        coarse_total = sum(row.get(j, 0.0) for j in ci)
        if coarse_total == 0.0 or diag[i] == 0.0:
            raise InterpolationValidityError(f"degenerate denominator in row {i}")
        scale = -total / (coarse_total * diag[i])
        weights[int(i)] = truncate_row({j: scale * row[j] for j in ci}, truncation)
    return _assemble(n, split, weights)


def classical_interpolation(P, graph: StrengthGraph, split: CfSplit,
                            truncation: float = DEFAULT_TRUNCATION) -> Interpolation:
    """Classical RS interpolation.

    Strong F-neighbours are distributed over ``C_i`` in proportion to their
    own couplings to ``C_i``; every other neighbour outside ``C_i`` is
    lumped onto the diagonal, as is a strong F-neighbour with no coupling
    to ``C_i``.
    """
    n = _check_inputs(P, graph, split)
    diag, rows = _rows(P)
    is_c = split.is_coarse
    weights = {}
    for i in split.f_points:
        deps = graph.depends_on[i]
        ci = [j for j in deps if is_c[j]]
        if not ci:
            raise CoverageError(int(i))
        fs = [k for k in deps if not is_c[k]]
        strong = set(ci) | set(fs)
        row = rows[i]
        denom = diag[i] + sum(v for k, v in row.items() if k not in strong)
        if denom == 0.0:
            raise InterpolationValidityError(f"degenerate diagonal in row {i}")
        num = {j: row.get(j, 0.0) for j in ci}
        for k in fs:
            rk = rows[k]
            through = sum(rk.get(m, 0.0) for m in ci)
            if through == 0.0:
                # nothing to distribute through; treat the coupling as weak
                denom += row[k]
                continue
            for j in ci:
                num[j] += row[k] * rk.get(j, 0.0) / through
        if denom == 0.0:
            raise InterpolationValidityError(f"degenerate diagonal in row {i}")
        weights[int(i)] = truncate_row({j: -v / denom for j, v in num.items()}, truncation)
    return _assemble(n, split, weights)


def multipass_interpolation(P, graph: StrengthGraph, split: CfSplit,
                            truncation: float = DEFAULT_TRUNCATION,
                            return_passes=False):
    """Interpolation that reaches F-points without a strong C-neighbour.

    Pass one uses direct weights on F-points that strongly depend on a
    C-point.  Each later pass handles F-points strongly depending on points
    finished in earlier passes and interpolates through their weights.
    """
    n = _check_inputs(P, graph, split)
    diag, rows = _rows(P)
    is_c = split.is_coarse
    done = is_c.copy()
    pass_of = np.where(is_c, 0, -1)
    weights = {}
    remaining = [int(i) for i in split.f_points]
    p = 0
    while remaining:
        p += 1
        new = {}
        for i in remaining:
            src = [j for j in graph.depends_on[i] if done[j]]
            if not src:
                continue
            row = rows[i]
            total = sum(row.values())
            src_total = sum(row.get(j, 0.0) for j in src)
            if src_total == 0.0 or diag[i] == 0.0:
                raise InterpolationValidityError(f"degenerate denominator in row {i}")
            scale = -total / (src_total * diag[i])
            w = {}
            for j in src:
                through = {j: 1.0} if is_c[j] else weights[j]
                for k, wjk in through.items():
                    w[k] = w.get(k, 0.0) + scale * row[j] * wjk
            new[i] = truncate_row(w, truncation)
        if not new:
            raise UnreachablePointError(remaining)
        weights.update(new)
        for i in new:
            done[i] = True
            pass_of[i] = p
        remaining = [i for i in remaining if i not in new]
    interp = _assemble(n, split, weights)
    return (interp, pass_of) if return_passes else interp


def expand_interpolation(I_s, n_blocks: int) -> sp.csr_matrix:
    """Block-diagonal copy of the subspace interpolation for every block."""
    M = I_s.matrix if isinstance(I_s, Interpolation) else I_s
    return sp.block_diag([M] * int(n_blocks), format="csr")


# --------------------------------------------------------------------------
# Hierarchy


_INTERPOLATORS = {
    "direct": direct_interpolation,
    "classical": classical_interpolation,
    "multipass": multipass_interpolation,
}


@dataclass
class HierarchyParams:
    theta: float = 0.25
    agg_levels: int = 10
    interp: str = "direct"
    coarse_cap: int = 200
    max_levels: int = 25
    seed: int = 0
    truncation: float = DEFAULT_TRUNCATION
    subspace: int = 0

    def validate(self):
        if not 0.0 < self.theta <= 1.0:
            raise ArgumentError(f"theta={self.theta} outside (0, 1]")
        if self.interp not in _INTERPOLATORS:
            raise ArgumentError(f"unknown interpolation '{self.interp}'")
        if self.agg_levels < 0 or self.coarse_cap < 1 or self.max_levels < 1:
            raise ArgumentError("agg_levels, coarse_cap and max_levels must be positive")
        return self


@dataclass
class Level:
    operator: BlockDiagonal
    scheme: str = "coarsest"
    split: CfSplit | None = None
    sub_interp: Interpolation | None = None
    interp: sp.csr_matrix | None = None
    coarse_points: np.ndarray | None = None

    @property
    def n_rows(self) -> int:
        return self.operator.shape[0]

    @property
    def nnz(self) -> int:
        return self.operator.nnz


@dataclass
class MultilevelHierarchy:
    levels: list
    coarsest: DenseFactor
    params: HierarchyParams = field(default_factory=HierarchyParams)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def nnz(self) -> int:
        return sum(lv.nnz for lv in self.levels)

    @property
    def operator_complexity(self) -> float:
        return self.nnz / self.levels[0].nnz

    @property
    def grid_complexity(self) -> float:
        return sum(lv.n_rows for lv in self.levels) / self.levels[0].n_rows

    def summary_rows(self):
        out = []
        for k, lv in enumerate(self.levels):
            out.append({"level": k, "rows": lv.n_rows, "nnz": lv.nnz,
                        "subspace_rows": lv.operator.block_size, "scheme": lv.scheme})
        return out

    def summary(self) -> str:
        lines = [f"{'level':>5} {'rows':>10} {'nnz':>12} {'sub_rows':>9}  scheme"]
        for r in self.summary_rows():
            lines.append(f"{r['level']:>5} {r['rows']:>10} {r['nnz']:>12} "
                         f"{r['subspace_rows']:>9}  {r['scheme']}")
        lines.append(f"grid complexity {self.grid_complexity:.3f}, "
                     f"operator complexity {self.operator_complexity:.3f}")
        return "\n".join(lines)


def galerkin_blocks(op: BlockDiagonal, I) -> BlockDiagonal:
    I = I.matrix if isinstance(I, Interpolation) else as_csr(I)
    R = I.T.tocsr()
    return BlockDiagonal([triple_product(R, B, I) for B in op.blocks])


def build_hierarchy(P: BlockDiagonal, params: HierarchyParams | None = None,
                    blocks=1) -> MultilevelHierarchy:
    """Coarsen the subspace block level by level until the cap is reached.

    ``blocks`` is the number of contiguous row blocks used by the hybrid
    splitting on the finest level, or a block id per fine subspace point.
    On coarser levels every coarse point keeps the block of the fine point
    it came from.
    """
    params = (params or HierarchyParams()).validate()
    n_sub = P.block_size
    if np.isscalar(blocks):
        block_of = contiguous_blocks(n_sub, int(blocks))
    else:
        block_of = np.asarray(blocks, dtype=np.int64)
        if block_of.shape != (n_sub,):
            raise ArgumentError("block ids must be given for every subspace point")

    levels = []
    op = P
    for depth in range(params.max_levels):
        if op.shape[0] <= params.coarse_cap or depth == params.max_levels - 1:
            break
        P_s = op.blocks[params.subspace]
        graph = strength_graph(P_s, params.theta)
        aggressive = depth < params.agg_levels
        if aggressive:
            split = aggressive_coarsen(graph, block_of, params.seed)
            interp = multipass_interpolation(P_s, graph, split, params.truncation)
            scheme = "aggressive+multipass"
        else:
            split = hcljp_coarsen(graph, block_of, params.seed)
            interp = _INTERPOLATORS[params.interp](P_s, graph, split, params.truncation)
            scheme = f"hcljp+{params.interp}"
        n_c = split.n_coarse
        if n_c == 0 or n_c >= op.block_size:
            raise StagnationError(depth, params.theta, op.block_size)
        levels.append(Level(op, scheme, split, interp,
                            expand_interpolation(interp, op.n_blocks), split.c_points))
        op = galerkin_blocks(op, interp)
        block_of = block_of[split.c_points]
    levels.append(Level(op))
    coarsest = dense_factor(op.tocsr(), cap=max(params.coarse_cap, op.shape[0]))
    return MultilevelHierarchy(levels, coarsest, params)
