"""Multilevel hierarchy built on one subspace block.

The interpolation is built for a single (group, direction) block and copied
to every block, so the coarse operators stay block-diagonal.  Aggressive
coarsening with multipass interpolation on the first levels keeps operator
complexity low.
"""
import numpy as np

from nks_transport.config import load_config
from nks_transport.interpolation import (
    HierarchyParams,
    build_hierarchy,
    expand_interpolation,
    galerkin_blocks,
)

cfg = load_config("configs/core_32.toml")
P = cfg.build_problem().preconditioner

for agg in (10, 0):
    h = build_hierarchy(P, HierarchyParams(agg_levels=agg), blocks=4)
    print(f"agg_levels={agg}")
    print(h.summary())
    print()

# %% per-block Galerkin products equal the full-space product
h = build_hierarchy(P, HierarchyParams(), blocks=4)
I = h.levels[0].sub_interp
E = expand_interpolation(I, P.n_blocks)
full = E.T @ P.tocsr() @ E
blocks = galerkin_blocks(P, I).tocsr()
print("max |full - blockwise| =", abs(full - blocks).max())
print("interpolation row sums in [%.3f, %.3f]" % (I.row_sums().min(), I.row_sums().max()))
print("coarse rows per level:", [lv.n_rows for lv in h.levels])
print("mean weights per fine row:", np.diff(I.matrix.indptr).mean().round(2))
