"""C/F splittings of one transport block.

The strength graph of a single (group, direction) block is split by the
sequential Ruge-Stueben rule, by CLJP, by the hybrid scheme (Ruge-Stueben
inside each subdomain, CLJP on the boundaries) and by aggressive hybrid
coarsening.  Fewer coarse points mean a cheaper hierarchy.
"""
import numpy as np

from nks_transport.coarsening import (
    aggressive_coarsen,
    cljp_coarsen,
    hcljp_coarsen,
    rs_coarsen,
    strength_graph,
)
from nks_transport.config import load_config
from nks_transport.transport import assemble_block

cfg = load_config("configs/core_32.toml")
problem = cfg.build_problem()
block = assemble_block(problem, 0, 1)
graph = strength_graph(block, theta=0.25)
print(f"block of {graph.n} rows, {graph.n_edges} strong dependencies")

splits = {
    "Ruge-Stueben": rs_coarsen(graph),
    "CLJP": cljp_coarsen(graph, seed=0),
    "hybrid, 4 blocks": hcljp_coarsen(graph, 4, seed=0),
    "aggressive, 4 blocks": aggressive_coarsen(graph, 4, seed=0),
}
for name, split in splits.items():
    print(f"{name:>22}: {split.n_coarse:5d} coarse points ({100 * split.n_coarse / graph.n:.1f}%)")

# %% every F point of the hybrid split strongly depends on a C point
labels = splits["hybrid, 4 blocks"].labels
orphans = [i for i in np.flatnonzero(labels == 0) if not labels[graph.depends_on[i]].any()]
print("hybrid F points without a coarse neighbour:", len(orphans))

# %% a picture of the aggressive split on the node grid
grid = splits["aggressive, 4 blocks"].labels.reshape(33, 33)
for row in grid[:12]:
    print("".join("#" if c else "." for c in row[:33]))
