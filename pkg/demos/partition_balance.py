"""Two-level mesh partitioning and interface node ownership.

Elements are split by recursive coordinate bisection, first into np1
groups and then each group into np2 parts.  Interface nodes are then given
to one owner, either the lowest-numbered touching part or by balancing the
owned-node counts.  NR is the largest owned-node count over the smallest.
"""
from nks_transport import (
    assign_nodes_balanced,
    assign_nodes_lowest_rank,
    build_mesh,
    hierarchical_partition,
    node_ratio,
)

mesh = build_mesh(64, 64)
for np1, np2 in [(2, 2), (4, 4), (3, 5)]:
    part = hierarchical_partition(mesh, np1, np2)
    low = assign_nodes_lowest_rank(mesh, part)
    bal = assign_nodes_balanced(mesh, part)
    print(f"np1={np1} np2={np2}: elements per part {part.element_counts.min()}-"
          f"{part.element_counts.max()}, NR lowest {node_ratio(low):.4f}, "
          f"balanced {node_ratio(bal):.4f}")

# %% lowest-rank ownership piles interface nodes onto low ranks
part = hierarchical_partition(mesh, 4, 4)
print("owned nodes, lowest rank:", assign_nodes_lowest_rank(mesh, part).node_counts.tolist())
print("owned nodes, balanced:   ", assign_nodes_balanced(mesh, part).node_counts.tolist())
