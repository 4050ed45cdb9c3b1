import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nks_transport.errors import ArgumentError, ConfigurationError, DegeneratePartitionError
from nks_transport.mesh import (
    NodeOwnership,
    Region,
    assign_nodes_balanced,
    assign_nodes_lowest_rank,
    build_mesh,
    dual_graph,
    hierarchical_partition,
    node_ratio,
    partition_bisect,
    write_ownership_csv,
    write_partition_csv,
)


def bisect(mesh, np_):
    return partition_bisect(dual_graph(mesh), np_, mesh.element_centroids)


def part_sets(partition):
    return {frozenset(np.flatnonzero(partition.part_of_element == p).tolist())
            for p in range(partition.np)}


def is_connected(mesh, elements):
    graph = dual_graph(mesh)
    elements = set(elements)
    start = next(iter(elements))
    seen, stack = {start}, [start]
    while stack:
        e = stack.pop()
        for f in graph.adjacency[e]:
            if f in elements and f not in seen:
                seen.add(f)
                stack.append(f)
    return seen == elements


# mesh ---------------------------------------------------------------


def test_single_element_mesh():
    m = build_mesh(1, 1)
    assert m.n_nodes == 4 and m.n_elements == 1


def test_uniform_counts():
    m = build_mesh(4, 4)
    assert m.n_nodes == 25 and m.n_elements == 16


def test_central_block_material():
    m = build_mesh(8, 8, material=1, regions=[Region(2, 2, 6, 2, 6)])
    counts = np.bincount(m.material_of_element)
    assert counts[1] == 48 and counts[2] == 16


def test_missing_material_names_element():
    mats = np.zeros((2, 2), dtype=object)
    mats[1, 0] = None
    with pytest.raises(ConfigurationError, match="element 2"):
        build_mesh(2, 2, material=mats)


def test_unknown_material_rejected():
    with pytest.raises(ConfigurationError):
        build_mesh(2, 2, material=3, known_materials={0, 1})


def test_row_major_numbering():
    m = build_mesh(3, 2, hx=2.0, hy=0.5)
    assert m.node_id(1, 1) == 5
    assert np.array_equal(m.element_nodes[4], [5, 6, 10, 9])
    assert np.allclose(m.node_coords[5], [2.0, 0.5])


# dual graph -----------------------------------------------------------


def test_dual_graph_pair():
    g = dual_graph(build_mesh(1, 2))
    assert g.n_edges == 1
    assert list(g.adjacency[0]) == [1]


def test_dual_graph_center_degree():
    g = dual_graph(build_mesh(3, 3))
    assert len(g.adjacency[4]) == 4


@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_dual_graph_edge_count(n):
    g = dual_graph(build_mesh(n, n))
    assert g.n_edges == 2 * n * (n - 1)
    for v, nb in enumerate(g.adjacency):
        assert v not in nb
        for w in nb:
            assert v in g.adjacency[w]


# bisection ----------------------------------------------------------------


def test_bisect_single_part():
    p = bisect(build_mesh(5, 3), 1)
    assert np.all(p.part_of_element == 0)


def test_bisect_two_halves():
    p = bisect(build_mesh(4, 4), 2)
    assert p.element_counts.tolist() == [8, 8]
    # the cut is straight: each part spans a contiguous range along one axis
    for s in part_sets(p):
        assert is_connected(build_mesh(4, 4), s)


def test_bisect_sixteen_parts():
    p = bisect(build_mesh(8, 8), 16)
    assert p.element_counts.tolist() == [4] * 16


def test_bisect_too_many_parts():
    with pytest.raises(ArgumentError):
        bisect(build_mesh(2, 2), 5)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 16))
def test_bisect_balance_and_determinism(nx, ny, np_):
    mesh = build_mesh(nx, ny)
    if np_ > mesh.n_elements:
        return
    p = bisect(mesh, np_)
    counts = p.element_counts
    assert counts.sum() == mesh.n_elements and counts.min() >= 1
    assert counts.max() / counts.min() <= 2
    if (np_ & (np_ - 1)) == 0 and mesh.n_elements % np_ == 0:
        assert counts.max() - counts.min() <= 1
    assert np.array_equal(p.part_of_element, bisect(mesh, np_).part_of_element)


# hierarchical partition ----------------------------------------------------


def test_hierarchical_eight_submeshes():
    mesh = build_mesh(16, 8)
    p = hierarchical_partition(mesh, 2, 4)
    outer = hierarchical_partition(mesh, 2, 1)
    assert p.np == 8
    for part in range(8):
        elems = np.flatnonzero(p.part_of_element == part)
        assert is_connected(mesh, elems)
        assert len(set(outer.part_of_element[elems].tolist())) == 1
        assert outer.part_of_element[elems[0]] == part // 4


def test_hierarchical_degenerate_outer():
    mesh = build_mesh(9, 7)
    assert np.array_equal(hierarchical_partition(mesh, 1, 5).part_of_element,
                          bisect(mesh, 5).part_of_element)


def test_hierarchical_degenerate_inner():
    mesh = build_mesh(8, 8)
    assert part_sets(hierarchical_partition(mesh, 4, 1)) == part_sets(bisect(mesh, 4))


# ownership -------------------------------------------------------------------


def two_part_strip():
    mesh = build_mesh(2, 1)
    return mesh, bisect(mesh, 2)


def test_lowest_rank_single_part():
    mesh = build_mesh(3, 3)
    own = assign_nodes_lowest_rank(mesh, bisect(mesh, 1))
    assert np.all(own.owner_of_node == 0)


def test_lowest_rank_interface_goes_low():
    mesh, part = two_part_strip()
    own = assign_nodes_lowest_rank(mesh, part)
    low = part.part_of_element[0]
    assert low == 0
    assert own.owner_of_node[1] == 0 and own.owner_of_node[4] == 0
    assert own.node_counts.tolist() == [4, 2]


def quadrant_counts_lowest(n):
    """Enumerate owners of an n x n element mesh split into quadrants."""
    h = n // 2
    counts = [0, 0, 0, 0]
    for j in range(n + 1):
        for i in range(n + 1):
            parts = set()
            for (ei, ej) in ((i - 1, j - 1), (i, j - 1), (i - 1, j), (i, j)):
                if 0 <= ei < n and 0 <= ej < n:
                    parts.add((ei >= h) + 2 * (ej >= h))
            counts[min(parts)] += 1
    return counts


def quadrant_partition(mesh):
    n = mesh.nx
    h = n // 2
    ij = np.arange(mesh.n_elements)
    parts = (ij % n >= h).astype(int) + 2 * (ij // n >= h).astype(int)
    from nks_transport.mesh import Partition
    return Partition(parts, 4)


def test_lowest_rank_quadrants_enumeration():
    mesh = build_mesh(8, 8)
    own = assign_nodes_lowest_rank(mesh, quadrant_partition(mesh))
    expected = quadrant_counts_lowest(8)
    assert own.node_counts.tolist() == expected
    assert node_ratio(own) == pytest.approx(max(expected) / min(expected))
    assert expected == [25, 20, 20, 16]


def test_balanced_single_part():
    mesh = build_mesh(3, 3)
    own = assign_nodes_balanced(mesh, bisect(mesh, 1))
    assert np.all(own.owner_of_node == 0)


def test_balanced_two_node_interface():
    mesh, part = two_part_strip()
    own = assign_nodes_balanced(mesh, part)
    assert {int(own.owner_of_node[1]), int(own.owner_of_node[4])} == {0, 1}
    assert own.node_counts.tolist() == [3, 3]


def test_balanced_quadrants_spread():
    mesh = build_mesh(16, 16)
    part = quadrant_partition(mesh)
    low = assign_nodes_lowest_rank(mesh, part).node_counts
    bal = assign_nodes_balanced(mesh, part).node_counts
    assert np.ptp(bal) < np.ptp(low)


def test_balanced_interface_halves():
    mesh = build_mesh(12, 10)
    part = hierarchical_partition(mesh, 2, 3)
    own = assign_nodes_balanced(mesh, part)
    node_parts = [sorted({int(part.part_of_element[e]) for e in els})
                  for els in mesh.elements_of_node]
    pairs = {}
    for v, ps in enumerate(node_parts):
        if len(ps) == 2:
            pairs.setdefault(tuple(ps), []).append(int(own.owner_of_node[v]))
    for (p, q), owners in pairs.items():
        assert abs(owners.count(p) - owners.count(q)) <= 1


def test_node_ratio_values():
    assert node_ratio(NodeOwnership.from_owners([0] * 10 + [1] * 10, 2)) == 1.0
    assert node_ratio(NodeOwnership.from_owners([0] * 9 + [1] * 6, 2)) == 1.5


def test_node_ratio_empty_part():
    with pytest.raises(DegeneratePartitionError):
        node_ratio(NodeOwnership.from_owners([0, 0, 2], 3))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 24), st.integers(2, 24), st.integers(1, 4), st.integers(1, 4))
def test_ownership_properties(nx, ny, np1, np2):
    mesh = build_mesh(nx, ny)
    if np1 * np2 > mesh.n_elements:
        return
    part = hierarchical_partition(mesh, np1, np2)
    owns = [assign_nodes_lowest_rank(mesh, part), assign_nodes_balanced(mesh, part)]
    for own in owns:
        assert own.node_counts.sum() == mesh.n_nodes
        assert np.array_equal(np.bincount(own.owner_of_node, minlength=part.np), own.node_counts)
        for v, els in enumerate(mesh.elements_of_node):
            assert own.owner_of_node[v] in {int(part.part_of_element[e]) for e in els}
    low, bal = owns
    assert node_ratio(bal) <= node_ratio(low)
    again = assign_nodes_balanced(mesh, hierarchical_partition(mesh, np1, np2))
    assert np.array_equal(again.owner_of_node, bal.owner_of_node)


def test_csv_exports(tmp_path):
    mesh = build_mesh(4, 2)
    part = bisect(mesh, 2)
    own = assign_nodes_balanced(mesh, part)
    write_partition_csv(tmp_path / "p.csv", part)
    write_ownership_csv(tmp_path / "o.csv", own)
    with open(tmp_path / "p.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["element_id", "part"] and len(rows) == 9
    with open(tmp_path / "o.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["node_id", "owner"] and len(rows) == 16
    assert [int(r[1]) for r in rows[1:]] == own.owner_of_node.tolist()
