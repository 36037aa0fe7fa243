import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxspan_sim.errors import ConnectivityFailure, EmptyGraph, InvalidSpec, ParseError
from maxspan_sim.graph import (UNREACHABLE, DirectedGraph, GraphSpec, distance_matrix, generate,
                               generate_strongly_connected, geometric_edges, hop_distances, is_strongly_connected,
                               read_edge_list, write_edge_list)

import oracles

CYCLE3 = DirectedGraph.from_edges(3, [(0, 1), (1, 2), (2, 0)])

SPECS = [
    GraphSpec("ER", 12, p_edge=0.3, seed=4),
    GraphSpec("PreferentialAttachment", 12, m_attach=2, seed=4),
    GraphSpec("DirectedGeometric", 12, radius=0.5, seed=4),
    GraphSpec("KOut", 12, k=3, seed=4),
]


def complete(n):
    return DirectedGraph.from_matrix(np.ones((n, n)))


@st.composite
def digraphs(draw, max_n=8):
    n = draw(st.integers(1, max_n))
    bits = draw(st.lists(st.booleans(), min_size=n * n, max_size=n * n))
    return DirectedGraph.from_matrix(np.array(bits).reshape(n, n))


def test_kout_constant_out_degree():
    g = generate(GraphSpec("KOut", 20, k=5, seed=11))
    assert (g.out_degree() == 5).all()
    assert g.in_degree().sum() == 100


def test_er_extremes():
    assert generate(GraphSpec("ER", 6, p_edge=0.0)).n_edges == 0
    assert generate(GraphSpec("ER", 6, p_edge=1.0)).n_edges == 30


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.family)
def test_same_seed_same_graph(spec):
    assert generate(spec).edges == generate(spec).edges
    assert generate(spec).edges != generate(spec.with_seed(spec.seed + 1)).edges


def test_geometric_is_reciprocal_threshold_graph():
    g = generate(GraphSpec("DirectedGeometric", 30, radius=0.3, seed=2))
    a = g.adjacency_matrix()
    assert (a == a.T).all()
    pts = g.positions
    for i in range(g.n):
        for j in range(g.n):
            if i != j:
                assert a[i, j] == (np.hypot(*(pts[i] - pts[j])) <= 0.3)


def test_geometric_edges_boundary_inclusive():
    pts = np.array([[0.0, 0.0], [0.5, 0.0]])
    assert geometric_edges(pts, 0.5)[0, 1]
    assert not geometric_edges(pts, 0.4999)[0, 1]


def test_preferential_attachment_shape():
    n, m = 20, 2
    g = generate(GraphSpec("PreferentialAttachment", n, m_attach=m, seed=3))
    a = g.adjacency_matrix()
    assert (a == a.T).all()
    # seed clique of m+1 nodes, then m reciprocal links per newcomer
    assert g.n_edges == (m + 1) * m + 2 * m * (n - m - 1)
    assert is_strongly_connected(g)


@pytest.mark.parametrize("kwargs", [
    dict(family="ER", n=5, p_edge=1.5),
    dict(family="ER", n=5),
    dict(family="ER", n=5, p_edge=0.5, k=2),
    dict(family="KOut", n=5, k=5),
    dict(family="DirectedGeometric", n=5, radius=0.0),
    dict(family="Lattice", n=5),
    dict(family="ER", n=0, p_edge=0.5),
])
def test_invalid_specs(kwargs):
    with pytest.raises(InvalidSpec):
        generate(GraphSpec(**kwargs))


def test_strongly_connected_first_draw():
    g, used = generate_strongly_connected(GraphSpec("ER", 5, p_edge=1.0, seed=9), max_attempts=1)
    assert used == 9 and g.n_edges == 20
    g, used = generate_strongly_connected(GraphSpec("KOut", 10, k=9, seed=0), max_attempts=1)
    assert used == 0


def test_strongly_connected_gives_up():
    with pytest.raises(ConnectivityFailure):
        generate_strongly_connected(GraphSpec("ER", 5, p_edge=0.0), max_attempts=3)


def test_strongly_connected_retries_report_seed():
    spec = GraphSpec("DirectedGeometric", 15, radius=0.35, seed=100)
    g, used = generate_strongly_connected(spec, max_attempts=10_000)
    assert used >= 100 and is_strongly_connected(g)
    assert generate(spec.with_seed(used)).edges == g.edges


def test_connectivity_examples():
    assert is_strongly_connected(CYCLE3)
    assert not is_strongly_connected(DirectedGraph.from_edges(3, [(0, 1), (1, 2)]))
    assert is_strongly_connected(DirectedGraph(1, ((),)))


def test_hop_distance_examples():
    assert hop_distances(CYCLE3, 0) == [0, 1, 2]
    assert hop_distances(complete(4), 1) == [1, 0, 1, 1]
    path = DirectedGraph.from_edges(3, [(0, 1), (1, 2)])
    d = hop_distances(path, 1)
    assert d[0] is UNREACHABLE and d[1:] == [0, 1]
    with pytest.raises(TypeError):
        d[0] + 1


@settings(max_examples=60, deadline=None)
@given(digraphs())
def test_distances_match_floyd_warshall(g):
    fw = oracles.floyd_warshall(g.adjacency_matrix())
    ours = distance_matrix(g).astype(float)
    ours[ours < 0] = np.inf
    assert (ours == fw).all()
    assert is_strongly_connected(g) == oracles.strongly_connected(g.adjacency_matrix())


@settings(max_examples=40, deadline=None)
@given(digraphs())
def test_reversed_graph_transposes(g):
    assert (g.reversed().adjacency_matrix() == g.adjacency_matrix().T).all()
    assert (g.in_degree() == g.reversed().out_degree()).all()


def test_edge_list_round_trip(tmp_path):
    g = generate(GraphSpec("KOut", 15, k=3, seed=1))
    path = tmp_path / "g.txt"
    write_edge_list(g, path, header=["kout"])
    assert b"\r" not in path.read_bytes()
    back, stats = read_edge_list(path)
    assert back.edges == g.edges
    assert stats.self_loops_dropped == 0 and stats.duplicates_dropped == 0


def test_edge_list_cleanup_and_remap(tmp_path):
    path = tmp_path / "snap.txt"
    path.write_text("# comment\n10 20\n20 10\n20 20\n10 20\n30 10\n")
    g, stats = read_edge_list(path)
    assert stats.self_loops_dropped == 1 and stats.duplicates_dropped == 1
    assert stats.id_map == {10: 0, 20: 1, 30: 2}
    assert g.edges == [(0, 1), (1, 0), (2, 0)]


def test_edge_list_errors(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n")
    with pytest.raises(EmptyGraph):
        read_edge_list(empty)
    bad = tmp_path / "bad.txt"
    bad.write_text("1 x\n")
    with pytest.raises(ParseError):
        read_edge_list(bad)


def test_graph_rejects_malformed_adjacency():
    with pytest.raises(InvalidSpec):
        DirectedGraph(2, ((1, 1), ()))
    with pytest.raises(InvalidSpec):
        DirectedGraph.from_edges(2, [(0, 0)])
    with pytest.raises(InvalidSpec):
        DirectedGraph.from_edges(2, [(0, 2)])
