import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loopsoup.graph import (GraphError, TorusSpec, WeightedGraph, build_grid, build_torus, complete_graph, cut_along,
                            cycle_graph, edge_graph_distance, glue, load_graph, save_graph, vertex_distances)


@st.composite
def connected_graphs(draw, max_n=7):
    """Random connected simple graphs: a random spanning tree plus extra edges."""
    n = draw(st.integers(2, max_n))
    edges = set()
    for v in range(1, n):
        u = draw(st.integers(0, v - 1))
        edges.add((u, v))
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=2 * n))
    for u, v in extra:
        if u != v and (u, v) not in edges and (v, u) not in edges:
            edges.add((u, v))
    edges = sorted(edges)
    weights = draw(st.lists(st.floats(0.01, 0.3), min_size=len(edges), max_size=len(edges)))
    return WeightedGraph(n, tuple(edges), np.array(weights))


def test_rejects_self_loop_and_parallel_edges():
    with pytest.raises(GraphError):
        WeightedGraph(2, ((0, 0),), np.array([0.1]))
    with pytest.raises(GraphError):
        WeightedGraph(2, ((0, 1), (1, 0)), np.array([0.1, 0.1]))


def test_rejects_negative_weight_and_disconnected():
    with pytest.raises(GraphError):
        WeightedGraph(2, ((0, 1),), np.array([-0.1]))
    with pytest.raises(GraphError):
        WeightedGraph(4, ((0, 1), (2, 3)), np.array([0.1, 0.1]))


def test_zero_weight_is_allowed():
    g = WeightedGraph(3, ((0, 1), (1, 2), (0, 2)), np.array([0.0, 0.1, 0.1]))
    assert g.n_edges == 3


@pytest.mark.parametrize("d,n", [(1, 3), (2, 3), (2, 4), (3, 3)])
def test_torus_counts(d, n):
    g = build_torus(TorusSpec.homogeneous(d, n, 0.1))
    assert g.n_vertices == n**d
    assert g.n_edges == d * n**d
    assert np.all(g.degrees == 2 * d)


def test_torus_rejects_small_n():
    with pytest.raises((GraphError, ValueError)):
        TorusSpec.homogeneous(2, 2, 0.1)


def test_grid_counts():
    g = build_grid(5, 4, 0.1)
    assert g.n_vertices == 20
    assert g.n_edges == 4 * 4 + 5 * 3


def test_directed_edge_convention(k4):
    tails, heads = k4.tails, k4.heads
    for k, (u, v) in enumerate(k4.edges):
        assert (tails[2 * k], heads[2 * k]) == (u, v)
        assert (tails[2 * k + 1], heads[2 * k + 1]) == (v, u)
        assert k4.directed_index(u, v) == 2 * k


@given(connected_graphs())
def test_json_round_trip(tmp_path_factory, g):
    path = tmp_path_factory.mktemp("g") / "g.json"
    save_graph(g, path)
    h = load_graph(path)
    assert h.n_vertices == g.n_vertices
    assert h.edges == g.edges
    np.testing.assert_array_equal(h.weights, g.weights)


def test_load_accepts_vertex_count(tmp_path):
    path = tmp_path / "k3.json"
    path.write_text('{"vertices": 3, "edges": [[0, 1, 0.2], [1, 2, 0.2], [0, 2, 0.2]]}')
    g = load_graph(path)
    assert g.n_vertices == 3 and g.n_edges == 3


@given(connected_graphs(), st.data())
def test_cut_then_glue_is_identity(g, data):
    H = data.draw(st.sets(st.integers(0, g.n_edges - 1), max_size=g.n_edges))
    cg = cut_along(g, H)
    assert cg.graph.n_edges == g.n_edges + len(H)
    halves = {a for _, a, _ in cg.half_edges} | {b for _, _, b in cg.half_edges}
    assert halves <= cg.graph.boundary
    assert len(cg.graph.boundary) == 2 * len(H) + len(g.boundary - H)
    back = glue(cg)
    assert back.edges == g.edges
    np.testing.assert_array_equal(back.weights, g.weights)


def test_cut_rejects_foreign_edges(k4):
    with pytest.raises(GraphError):
        cut_along(k4, [17])


def test_vertex_distances_against_networkx():
    g = build_torus(TorusSpec.homogeneous(2, 5, 0.1))
    ref = nx.Graph(list(g.edges))
    for s in (0, 7, 24):
        want = nx.single_source_shortest_path_length(ref, s)
        got = vertex_distances(g, s)
        assert all(got[v] == want[v] for v in range(g.n_vertices))


def test_edge_distance_examples():
    g = cycle_graph(6, 0.1)
    assert edge_graph_distance(g, 0, 0) == 0
    assert edge_graph_distance(g, 0, 1) == 1  # share a vertex
    assert edge_graph_distance(g, 0, 3) == 3


@given(connected_graphs(), st.data())
def test_edge_distance_symmetric_and_triangle(g, data):
    e, f, h = (data.draw(st.integers(0, g.n_edges - 1)) for _ in range(3))
    assert edge_graph_distance(g, e, f) == edge_graph_distance(g, f, e)
    assert edge_graph_distance(g, e, h) <= edge_graph_distance(g, e, f) + edge_graph_distance(g, f, h)


def test_complete_graph_shape():
    g = complete_graph(5, 0.1)
    assert g.n_edges == 10
    assert np.all(g.degrees == 4)
