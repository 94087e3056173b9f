import itertools
import random

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import digraph, random_digraph
from swapforge.graph import (
    Arc,
    Asset,
    Digraph,
    GraphError,
    feedback_vertex_set,
    is_acyclic,
    is_strongly_connected,
    max_path_length,
    solution_subgraph,
    subgraph_of_arcs,
    to_undirected,
)


def as_nx(g: Digraph) -> nx.DiGraph:
    h = nx.DiGraph()
    h.add_nodes_from(g.vertices)
    h.add_edges_from((a.src, a.dst) for a in g.arcs)
    return h


def longest_simple_path_vertices(h) -> int:
    best = 1 if h.number_of_nodes() else 0
    nodes = sorted(h.nodes)
    for u, v in itertools.permutations(nodes, 2):
        for p in nx.all_simple_paths(h, u, v):
            best = max(best, len(p))
    return best


FLOWER = digraph(
    ("AB", "A", "B"), ("BC", "B", "C"), ("CA", "C", "A"),
    ("AD", "A", "D"), ("DE", "D", "E"), ("EA", "E", "A"),
    ("AF", "A", "F"), ("FG", "F", "G"), ("GA", "G", "A"),
)


def test_flower_longest_path_is_five():
    assert max_path_length(FLOWER) == 5
    assert len(FLOWER.vertices) == 7


def test_triangle_basics():
    g = digraph(("ac", "Alice", "Carol"), ("cb", "Carol", "Bob"), ("ba", "Bob", "Alice"))
    assert is_strongly_connected(g)
    assert not is_acyclic(g)
    assert max_path_length(g) == 3
    assert feedback_vertex_set(g) == {"Alice"}
    assert max_path_length(to_undirected(g)) == 3


def test_self_loop_rejected():
    with pytest.raises(GraphError):
        Arc("x", "A", "A")


def test_dangling_endpoint_rejected():
    with pytest.raises(GraphError, match="outside"):
        Digraph(frozenset({"A"}), frozenset({Arc("ab", "A", "B")}))


def test_duplicate_arc_ids_rejected():
    with pytest.raises(GraphError, match="duplicate"):
        Digraph.from_arcs([Arc("x", "A", "B", "t1"), Arc("x", "B", "A", "t2")])


def test_duplicate_triple_rejected():
    with pytest.raises(GraphError):
        Digraph.from_arcs([Arc("x", "A", "B", "t"), Arc("y", "A", "B", "t")])


def test_negative_asset_amount_rejected():
    with pytest.raises(GraphError):
        Asset("t", "A", -1)


def test_solution_subgraph_and_missing_arcs():
    g = digraph(("ab", "A", "B"), ("ba", "B", "A"), ("bc", "B", "C"), ("cb", "C", "B"))
    sub = solution_subgraph(g, {"ab": True, "ba": True, "bc": False, "cb": False})
    assert {a.id for a in sub.arcs} == {"ab", "ba"}
    assert sub.vertices == {"A", "B"}
    with pytest.raises(GraphError):
        solution_subgraph(g, {"ab": True})
    assert subgraph_of_arcs(g, ["bc", "cb"]).vertices == {"B", "C"}


def test_to_undirected_merges_opposite_arcs():
    g = digraph(("ab", "A", "B"), ("ba", "B", "A"))
    u = to_undirected(g)
    assert len(u.edges) == 1
    assert to_undirected(u) == u


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(1, 14), st.integers(0, 10_000))
def test_connectivity_and_acyclicity_match_networkx(n, m, seed):
    g = random_digraph(random.Random(seed), n, m)
    h = as_nx(g)
    assert is_strongly_connected(g) == nx.is_strongly_connected(h)
    assert is_acyclic(g) == nx.is_directed_acyclic_graph(h)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(1, 14), st.integers(0, 10_000))
def test_longest_path_matches_exhaustive_search(n, m, seed):
    g = random_digraph(random.Random(seed), n, m)
    assert max_path_length(g) == longest_simple_path_vertices(as_nx(g))
    assert max_path_length(to_undirected(g)) == longest_simple_path_vertices(as_nx(g).to_undirected())


def minimum_fvs_size(h: nx.DiGraph) -> int:
    nodes = sorted(h.nodes)
    for k in range(len(nodes) + 1):
        for sub in itertools.combinations(nodes, k):
            rest = h.copy()
            rest.remove_nodes_from(sub)
            if nx.is_directed_acyclic_graph(rest):
                return k
    return len(nodes)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(1, 16), st.integers(0, 10_000))
def test_exact_fvs_is_minimum(n, m, seed):
    g = random_digraph(random.Random(seed), n, m)
    fvs = feedback_vertex_set(g)
    rest = as_nx(g)
    rest.remove_nodes_from(fvs)
    assert nx.is_directed_acyclic_graph(rest)
    assert len(fvs) == minimum_fvs_size(as_nx(g))


def test_large_graph_fvs_is_a_feedback_set():
    rng = random.Random(5)
    g = random_digraph(rng, 16, 60)
    fvs = feedback_vertex_set(g)
    rest = as_nx(g)
    rest.remove_nodes_from(fvs)
    assert nx.is_directed_acyclic_graph(rest)
    # reverse-delete leaves a minimal set: no member can be dropped
    for v in fvs:
        again = as_nx(g)
        again.remove_nodes_from(fvs - {v})
        assert not nx.is_directed_acyclic_graph(again)
