import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import enumerate_spanning_trees
from semexplore.errors import DomainError
from semexplore.spectral import (WeightedGraph, algebraic_connectivity, d_opt_eigen,
                                 d_opt_laplacian, laplacian, log_d_opt_laplacian,
                                 spanning_tree_count)


def complete(n, w=1.0):
    return WeightedGraph(n, [(i, j, w) for i, j in itertools.combinations(range(n), 2)])


def path(n, w=1.0):
    return WeightedGraph(n, [(i, i + 1, w) for i in range(n - 1)])


def test_laplacian_examples():
    assert np.array_equal(laplacian(WeightedGraph(2, [(0, 1, 2.5)])), [[2.5, -2.5], [-2.5, 2.5]])
    L = laplacian(complete(3))
    assert np.array_equal(L, [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])
    assert np.linalg.matrix_rank(laplacian(WeightedGraph(3, [(0, 1, 1.0)]))) == 1


def test_graph_validation():
    with pytest.raises(DomainError):
        WeightedGraph(2, [(0, 0, 1.0)])
    with pytest.raises(DomainError):
        WeightedGraph(2, [(0, 1, 0.0)])
    with pytest.raises(DomainError):
        WeightedGraph(2, [(0, 2, 1.0)])


@pytest.mark.parametrize("graph,count", [(complete(3), 3), (path(4), 1), (complete(4), 16),
                                         (complete(5), 125)])
def test_spanning_tree_examples(graph, count):
    assert enumerate_spanning_trees(graph.n, graph.edges) == count
    for method in ("cofactor", "spectral"):
        assert spanning_tree_count(graph, method).count == pytest.approx(count, rel=1e-12)


def test_disconnected_is_explicit():
    st_ = spanning_tree_count(WeightedGraph(3, [(0, 1, 1.0)]))
    assert not st_.connected and st_.log_count == -math.inf
    assert d_opt_laplacian(WeightedGraph(3, [(0, 1, 1.0)])) == 0.0
    assert algebraic_connectivity(WeightedGraph(3, [(0, 1, 1.0)])) == 0.0


def test_d_opt_examples():
    assert d_opt_laplacian(WeightedGraph(2, [(0, 1, 1.0)])) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert d_opt_laplacian(complete(3)) == pytest.approx(9 ** (1 / 3), abs=1e-12)
    assert d_opt_laplacian(WeightedGraph(1)) == 0.0
    assert log_d_opt_laplacian(complete(3)) == pytest.approx(math.log(9) / 3, abs=1e-12)


def test_d_opt_eigen_examples():
    assert d_opt_eigen([1, 1, 1]) == pytest.approx(1.0)
    assert d_opt_eigen([1, 4]) == pytest.approx(2.0)
    assert d_opt_eigen([1e6, 1e-6]) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        d_opt_eigen([1.0, 0.0])


def test_algebraic_connectivity_examples():
    assert algebraic_connectivity(path(2)) == pytest.approx(2.0)
    assert algebraic_connectivity(complete(3)) == pytest.approx(3.0)
    with pytest.raises(DomainError):
        algebraic_connectivity(WeightedGraph(1))


graphs = st.integers(2, 6).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.integers(1, 3)),
             min_size=n - 1, max_size=12)))


def build(spec):
    n, raw = spec
    return WeightedGraph(n, [(i, j, float(w)) for i, j, w in raw if i != j])


@settings(max_examples=150, deadline=None)
@given(graphs)
def test_kirchhoff_triple_agreement(spec):
    g = build(spec)
    brute = enumerate_spanning_trees(g.n, g.edges)
    a = spanning_tree_count(g, "cofactor")
    b = spanning_tree_count(g, "spectral")
    assert a.connected == b.connected == (brute > 0) == g.is_connected()
    if brute > 0:
        assert a.log_count == pytest.approx(math.log(brute), rel=1e-9, abs=1e-12)
        assert b.log_count == pytest.approx(math.log(brute), rel=1e-9, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(graphs, st.floats(0.01, 100.0))
def test_scaling_law(spec, s):
    g = build(spec)
    if not g.is_connected():
        return
    n = g.n
    base = spanning_tree_count(g).log_count
    scaled = spanning_tree_count(g.scaled(s)).log_count
    assert scaled == pytest.approx(base + (n - 1) * math.log(s), abs=1e-9)
    assert log_d_opt_laplacian(g.scaled(s)) == pytest.approx(
        log_d_opt_laplacian(g) + (n - 1) / n * math.log(s), abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(graphs, st.floats(0.1, 5.0), st.data())
def test_adding_edges_is_monotone(spec, w, data):
    g = build(spec)
    i = data.draw(st.integers(0, g.n - 1))
    j = data.draw(st.integers(0, g.n - 1).filter(lambda v: v != i))
    h = WeightedGraph(g.n, list(g.edges))
    h.add_edge(i, j, w)
    assert spanning_tree_count(h).log_count >= spanning_tree_count(g).log_count - 1e-12
    assert algebraic_connectivity(h) >= algebraic_connectivity(g) - 1e-10
    lam = np.linalg.eigvalsh(laplacian(h))
    assert lam[0] >= -1e-10
    assert np.allclose(laplacian(h).sum(axis=1), 0.0)
