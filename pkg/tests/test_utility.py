import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semexplore.planner import FREE, OCCUPIED, PlannedPath
from semexplore.posegraph import PoseGraph, graph_d_opt
from semexplore.utility import (PathCandidate, alpha, hallucinate_graph, segment_is_free,
                                select_action, shannon_renyi_printed, shannon_renyi_utility)

I3 = np.eye(3)


def straight_graph(n, spacing=0.5):
    g = PoseGraph()
    for k in range(n):
        g.add_node((k * spacing, 0.0, 0.0))
        if k:
            g.add_odometry_edge(k - 1, k, (spacing, 0.0, 0.0), I3)
    return g


def polyline(points):
    pts = [tuple(map(float, p)) for p in points]
    length = sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:]))
    return PlannedPath([], pts, length)


def test_zero_length_path_leaves_graph_unchanged():
    g = straight_graph(3)
    h = hallucinate_graph(g, polyline([(1.0, 0.0)]), I3)
    assert h.nodes == g.nodes and len(h.edges) == len(g.edges)


def test_straight_two_metre_path():
    g = PoseGraph()
    g.add_node((0.0, 0.0, 0.0))
    h = hallucinate_graph(g, polyline([(0.0, 0.0), (2.0, 0.0)]), I3, node_spacing=0.5)
    assert len(h.nodes) == 5 and len(h.edges) == 4
    assert not h.loop_edges
    assert [p.x for p in h.nodes] == pytest.approx([0, 0.5, 1.0, 1.5, 2.0])
    assert len(g.nodes) == 1 and not g.edges  # input untouched


def test_returning_path_predicts_loop_edge():
    g = straight_graph(12)  # 0 .. 5.5 m along x
    path = polyline([(5.5, 0.0), (5.5, 2.0), (0.0, 2.0), (0.0, 0.5)])
    labels = np.full((16, 30), FREE, dtype=np.int8)
    h = hallucinate_graph(g, path, I3, loop_radius=1.0, loop_info=2 * I3, labels=labels,
                          resolution=0.25, min_separation=10)
    assert len(h.loop_edges) >= 1
    e = h.loop_edges[0]
    assert e.i < len(g.nodes) <= e.j
    assert np.array_equal(e.information, 2 * I3)
    assert len(g.edges) == 11


def test_predicted_loop_needs_line_of_sight_and_age():
    g = straight_graph(12)
    path = polyline([(5.5, 0.0), (5.5, 2.0), (0.25, 2.0), (0.25, 1.5)])
    labels = np.full((16, 30), FREE, dtype=np.int8)
    labels[2:5, :] = OCCUPIED  # wall between the return leg and the old trajectory
    h = hallucinate_graph(g, path, I3, loop_radius=1.6, labels=labels, resolution=0.25)
    assert not h.loop_edges
    # a short hop near recent nodes is not a loop
    h = hallucinate_graph(g, polyline([(5.5, 0.0), (5.5, 0.5)]), I3, loop_radius=1.0,
                          min_separation=10)
    assert not h.loop_edges


def test_segment_is_free():
    labels = np.full((4, 4), FREE, dtype=np.int8)
    labels[1, 2] = OCCUPIED
    assert segment_is_free(labels, 1.0, (0.5, 0.5), (3.5, 0.5))
    assert not segment_is_free(labels, 1.0, (0.5, 1.5), (3.5, 1.5))
    assert not segment_is_free(labels, 1.0, (0.5, 0.5), (5.5, 0.5))


def test_alpha_examples():
    assert alpha(0.0, 1.0) == 1.0
    assert alpha(2.0, 1.0) == 3.0
    assert alpha(1.0, 0.0) == pytest.approx(1 + 1e9)


def test_utility_examples():
    assert shannon_renyi_utility(2.0, 0.0, 3.0) == 2.0
    assert shannon_renyi_utility(2.0, 1.0, 1.0) == 4.0
    assert shannon_renyi_printed(2.0, 1.0, 1.0) == pytest.approx(4.0, abs=1e-12)
    assert shannon_renyi_utility(2.0, 1.0, 0.0, eps_cost=0.125) == pytest.approx(18.0)
    assert shannon_renyi_utility(2.0, 2.0, 1.0) > shannon_renyi_utility(2.0, 1.0, 1.0)
    assert shannon_renyi_utility(2.0, 1.0, 2.0) < shannon_renyi_utility(2.0, 1.0, 1.0)


# The printed form evaluates 1 - alpha, which cancels with relative error
# about eps * mi / cost; over planner ranges (cost >= res/2, mi <= 50 nats)
# that stays below 1e-13.
@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1e3), st.floats(1e-3, 50.0), st.floats(0.125, 50.0))
def test_printed_and_closed_forms_agree(d, mi, cost):
    a = shannon_renyi_printed(d, mi, cost)
    b = shannon_renyi_utility(d, mi, cost, eps_cost=0.0)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def cand(fid, utility, cost=1.0):
    return PathCandidate(fid, (0, 0), None, cost=cost, utility=utility)


def test_select_action_examples():
    assert select_action([]) is None
    only = cand(0, 1.0)
    assert select_action([only]) is only
    a, b = cand(0, 5.0, cost=5.0), cand(1, 5.0, cost=3.0)
    assert select_action([a, b]) is b
    c, d = cand(4, 5.0, cost=3.0), cand(2, 5.0, cost=3.0)
    assert select_action([c, d]) is d
    assert select_action([cand(0, 1.0), cand(1, 2.0), cand(2, 1.5)]).frontier_id == 1
    # relative near-tie treated as a tie
    e, f = cand(0, 1.0 + 1e-12, cost=2.0), cand(1, 1.0, cost=1.0)
    assert select_action([e, f]) is f


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0.1, 10), st.floats(0, 5), st.floats(0.1, 10)), min_size=1, max_size=8),
       st.floats(1e-3, 1e3))
def test_argmax_invariant_under_common_d_opt_scaling(rows, s):
    def build(scale):
        return [PathCandidate(k, (0, 0), None, mi=mi, cost=c, d_opt=d * scale,
                              utility=shannon_renyi_utility(d * scale, mi, c))
                for k, (d, mi, c) in enumerate(rows)]
    assert select_action(build(1.0)).frontier_id == select_action(build(s)).frontier_id


def test_loop_candidate_wins_at_equal_mi_and_cost():
    g = straight_graph(12)
    labels = np.full((16, 30), FREE, dtype=np.int8)
    kw = dict(loop_radius=1.0, loop_info=2 * I3, labels=labels, resolution=0.25)
    back = hallucinate_graph(g, polyline([(5.5, 0.0), (5.5, 1.0), (0.5, 1.0)]), I3, **kw)
    away = hallucinate_graph(g, polyline([(5.5, 0.0), (5.5, 1.0), (10.5, 1.0)]), I3, **kw)
    assert len(back.nodes) == len(away.nodes)
    assert back.loop_edges and not away.loop_edges
    d_back, d_away = graph_d_opt(back), graph_d_opt(away)
    assert d_back > d_away
    u = [shannon_renyi_utility(d, 0.7, 6.0) for d in (d_back, d_away)]
    pick = select_action([PathCandidate(1, (0, 0), None, cost=6.0, utility=u[0]),
                          PathCandidate(0, (0, 0), None, cost=6.0, utility=u[1])])
    assert pick.frontier_id == 1


def test_disconnected_hallucination_is_rejected():
    g = straight_graph(3)
    g.add_node((5.0, 5.0, 0.0))  # isolated node
    h = hallucinate_graph(g, polyline([(1.0, 0.0), (2.0, 0.0)]), I3)
    assert graph_d_opt(h) == 0.0
    u = shannon_renyi_utility(graph_d_opt(h), 10.0, 1.0)
    assert u == 0.0
    ok = PathCandidate(1, (0, 0), None, cost=5.0, utility=1e-6)
    assert select_action([PathCandidate(0, (0, 0), None, cost=1.0, utility=u), ok]) is ok
