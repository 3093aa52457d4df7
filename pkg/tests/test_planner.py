import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dijkstra_grid
from semexplore.planner import (FAILED, FREE, OCCUPIED, REACHED, UNKNOWN, UNREACHABLE, Blacklist,
                                astar, blacklist_update, classify_cells, detect_frontiers,
                                frontier_goal, traversable)
from semexplore.semgrid import new_grid


def set_probs(grid, r, c, p):
    p = np.asarray(p, float)
    grid.logodds[r, c] = np.log(p / p[0])


def test_classify_examples():
    g = new_grid(3, 1, 0.25, 3)
    set_probs(g, 0, 1, [0.95, 0.05 / 3, 0.05 / 3, 0.05 / 3])
    set_probs(g, 0, 2, [0.1, 0.05, 0.05, 0.8])
    assert classify_cells(g).tolist() == [[UNKNOWN, FREE, OCCUPIED]]
    set_probs(g, 0, 2, [0.5, 0.5, 1e-9, 1e-9])
    assert classify_cells(g)[0, 2] == UNKNOWN  # exactly at the occupied threshold


def test_fully_known_map_has_no_frontiers():
    labels = np.full((8, 8), FREE, dtype=np.int8)
    labels[0], labels[-1], labels[:, 0], labels[:, -1] = OCCUPIED, OCCUPIED, OCCUPIED, OCCUPIED
    assert detect_frontiers(labels) == []


def test_half_explored_corridor_has_one_frontier():
    labels = np.full((3, 10), OCCUPIED, dtype=np.int8)
    labels[1, :5] = FREE
    labels[1, 5:] = UNKNOWN
    fr = detect_frontiers(labels, min_frontier_size=1)
    assert len(fr) == 1 and fr[0].cells == [(1, 4)]
    # wide corridor: the boundary column is the single frontier
    labels = np.full((5, 10), OCCUPIED, dtype=np.int8)
    labels[1:4, :5] = FREE
    labels[1:4, 5:] = UNKNOWN
    fr = detect_frontiers(labels, min_frontier_size=3, resolution=0.25)
    assert len(fr) == 1
    assert fr[0].cells == [(1, 4), (2, 4), (3, 4)]
    assert fr[0].centroid == pytest.approx((4.5 * 0.25, 2.5 * 0.25))


def two_rooms():
    labels = np.full((12, 21), OCCUPIED, dtype=np.int8)
    labels[1:6, 1:20] = FREE  # hallway, fully known
    labels[7:11, 1:10] = UNKNOWN  # room A
    labels[7:11, 11:20] = UNKNOWN  # room B
    labels[6, 3:6] = FREE  # doorway A
    labels[6, 14:17] = FREE  # doorway B
    return labels


def test_two_rooms_two_frontiers():
    fr = detect_frontiers(two_rooms())
    assert len(fr) == 2
    assert sorted(f.cells[0] for f in fr) == [(6, 3), (6, 14)]
    assert [f.index for f in fr] == [0, 1]


def test_min_frontier_size_filters():
    labels = two_rooms()
    labels[6, 15:17] = OCCUPIED
    fr = detect_frontiers(labels, min_frontier_size=3)
    assert len(fr) == 1 and fr[0].cells[0] == (6, 3)


def test_frontier_ordering_by_size_then_first_cell():
    labels = two_rooms()
    labels[6, 13] = FREE  # doorway B now has 4 cells
    fr = detect_frontiers(labels)
    assert fr[0].cells[0] == (6, 13) and fr[1].cells[0] == (6, 3)


random_labels = st.integers(0, 2 ** 31).map(
    lambda s: np.random.default_rng(s).choice([FREE, OCCUPIED, UNKNOWN], size=(20, 20), p=[0.6, 0.2, 0.2]).astype(np.int8))


@settings(max_examples=60, deadline=None)
@given(random_labels)
def test_frontier_cells_are_free_and_border_unknown(labels):
    H, W = labels.shape
    for f in detect_frontiers(labels, min_frontier_size=1):
        assert f.size >= 1
        for r, c in f.cells:
            assert labels[r, c] == FREE
            nb = labels[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2]
            assert (nb == UNKNOWN).any()
    assert [f.cells for f in detect_frontiers(labels)] == [f.cells for f in detect_frontiers(labels.copy())]


def corridor(n=10):
    labels = np.full((3, n), OCCUPIED, dtype=np.int8)
    labels[1] = FREE
    return labels


def test_astar_examples():
    p = astar(corridor(), (1, 0), (1, 9), clearance=0, resolution=0.25)
    assert p.length == pytest.approx(2.25, abs=1e-12)
    assert len(p.cells) == 10
    z = astar(corridor(), (1, 3), (1, 3), clearance=0, resolution=0.25)
    assert z.length == 0.0 and z.cells == [(1, 3)]
    sealed = corridor()
    sealed[1, 6] = OCCUPIED
    assert astar(sealed, (1, 0), (1, 9), clearance=0) is None
    unknown = corridor()
    unknown[1, 6] = UNKNOWN
    assert astar(unknown, (1, 0), (1, 9), clearance=0) is None


def test_path_length_is_sum_of_segments():
    labels = np.full((20, 20), FREE, dtype=np.int8)
    labels[5:15, 10] = OCCUPIED
    p = astar(labels, (10, 2), (10, 17), clearance=0, resolution=0.25)
    w = np.asarray(p.waypoints)
    assert p.length == pytest.approx(np.hypot(*np.diff(w, axis=0).T).sum(), abs=1e-9)


def test_clearance_inflates_obstacles():
    labels = np.full((7, 7), FREE, dtype=np.int8)
    labels[3, 3] = OCCUPIED
    passable = traversable(labels, clearance=1)
    assert not passable[2:5, 2:5].any() and passable[1, 1]
    assert traversable(labels, clearance=0).sum() == 48


@settings(max_examples=60, deadline=None)
@given(random_labels, st.data())
def test_astar_is_optimal(labels, data):
    free = list(zip(*np.nonzero(labels == FREE)))
    if len(free) < 2:
        return
    start = free[data.draw(st.integers(0, len(free) - 1))]
    goal = free[data.draw(st.integers(0, len(free) - 1))]
    p = astar(labels, start, goal, clearance=0)
    best = dijkstra_grid(labels == FREE, start, goal)
    if math.isinf(best):
        assert p is None
    else:
        assert p.length == pytest.approx(best, abs=1e-9)
        assert p.cells[0] == start and p.cells[-1] == goal
        assert p.cells == astar(labels, start, goal, clearance=0).cells  # deterministic


def test_frontier_goal_snaps_to_passable_cell():
    labels = two_rooms()
    fr = detect_frontiers(labels)
    passable = traversable(labels, clearance=0)
    for f in fr:
        g = frontier_goal(f, passable, 1.0)
        assert g in f.cells
        assert g[1] == f.cells[1][1]  # the middle cell of a 3-cell doorway


def test_blacklist():
    bl = Blacklist(merge_radius=0.5)
    assert not bl.contains((1.0, 1.0))
    blacklist_update(bl, (1.0, 1.0), REACHED)
    assert len(bl) == 0
    blacklist_update(bl, (1.0, 1.0), UNREACHABLE)
    blacklist_update(bl, (3.0, 1.0), FAILED)
    assert bl.contains((1.4, 1.2)) and bl.contains((3.0, 1.5))
    assert not bl.contains((2.0, 1.0))
    expiring = Blacklist(0.5, expire_after=3)
    blacklist_update(expiring, (0.0, 0.0), FAILED, replan=1)
    assert expiring.contains((0.0, 0.0), replan=3)
    assert not expiring.contains((0.0, 0.0), replan=4)
