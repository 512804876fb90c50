from __future__ import annotations

import itertools

import pytest
from hypothesis import given, strategies as st

from fpplab.lattice import (
    Box,
    EdgeId,
    LatticeError,
    LatticePath,
    edge_count,
    edge_from_index,
    edge_index,
    iter_edges,
    neighbors,
)


def brute_edges(radius: int, d: int) -> set[frozenset]:
    box = Box(radius, d)
    out = set()
    for s in box.sites():
        for axis in range(d):
            t = list(s)
            t[axis] += 1
            if box.contains(t):
                out.add(frozenset((s, tuple(t))))
    return out


def test_interior_neighbors():
    got = [s for s, _ in neighbors((0, 0), Box(1, 2))]
    assert sorted(got) == sorted([(-1, 0), (1, 0), (0, -1), (0, 1)])


def test_corner_neighbors():
    got = [s for s, _ in neighbors((1, 1), Box(1, 2))]
    assert sorted(got) == [(0, 1), (1, 0)]


def test_three_dimensional_degree():
    assert len(neighbors((0, 0, 0), Box(2, 3))) == 6


def test_neighbor_outside_box_is_error():
    with pytest.raises(LatticeError):
        neighbors((2, 0), Box(1, 2))


@pytest.mark.parametrize("radius,d", [(1, 2), (2, 2), (3, 2), (1, 3), (2, 3)])
def test_edge_count_matches_enumeration(radius, d):
    assert edge_count(radius, d) == len(brute_edges(radius, d)) == Box(radius, d).num_edges


def test_small_box_has_twelve_edges():
    box = Box(1, 2)
    assert box.num_edges == 12
    assert sorted(edge_index(e, box) for e in iter_edges(box)) == list(range(12))


def test_edge_outside_box_is_error():
    with pytest.raises(LatticeError):
        edge_index(EdgeId.between((1, 0), (2, 0)), Box(1, 2))


@given(st.integers(1, 4), st.sampled_from([2, 3]), st.data())
def test_edge_index_round_trip(radius, d, data):
    box = Box(radius, d)
    i = data.draw(st.integers(0, box.num_edges - 1))
    e = edge_from_index(i, box)
    assert box.contains_edge(e)
    assert edge_index(e, box) == i


@given(st.integers(1, 3), st.data())
def test_edge_is_symmetric(radius, data):
    box = Box(radius, 2)
    s = data.draw(st.sampled_from(list(box.sites())))
    for t, e in neighbors(s, box):
        assert EdgeId.between(s, t) == EdgeId.between(t, s) == e


def test_site_index_round_trip():
    box = Box(2, 3)
    assert [box.site_index(box.site_at(i)) for i in range(box.num_sites)] == list(range(box.num_sites))


def test_path_validation():
    p = LatticePath.from_sites([(0, 0), (1, 0), (1, 1)])
    assert len(p) == 2 and p.end == (1, 1) and p.max_norm() == 1
    with pytest.raises(LatticeError):
        LatticePath.from_sites([(0, 0), (2, 0)])
    with pytest.raises(LatticeError):
        LatticePath.from_sites([(0, 0), (1, 0), (0, 0)])


def test_topology_centre_rank_orders_last_coordinate_first():
    box = Box(1, 2)
    topo = box.topology()
    edges = [edge_from_index(i, box) for i in range(box.num_edges)]
    by_rank = [e for _, e in sorted(zip(topo.center_rank, edges))]
    keys = [tuple(reversed(e.center)) for e in by_rank]
    assert keys == sorted(keys)
    assert all(a != b for a, b in itertools.pairwise(keys))
