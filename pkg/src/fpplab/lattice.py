"""Geometry of Z^d restricted to boxes: sites, canonical edges, paths.

Sites are plain tuples of ints.  Inside a box ``[-L, L]^d`` every site has a
dense index (mixed radix, first coordinate most significant) and every edge
has a dense index given by sorting edges on ``(base coords, axis)``.  Both
orderings are lexicographic, so ``edge_key = site_index(base) * d + axis`` is
monotone in the canonical edge order and ``edge_index`` is a binary search.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

Site = tuple[int, ...]


class LatticeError(ValueError):
    """A site or edge lies outside the box it is used with."""


@dataclass(frozen=True, order=True)
class EdgeId:
    """Undirected edge ``{base, base + unit(axis)}``; ``base`` is the lower endpoint."""

    base: Site
    axis: int

    def __post_init__(self) -> None:
        if not 0 <= self.axis < len(self.base):
            raise LatticeError(f"axis {self.axis} out of range for d={len(self.base)}")

    @classmethod
    def between(cls, a: Sequence[int], b: Sequence[int]) -> EdgeId:
        diff = [y - x for x, y in zip(a, b)]
        nonzero = [k for k, v in enumerate(diff) if v != 0]
        if len(a) != len(b) or len(nonzero) != 1 or abs(diff[nonzero[0]]) != 1:
            raise LatticeError(f"{tuple(a)} and {tuple(b)} are not lattice neighbours")
        axis = nonzero[0]
        base = tuple(a) if diff[axis] == 1 else tuple(b)
        return cls(tuple(int(c) for c in base), axis)

    @property
    def head(self) -> Site:
        return tuple(c + (k == self.axis) for k, c in enumerate(self.base))

    @property
    def center(self) -> tuple[float, ...]:
        return tuple(c + 0.5 * (k == self.axis) for k, c in enumerate(self.base))

    def endpoints(self) -> tuple[Site, Site]:
        return self.base, self.head


@dataclass(frozen=True)
class Box:
    """The cube ``[-radius, radius]^d``."""

    radius: int
    d: int = 2

    def __post_init__(self) -> None:
        if self.radius < 1:
            raise LatticeError("box radius must be a positive integer")
        if self.d < 2:
            raise LatticeError("dimension must be at least 2")

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def num_sites(self) -> int:
        return self.side**self.d

    @property
    def num_edges(self) -> int:
        return edge_count(self.radius, self.d)

    def contains(self, s: Sequence[int]) -> bool:
        return len(s) == self.d and all(-self.radius <= c <= self.radius for c in s)

    def contains_edge(self, e: EdgeId) -> bool:
        return self.contains(e.base) and e.base[e.axis] < self.radius

    def _check(self, s: Sequence[int]) -> None:
        if not self.contains(s):
            raise LatticeError(f"site {tuple(s)} is not in B_{self.radius} (d={self.d})")

    def site_index(self, s: Sequence[int]) -> int:
        self._check(s)
        idx = 0
        for c in s:
            idx = idx * self.side + (c + self.radius)
        return idx

    def site_at(self, index: int) -> Site:
        if not 0 <= index < self.num_sites:
            raise LatticeError(f"site index {index} out of range")
        coords = []
        for _ in range(self.d):
            index, r = divmod(index, self.side)
            coords.append(r - self.radius)
        return tuple(reversed(coords))

    def sites(self) -> Iterator[Site]:
        for i in range(self.num_sites):
            yield self.site_at(i)

    def topology(self) -> Topology:
        return _topology(self.radius, self.d)


def edge_count(radius: int, d: int) -> int:
    """Number of edges with both endpoints in B_radius: ``d * 2L * (2L+1)^(d-1)``."""
    return d * (2 * radius) * (2 * radius + 1) ** (d - 1)


def axis_site(i: int, d: int) -> Site:
    """The point ``(i, 0, ..., 0)``."""
    return (i,) + (0,) * (d - 1)


def neighbors(s: Sequence[int], box: Box) -> list[tuple[Site, EdgeId]]:
    """Neighbours of ``s`` inside ``box``, by axis ascending, negative step first."""
    box._check(s)
    s = tuple(int(c) for c in s)
    out = []
    for axis in range(box.d):
        for step in (-1, 1):
            t = list(s)
            t[axis] += step
            t = tuple(t)
            if box.contains(t):
                base = t if step < 0 else s
                out.append((t, EdgeId(base, axis)))
    return out


def edge_index(e: EdgeId, box: Box) -> int:
    if len(e.base) != box.d or not box.contains_edge(e):
        raise LatticeError(f"edge {e} is not inside B_{box.radius}")
    topo = box.topology()
    key = box.site_index(e.base) * box.d + e.axis
    return int(np.searchsorted(topo.edge_key, key))


def edge_from_index(i: int, box: Box) -> EdgeId:
    topo = box.topology()
    if not 0 <= i < topo.num_edges:
        raise LatticeError(f"edge index {i} out of range for B_{box.radius}")
    return EdgeId(box.site_at(int(topo.edge_base[i])), int(topo.edge_axis[i]))


def iter_edges(box: Box) -> Iterator[EdgeId]:
    for i in range(box.num_edges):
        yield edge_from_index(i, box)


@dataclass(frozen=True)
class LatticePath:
    sites: tuple[Site, ...]
    edges: tuple[EdgeId, ...]

    def __post_init__(self) -> None:
        if len(self.edges) != max(len(self.sites) - 1, 0):
            raise LatticeError("a path with k+1 sites has k edges")
        for a, b, e in zip(self.sites, self.sites[1:], self.edges):
            if EdgeId.between(a, b) != e:
                raise LatticeError(f"edge {e} does not join {a} and {b}")
        if len(set(self.edges)) != len(self.edges):
            raise LatticeError("paths must not repeat an edge")

    @classmethod
    def from_sites(cls, sites: Sequence[Sequence[int]]) -> LatticePath:
        sites = tuple(tuple(int(c) for c in s) for s in sites)
        return cls(sites, tuple(EdgeId.between(a, b) for a, b in zip(sites, sites[1:])))

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def start(self) -> Site:
        return self.sites[0]

    @property
    def end(self) -> Site:
        return self.sites[-1]

    def max_norm(self) -> int:
        """Largest sup-norm over the path's sites (the smallest L with path in B_L)."""
        return max(max(abs(c) for c in s) for s in self.sites)


@dataclass(frozen=True, eq=False)
class Topology:
    """Array form of a box: edge endpoints, per-site incidence, tie-break ranks."""

    radius: int
    d: int
    coords: np.ndarray  # (N, d) int64
    edge_base: np.ndarray  # (E,) site index of lower endpoint
    edge_head: np.ndarray  # (E,) site index of upper endpoint
    edge_axis: np.ndarray  # (E,)
    edge_key: np.ndarray  # (E,) base_index * d + axis, strictly increasing
    incident_edge: np.ndarray  # (N, 2d) edge index per (axis, direction) slot, -1 if absent
    incident_site: np.ndarray  # (N, 2d) neighbour site index, -1 if absent
    center_rank: np.ndarray  # (E,) rank of the edge centre under the tie-break order

    @property
    def num_sites(self) -> int:
        return self.coords.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_base.shape[0]


@lru_cache(maxsize=16)
def _topology(radius: int, d: int) -> Topology:
    side = 2 * radius + 1
    n_sites = side**d
    idx = np.arange(n_sites, dtype=np.int64)
    coords = np.empty((n_sites, d), dtype=np.int64)
    rem = idx.copy()
    for k in range(d - 1, -1, -1):
        rem, r = np.divmod(rem, side)
        coords[:, k] = r - radius
    strides = side ** np.arange(d - 1, -1, -1, dtype=np.int64)

    bases, heads, axes = [], [], []
    for axis in range(d):
        sel = idx[coords[:, axis] < radius]
        bases.append(sel)
        heads.append(sel + strides[axis])
        axes.append(np.full(sel.shape, axis, dtype=np.int64))
    base = np.concatenate(bases)
    head = np.concatenate(heads)
    axis_arr = np.concatenate(axes)
    key = base * d + axis_arr
    order = np.argsort(key, kind="stable")
    base, head, axis_arr, key = base[order], head[order], axis_arr[order], key[order]
    n_edges = base.shape[0]
    eidx = np.arange(n_edges, dtype=np.int64)

    incident_edge = np.full((n_sites, 2 * d), -1, dtype=np.int64)
    incident_site = np.full((n_sites, 2 * d), -1, dtype=np.int64)
    for axis in range(d):
        m = axis_arr == axis
        # slot 2*axis: step -1 (site is the head), slot 2*axis+1: step +1 (site is the base)
        incident_edge[head[m], 2 * axis] = eidx[m]
        incident_site[head[m], 2 * axis] = base[m]
        incident_edge[base[m], 2 * axis + 1] = eidx[m]
        incident_site[base[m], 2 * axis + 1] = head[m]

    # doubled centre coordinates are integers; compare last coordinate first
    twice_center = 2 * coords[base] + (np.arange(d)[None, :] == axis_arr[:, None])
    rank_order = np.lexsort(tuple(twice_center[:, k] for k in range(d)))
    center_rank = np.empty(n_edges, dtype=np.int64)
    center_rank[rank_order] = eidx

    for a in (coords, base, head, axis_arr, key, incident_edge, incident_site, center_rank):
        a.setflags(write=False)
    return Topology(radius, d, coords, base, head, axis_arr, key, incident_edge,
                    incident_site, center_rank)


def tie_break_key(e: EdgeId) -> tuple[float, ...]:
    """Centre coordinates ordered last-to-first; smaller wins ties."""
    return tuple(reversed(e.center))
