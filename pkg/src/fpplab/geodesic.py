"""Minimal passage times and canonical geodesics inside a box.

Distances come from scipy's Dijkstra, which stores ``dist[v] = dist[u] + w``
as a float sum.  An arc ``u -> v`` is *tight* when that equality holds
exactly.  The minimal paths from ``src`` to ``dst`` are exactly the directed
paths of tight arcs that end at ``dst``, so geodesic membership and the
canonical walk never compare floats with a tolerance, and the reported time
is bit-identical to the left-to-right sum of the path's weights.

The canonical walk applies the tie rule to the next edge at every step: among
the tight arcs leaving the current site that can still reach ``dst``, take the
edge whose centre is smallest, comparing the last coordinate first.  In d=2
that is "lowest y, then lowest x".
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, dijkstra

from .lattice import Box, EdgeId, LatticePath, Site, Topology, edge_index
from .passage import WeightField, truncate_field


class SolverError(ValueError):
    """Weights or endpoints violate the solver's preconditions."""


@dataclass(frozen=True)
class GeodesicResult:
    time: float
    path: LatticePath
    edge_count: int
    box_radius: int
    max_norm: int
    tie_events: int

    @property
    def touches_boundary(self) -> bool:
        """True when the path reaches the face of the solver box."""
        return self.max_norm >= self.box_radius

    def contained_in(self, radius: int) -> bool:
        return self.max_norm <= radius


@lru_cache(maxsize=16)
def _csr_layout(radius: int, d: int, reverse: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """CSR arrays for the symmetric box graph; data is gathered from weights[edge_of]."""
    topo = Box(radius, d).topology()
    slots = topo.incident_edge[:, ::-1] if reverse else topo.incident_edge
    nbrs = topo.incident_site[:, ::-1] if reverse else topo.incident_site
    mask = slots >= 0
    indptr = np.concatenate(([0], np.cumsum(mask.sum(axis=1)))).astype(np.int32)
    indices = nbrs[mask].astype(np.int32)
    edge_of = slots[mask]
    for a in (indptr, indices, edge_of):
        a.setflags(write=False)
    return indptr, indices, edge_of


def _graph(w: WeightField, reverse: bool = False) -> sp.csr_matrix:
    box = w.box
    indptr, indices, edge_of = _csr_layout(box.radius, box.d, reverse)
    n = box.num_sites
    return sp.csr_matrix((w.weights[edge_of], indices, indptr), shape=(n, n))


def _check_weights(w: WeightField, strict: bool) -> None:
    if not np.all(np.isfinite(w.weights)):
        raise SolverError("weights must be finite")
    lo = w.weights.min()
    if lo < 0 or (strict and lo == 0):
        raise SolverError(f"precondition failed: minimum weight {lo!r} is "
                          f"{'not positive' if strict else 'negative'}")


def shortest_time_field(w: WeightField, src: Sequence[int], reverse: bool = False) -> np.ndarray:
    """Minimal passage time from ``src`` to every site, indexed by site index."""
    _check_weights(w, strict=False)
    s = w.box.site_index(src)
    return dijkstra(_graph(w, reverse), directed=True, indices=s)


def _staircase_cost(w: WeightField, src: Site, dst: Site) -> float:
    """Left-to-right cost of the path that fixes coordinates 0, 1, ... in turn."""
    box = w.box
    cur = list(src)
    total = 0.0
    for axis in range(box.d):
        step = 1 if dst[axis] > cur[axis] else -1
        while cur[axis] != dst[axis]:
            nxt = list(cur)
            nxt[axis] += step
            total += w.weights[edge_index(EdgeId.between(cur, nxt), box)]
            cur = nxt
    return total


class GeodesicSolve:
    """One point-to-point solve: distance field, tight arcs, co-reachability."""

    def __init__(self, w: WeightField, src: Sequence[int], dst: Sequence[int],
                 reverse: bool = False) -> None:
        _check_weights(w, strict=True)
        box = w.box
        self.field = w
        self.reverse = reverse
        self.src = tuple(int(c) for c in src)
        self.dst = tuple(int(c) for c in dst)
        self.topo: Topology = box.topology()
        self.src_index = box.site_index(self.src)
        self.dst_index = box.site_index(self.dst)
        bound = _staircase_cost(w, self.src, self.dst)
        limit = bound * (1 + 1e-9) + 1e-300
        self.dist = dijkstra(_graph(w, reverse), directed=True, indices=self.src_index,
                             limit=limit)
        self.time = float(self.dist[self.dst_index])
        if not math.isfinite(self.time) or self.time > bound:
            raise SolverError("destination not reached")  # pragma: no cover

        topo, dist, wt = self.topo, self.dist, w.weights
        db, dh = dist[topo.edge_base], dist[topo.edge_head]
        T = self.time
        self.tight_up = (dh <= T) & (db + wt == dh)  # base -> head
        self.tight_down = (db <= T) & (dh + wt == db)  # head -> base
        tail = np.concatenate((topo.edge_base[self.tight_up], topo.edge_head[self.tight_down]))
        head = np.concatenate((topo.edge_head[self.tight_up], topo.edge_base[self.tight_down]))
        n = box.num_sites
        rev = sp.csr_matrix((np.ones(tail.shape[0], dtype=np.int8), (head, tail)), shape=(n, n))
        reach = breadth_first_order(rev, self.dst_index, directed=True,
                                    return_predecessors=False)
        self.coreach = np.zeros(n, dtype=bool)
        self.coreach[reach] = True

    def on_geodesic_index(self, i: int) -> bool:
        topo = self.topo
        return bool((self.tight_up[i] and self.coreach[topo.edge_head[i]])
                    or (self.tight_down[i] and self.coreach[topo.edge_base[i]]))

    def on_geodesic(self, e: EdgeId) -> bool:
        return self.on_geodesic_index(edge_index(e, self.field.box))

    def geodesic_edge_mask(self) -> np.ndarray:
        topo = self.topo
        return ((self.tight_up & self.coreach[topo.edge_head])
                | (self.tight_down & self.coreach[topo.edge_base]))

    def canonical(self) -> GeodesicResult:
        topo, dist, wt = self.topo, self.dist, self.field.weights
        slots = range(2 * topo.d - 1, -1, -1) if self.reverse else range(2 * topo.d)
        u = self.src_index
        visited = {u}
        site_seq = [u]
        edge_seq = []
        ties = 0
        while u != self.dst_index:
            best = None
            count = 0
            for slot in slots:
                e = topo.incident_edge[u, slot]
                if e < 0:
                    continue
                v = topo.incident_site[u, slot]
                if v in visited or not self.coreach[v] or dist[u] + wt[e] != dist[v]:
                    continue
                count += 1
                if best is None or topo.center_rank[e] < topo.center_rank[best[0]]:
                    best = (e, v)
            if best is None:
                raise SolverError("canonical walk stalled")  # pragma: no cover
            ties += count > 1
            e, u = best
            visited.add(u)
            site_seq.append(u)
            edge_seq.append(e)

        total = 0.0
        for e in edge_seq:
            total += wt[e]
        if total != self.time:
            raise SolverError("path sum disagrees with distance field")  # pragma: no cover
        coords = topo.coords
        sites = tuple(tuple(int(c) for c in coords[i]) for i in site_seq)
        path = LatticePath.from_sites(sites)
        max_norm = int(np.abs(coords[site_seq]).max())
        return GeodesicResult(self.time, path, len(edge_seq), self.field.box.radius,
                              max_norm, ties)


def canonical_geodesic(w: WeightField, src: Sequence[int], dst: Sequence[int],
                       reverse: bool = False) -> GeodesicResult:
    return GeodesicSolve(w, src, dst, reverse).canonical()


def on_some_geodesic(w: WeightField, src: Sequence[int], dst: Sequence[int], e: EdgeId) -> bool:
    return GeodesicSolve(w, src, dst).on_geodesic(e)


def solve_truncated(w: WeightField, n: int, alpha: float, src: Sequence[int],
                    dst: Sequence[int]) -> GeodesicResult:
    return canonical_geodesic(truncate_field(w, n, alpha), src, dst)


def point_to_point_time(w: WeightField, src: Sequence[int], dst: Sequence[int]) -> float:
    return GeodesicSolve(w, src, dst).time
