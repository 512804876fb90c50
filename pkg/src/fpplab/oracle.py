"""Brute-force reference: every simple path, and the tie procedure applied literally.

Shares nothing with the Dijkstra solver beyond the box's edge numbering.
Paths are enumerated once per (box, source) by depth-first search over raw
coordinates; each field is then scored by summing weights left to right along
every stored path, which is the same float sequence a path walk produces.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .lattice import Box, Site, edge_from_index
from .passage import WeightField

MAX_SITES = 25


@dataclass(frozen=True, eq=False)
class PathTable:
    box: Box
    src: Site
    sites: list[tuple[Site, ...]]
    edge_matrix: np.ndarray  # (P, maxlen) edge indices, padded with num_edges
    end: np.ndarray  # (P,) site index of the last site


@lru_cache(maxsize=8)
def simple_paths(box: Box, src: Site) -> PathTable:
    """All simple paths (including the empty one) starting at ``src``."""
    if box.num_sites > MAX_SITES:
        raise ValueError("exhaustive enumeration is limited to tiny boxes")
    L, d = box.radius, box.d

    def step(s: Site):
        for k in range(d):
            for delta in (-1, 1):
                t = s[:k] + (s[k] + delta,) + s[k + 1:]
                if -L <= t[k] <= L:
                    yield t

    found: list[tuple[Site, ...]] = []
    seq = [tuple(src)]
    on = {tuple(src)}

    def dfs(s: Site) -> None:
        found.append(tuple(seq))
        for t in step(s):
            if t not in on:
                on.add(t)
                seq.append(t)
                dfs(t)
                seq.pop()
                on.remove(t)

    dfs(tuple(src))
    maxlen = max(len(p) for p in found) - 1
    pad = box.num_edges
    lookup = {}
    for i in range(box.num_edges):
        e = edge_from_index(i, box)
        lookup[e.base, e.head] = lookup[e.head, e.base] = i
    mat = np.full((len(found), maxlen), pad, dtype=np.int64)
    for r, p in enumerate(found):
        mat[r, :len(p) - 1] = [lookup[a, b] for a, b in zip(p, p[1:])]
    end = np.array([box.site_index(p[-1]) for p in found], dtype=np.int64)
    return PathTable(box, tuple(src), found, mat, end)


def path_sums(table: PathTable, w: WeightField) -> np.ndarray:
    wext = np.append(w.weights, 0.0)
    total = np.zeros(table.edge_matrix.shape[0])
    for c in range(table.edge_matrix.shape[1]):
        total = total + wext[table.edge_matrix[:, c]]
    return total


def brute_force_field(w: WeightField, src: Site) -> np.ndarray:
    table = simple_paths(w.box, tuple(src))
    sums = path_sums(table, w)
    best = np.full(w.box.num_sites, np.inf)
    np.minimum.at(best, table.end, sums)
    return best


def minimal_paths(w: WeightField, src: Site, dst: Site) -> tuple[float, list[tuple[Site, ...]]]:
    """Minimal time and every simple path attaining it."""
    table = simple_paths(w.box, tuple(src))
    sums = path_sums(table, w)
    at_dst = table.end == w.box.site_index(dst)
    best = sums[at_dst].min()
    rows = np.flatnonzero(at_dst & (sums == best))
    return float(best), [table.sites[r] for r in rows]


def _center(a: Site, b: Site) -> tuple[float, ...]:
    return tuple((x + y) / 2 for x, y in zip(a, b))


def literal_tie_break(paths: list[tuple[Site, ...]]) -> tuple[Site, ...]:
    """Select one path by fixing edges one at a time.

    At step j, keep the paths whose j-th edge centre has the smallest last
    coordinate, then among those the smallest second-to-last, down to the
    first coordinate; the surviving j-th edge is then fixed.
    """
    if not paths:
        raise ValueError("no paths to choose from")
    current = list(paths)
    j = 0
    while len(current) > 1:
        live = [p for p in current if len(p) > j + 1]
        if not live:
            raise ValueError("distinct paths with identical edges")
        d = len(live[0][0])
        for k in range(d - 1, -1, -1):
            target = min(_center(p[j], p[j + 1])[k] for p in live)
            live = [p for p in live if _center(p[j], p[j + 1])[k] == target]
        current = live
        j += 1
    return current[0]
