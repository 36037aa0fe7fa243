"""Choosing which nodes turn adversarial.

Three strategies: a uniform random subset, the top nodes of one centrality
measure, and MaxSpAN, which grows a fixed-size BFS influence region around
every node and then greedily adds the node whose region overlaps least with
the regions already claimed.
"""

from __future__ import annotations

import csv
import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .centrality import CentralityMeasure, compute, top_k_nodes
from .errors import InvalidCount, NotStronglyConnected, TooFewAdversaries
from .graph import DirectedGraph, distance_matrix, is_strongly_connected
from .rng import substream

RANDOM = "random"
CENTRALITY = "centrality"
MAXSPAN = "maxspan"


@dataclass(frozen=True)
class PlacementStrategy:
    kind: str
    n_advs: int
    measure: CentralityMeasure | None = None
    direction: str = "out"

    @property
    def label(self) -> str:
        if self.kind == CENTRALITY:
            return CentralityMeasure(self.measure).value
        return self.kind

    @classmethod
    def from_label(cls, label: str, n_advs: int, direction: str = "out") -> "PlacementStrategy":
        """``random``, ``maxspan`` or any centrality measure name."""
        if label in (RANDOM, MAXSPAN):
            return cls(label, n_advs, direction=direction)
        try:
            measure = CentralityMeasure(label)
        except ValueError:
            raise ValueError(f"unknown placement strategy {label!r}") from None
        return cls(CENTRALITY, n_advs, measure)


@dataclass(frozen=True)
class InfluenceRegion:
    root: int
    members: tuple[int, ...]


def _neighbours(g: DirectedGraph, direction: str):
    if direction == "out":
        return g.out_adjacency
    if direction == "in":
        return g.in_adjacency
    if direction == "undirected":
        return tuple(tuple(sorted(set(o) | set(i))) for o, i in zip(g.out_adjacency, g.in_adjacency))
    raise ValueError(f"direction must be out, in or undirected, got {direction!r}")


def bfs_cluster(g: DirectedGraph, root: int, s_cluster: int, direction: str = "out") -> InfluenceRegion:
    """First ``s_cluster`` nodes in BFS order from ``root`` (ascending neighbour ids)."""
    if s_cluster < 1:
        raise ValueError("s_cluster must be >= 1")
    nbrs = _neighbours(g, direction)
    members = [root]
    seen = {root}
    queue = deque([root])
    while queue and len(members) < s_cluster:
        v = queue.popleft()
        for w in nbrs[v]:
            if w not in seen:
                seen.add(w)
                members.append(w)
                queue.append(w)
                if len(members) == s_cluster:
                    break
    return InfluenceRegion(root, tuple(members))


def maxspan_place(
    g: DirectedGraph,
    n_advs: int,
    n_clients: int | None = None,
    seed: int = 0,
    *,
    first: int | None = None,
    direction: str = "out",
) -> tuple[int, ...]:
    """Greedy minimum-overlap placement. Returns adversaries in selection order.

    ``first`` pins the initial adversary instead of drawing it from the seed.
    """
    n_clients = g.n if n_clients is None else n_clients
    if not 1 <= n_advs <= g.n:
        raise InvalidCount(f"n_advs must lie in [1, {g.n}], got {n_advs}")
    s_cluster = n_clients // n_advs
    regions = [frozenset(bfs_cluster(g, v, s_cluster, direction).members) for v in range(g.n)]
    if first is None:
        first = int(substream(seed, "placement", "maxspan", "first").integers(g.n))
    chosen = [first]
    covered = set(regions[first])
    while len(chosen) < n_advs:
        best, best_overlap = -1, None
        taken = set(chosen)
        for v in range(g.n):
            if v in taken:
                continue
            o = len(regions[v] & covered)
            if best_overlap is None or o < best_overlap:
                best, best_overlap = v, o
        chosen.append(best)
        covered |= regions[best]
    return tuple(chosen)


def place(strategy: PlacementStrategy, g: DirectedGraph, seed: int = 0) -> frozenset[int]:
    if not is_strongly_connected(g):
        raise NotStronglyConnected("placement expects a strongly connected graph")
    k = strategy.n_advs
    if not 1 <= k < g.n:
        raise InvalidCount(f"n_advs must lie in [1, {g.n - 1}], got {k}")
    if strategy.kind == RANDOM:
        picks = substream(seed, "placement", "random").choice(g.n, size=k, replace=False)
        return frozenset(int(i) for i in picks)
    if strategy.kind == CENTRALITY:
        return frozenset(top_k_nodes(compute(g, strategy.measure), k))
    if strategy.kind == MAXSPAN:
        return frozenset(maxspan_place(g, k, g.n, seed, direction=strategy.direction))
    raise ValueError(f"unknown strategy kind {strategy.kind!r}")


def pair_distance(dist: np.ndarray, i: int, j: int) -> float:
    return (dist[i, j] + dist[j, i]) / 2.0


def avg_adversarial_distance(g: DirectedGraph, advs: Iterable[int], dist: np.ndarray | None = None) -> float:
    """Mean over adversary pairs of the averaged two-way hop distance."""
    advs = sorted(set(advs))
    if len(advs) < 2:
        raise TooFewAdversaries("need at least two adversaries")
    if dist is None:
        if not is_strongly_connected(g):
            raise NotStronglyConnected("hop distances are infinite on this graph")
        dist = distance_matrix(g)
    pairs = list(itertools.combinations(advs, 2))
    return sum(pair_distance(dist, i, j) for i, j in pairs) / len(pairs)


def format_adversaries(advs: Iterable[int]) -> str:
    return ";".join(str(a) for a in sorted(advs))


def write_placements_csv(rows: Sequence[tuple[str, int, Iterable[int]]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "seed", "adversaries"])
        for strategy, seed, advs in rows:
            w.writerow([strategy, seed, format_adversaries(advs)])
