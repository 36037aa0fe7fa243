"""Directed communication topologies.

Nodes are ``0..n-1``. Out-neighbour lists are stored sorted and without
self-loops; the self-inclusion used by the aggregation weights is applied
in :mod:`maxspan_sim.fedsim`, never here.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import ConnectivityFailure, EmptyGraph, InvalidSpec, ParseError
from .rng import substream

log = logging.getLogger(__name__)

FAMILIES = ("ER", "PreferentialAttachment", "DirectedGeometric", "KOut", "EdgeList")

_FAMILY_FIELDS = {
    "ER": ("p_edge",),
    "PreferentialAttachment": ("m_attach",),
    "DirectedGeometric": ("radius",),
    "KOut": ("k",),
    "EdgeList": ("path",),
}


class _Unreachable:
    """Hop distance to a node that cannot be reached. Supports no arithmetic."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNREACHABLE"

    def __reduce__(self):
        return (_Unreachable, ())


UNREACHABLE = _Unreachable()


@dataclass(frozen=True)
class DirectedGraph:
    n: int
    out_adjacency: tuple[tuple[int, ...], ...]
    # point coordinates for geometric graphs; not part of graph identity
    positions: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if len(self.out_adjacency) != self.n:
            raise InvalidSpec("out_adjacency length must equal n")
        for i, nbrs in enumerate(self.out_adjacency):
            for a, b in zip(nbrs, nbrs[1:]):
                if a >= b:
                    raise InvalidSpec(f"out-neighbours of {i} must be strictly ascending")
            if nbrs and (nbrs[0] < 0 or nbrs[-1] >= self.n):
                raise InvalidSpec(f"edge endpoint out of range at node {i}")
            if i in nbrs:
                raise InvalidSpec(f"self-loop at node {i}")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], positions=None) -> "DirectedGraph":
        """Build from an edge iterable; duplicates are merged, self-loops rejected."""
        adj: list[set[int]] = [set() for _ in range(n)]
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidSpec(f"edge ({i}, {j}) out of range for n={n}")
            if i == j:
                raise InvalidSpec(f"self-loop ({i}, {i})")
            adj[i].add(j)
        return cls(n, tuple(tuple(sorted(s)) for s in adj), positions)

    @classmethod
    def from_matrix(cls, mat: np.ndarray, positions=None) -> "DirectedGraph":
        mat = np.asarray(mat, dtype=bool).copy()
        np.fill_diagonal(mat, False)
        return cls(mat.shape[0], tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in mat), positions)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, nbrs in enumerate(self.out_adjacency) for j in nbrs]

    @property
    def n_edges(self) -> int:
        return sum(len(nbrs) for nbrs in self.out_adjacency)

    @cached_property
    def in_adjacency(self) -> tuple[tuple[int, ...], ...]:
        ins: list[list[int]] = [[] for _ in range(self.n)]
        for i, nbrs in enumerate(self.out_adjacency):
            for j in nbrs:
                ins[j].append(i)
        return tuple(tuple(x) for x in ins)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(nbrs) for nbrs in self.out_adjacency])
        indices = np.fromiter((j for nbrs in self.out_adjacency for j in nbrs), dtype=np.int64, count=int(indptr[-1]))
        return indptr, indices

    def reversed(self) -> "DirectedGraph":
        return DirectedGraph(self.n, self.in_adjacency)

    def adjacency_matrix(self) -> np.ndarray:
        mat = np.zeros((self.n, self.n), dtype=np.float64)
        for i, j in self.edges:
            mat[i, j] = 1.0
        return mat

    def out_degree(self) -> np.ndarray:
        return np.array([len(x) for x in self.out_adjacency], dtype=np.int64)

    def in_degree(self) -> np.ndarray:
        return np.array([len(x) for x in self.in_adjacency], dtype=np.int64)


@dataclass(frozen=True)
class GraphSpec:
    family: str
    n: int | None = None
    p_edge: float | None = None
    m_attach: int | None = None
    radius: float | None = None
    k: int | None = None
    path: str | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown graph family {self.family!r}")
        needed = _FAMILY_FIELDS[self.family]
        for name in ("p_edge", "m_attach", "radius", "k", "path"):
            value = getattr(self, name)
            if name in needed and value is None:
                raise InvalidSpec(f"{self.family} requires {name}")
            if name not in needed and value is not None:
                raise InvalidSpec(f"{name} is not a parameter of {self.family}")
        if self.family == "EdgeList":
            return
        if self.n is None or self.n < 1:
            raise InvalidSpec("n must be >= 1")
        n = self.n
        if self.family == "ER" and not 0.0 <= self.p_edge <= 1.0:
            raise InvalidSpec("p_edge must lie in [0, 1]")
        if self.family == "DirectedGeometric" and not 0.0 < self.radius <= math.sqrt(2.0):
            raise InvalidSpec("radius must lie in (0, sqrt(2)]")
        if self.family == "KOut" and not 1 <= self.k < n:
            raise InvalidSpec("k must satisfy 1 <= k < n")
        if self.family == "PreferentialAttachment" and not 1 <= self.m_attach < n:
            raise InvalidSpec("m_attach must satisfy 1 <= m_attach < n")

    def with_seed(self, seed: int) -> "GraphSpec":
        return GraphSpec(self.family, self.n, self.p_edge, self.m_attach, self.radius, self.k, self.path, seed)

    def to_dict(self) -> dict:
        out = {"family": self.family}
        for name in ("n", "p_edge", "m_attach", "radius", "k", "path"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        out["seed"] = self.seed
        return out


# ---------------------------------------------------------------- generators


def _erdos_renyi(n, p, seed):
    draws = substream(seed, "graph", "ER", "edges").random((n, n))
    return DirectedGraph.from_matrix(draws < p)


def _k_out(n, k, seed):
    rng = substream(seed, "graph", "KOut", "targets")
    adj = []
    for i in range(n):
        picks = rng.choice(n - 1, size=k, replace=False)
        picks = np.where(picks >= i, picks + 1, picks)
        adj.append(tuple(sorted(int(j) for j in picks)))
    return DirectedGraph(n, tuple(adj))


def _geometric(n, radius, seed):
    pts = substream(seed, "graph", "DirectedGeometric", "points").random((n, 2))
    within = geometric_edges(pts, radius)
    return DirectedGraph.from_matrix(within, positions=pts)


def geometric_edges(points: np.ndarray, radius: float) -> np.ndarray:
    """Boolean adjacency of the reciprocal distance-threshold graph on ``points``."""
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    within = dist <= radius
    np.fill_diagonal(within, False)
    return within


def _preferential(n, m, seed):
    rng = substream(seed, "graph", "PreferentialAttachment", "attach")
    adj = np.zeros((n, n), dtype=bool)
    core = min(m + 1, n)
    adj[:core, :core] = True
    np.fill_diagonal(adj, False)
    for v in range(core, n):
        weight = (adj[:v, :v].sum(axis=0) + adj[:v, :v].sum(axis=1) + 1).astype(np.float64)
        targets = rng.choice(v, size=m, replace=False, p=weight / weight.sum())
        adj[v, targets] = True
        adj[targets, v] = True
    return DirectedGraph.from_matrix(adj)


def generate(spec: GraphSpec) -> DirectedGraph:
    spec.validate()
    if spec.family == "EdgeList":
        return load_edge_list(spec.path)
    if spec.family == "ER":
        return _erdos_renyi(spec.n, spec.p_edge, spec.seed)
    if spec.family == "KOut":
        return _k_out(spec.n, spec.k, spec.seed)
    if spec.family == "DirectedGeometric":
        return _geometric(spec.n, spec.radius, spec.seed)
    return _preferential(spec.n, spec.m_attach, spec.seed)


def generate_strongly_connected(spec: GraphSpec, max_attempts: int = 1000) -> tuple[DirectedGraph, int]:
    """Draw graphs at seeds ``spec.seed, spec.seed + 1, ...`` until one is strongly connected.

    Returns the graph and the seed that produced it.
    """
    if spec.family == "EdgeList":
        raise InvalidSpec("edge-list graphs cannot be redrawn")
    for attempt in range(max_attempts):
        seed = spec.seed + attempt
        g = generate(spec.with_seed(seed))
        if is_strongly_connected(g):
            return g, seed
    raise ConnectivityFailure(f"no strongly connected {spec.family} graph in {max_attempts} attempts")


# ---------------------------------------------------------------- queries


def _reach_count(g: DirectedGraph, start: int) -> int:
    seen = bytearray(g.n)
    seen[start] = 1
    stack = [start]
    count = 1
    while stack:
        v = stack.pop()
        for w in g.out_adjacency[v]:
            if not seen[w]:
                seen[w] = 1
                count += 1
                stack.append(w)
    return count


def is_strongly_connected(g: DirectedGraph) -> bool:
    if g.n <= 1:
        return True
    return _reach_count(g, 0) == g.n and _reach_count(g.reversed(), 0) == g.n


def distance_matrix(g: DirectedGraph) -> np.ndarray:
    """All-pairs directed hop counts; ``-1`` where unreachable."""
    indptr, indices = g.csr
    return kernels.bfs_distances(indptr, indices, g.n, np.arange(g.n, dtype=np.int64))


def hop_distances(g: DirectedGraph, source: int) -> list:
    if not 0 <= source < g.n:
        raise IndexError(f"source {source} not in graph of {g.n} nodes")
    indptr, indices = g.csr
    row = kernels.bfs_distances(indptr, indices, g.n, np.array([source], dtype=np.int64))[0]
    return [int(d) if d >= 0 else UNREACHABLE for d in row]


# ---------------------------------------------------------------- edge lists


@dataclass(frozen=True)
class EdgeListStats:
    self_loops_dropped: int
    duplicates_dropped: int
    id_map: dict


def read_edge_list(path: str | os.PathLike) -> tuple[DirectedGraph, EdgeListStats]:
    ids: dict[int, int] = {}
    edges: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    loops = dups = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) < 2:
                raise ParseError(f"{path}:{lineno}: expected 'src dst'")
            try:
                src, dst = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer node id in {text!r}") from None
            a = ids.setdefault(src, len(ids))
            b = ids.setdefault(dst, len(ids))
            if a == b:
                loops += 1
            elif (a, b) in seen:
                dups += 1
            else:
                seen.add((a, b))
                edges.append((a, b))
    if not edges:
        raise EmptyGraph(f"{path}: no edges")
    if sorted(ids) == list(range(len(ids))):
        # ids already dense: keep them so write/read round-trips exactly
        edges = [(src, dst) for src, dst in _relabel(edges, ids)]
        ids = {i: i for i in range(len(ids))}
    if loops or dups:
        log.info("%s: dropped %d self-loops and %d duplicate edges", path, loops, dups)
    return DirectedGraph.from_edges(len(ids), edges), EdgeListStats(loops, dups, ids)


def _relabel(edges, ids):
    back = {v: k for k, v in ids.items()}
    return [(back[a], back[b]) for a, b in edges]


def load_edge_list(path: str | os.PathLike) -> DirectedGraph:
    return read_edge_list(path)[0]


def write_edge_list(g: DirectedGraph, path: str | os.PathLike, header: Sequence[str] = ()) -> None:
    lines = [f"# {h}\n" for h in header]
    lines.extend(f"{i} {j}\n" for i, j in g.edges)
    Path(path).write_text("".join(lines), encoding="utf-8", newline="\n")
