"""Node centralities on directed graphs and the cross-measure similarity score."""

from __future__ import annotations

import csv
import enum
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import CardinalityMismatch, NoConvergence, NotStronglyConnected
from .graph import DirectedGraph, distance_matrix, is_strongly_connected


class CentralityMeasure(str, enum.Enum):
    IN_DEGREE = "in_degree"
    OUT_DEGREE = "out_degree"
    BETWEENNESS = "betweenness"
    CLOSENESS = "closeness"
    EIGENVECTOR = "eigenvector"


@dataclass(frozen=True)
class CentralityVector:
    measure: CentralityMeasure
    scores: np.ndarray

    def __len__(self):
        return len(self.scores)


def degree_centrality(g: DirectedGraph, direction: str = "in") -> CentralityVector:
    if direction == "in":
        return CentralityVector(CentralityMeasure.IN_DEGREE, g.in_degree().astype(np.float64))
    if direction == "out":
        return CentralityVector(CentralityMeasure.OUT_DEGREE, g.out_degree().astype(np.float64))
    raise ValueError(f"direction must be 'in' or 'out', got {direction!r}")


def betweenness_centrality(g: DirectedGraph) -> CentralityVector:
    """Unnormalised directed betweenness, endpoints excluded."""
    indptr, indices = g.csr
    return CentralityVector(CentralityMeasure.BETWEENNESS, kernels.betweenness(indptr, indices, g.n))


def closeness_centrality(g: DirectedGraph) -> CentralityVector:
    """``(n - 1) / sum of outward hop distances``. Needs a strongly connected graph."""
    if not is_strongly_connected(g):
        raise NotStronglyConnected("closeness is only defined here for strongly connected graphs")
    if g.n == 1:
        return CentralityVector(CentralityMeasure.CLOSENESS, np.zeros(1))
    totals = distance_matrix(g).sum(axis=1)
    return CentralityVector(CentralityMeasure.CLOSENESS, (g.n - 1) / totals.astype(np.float64))


def eigenvector_centrality(g: DirectedGraph, tol: float = 1e-10, max_iters: int = 10_000) -> CentralityVector:
    """Left Perron vector of the adjacency matrix by power iteration.

    Iterates ``v <- v^T (M + I)`` normalised to unit L2 length from the
    uniform start. The identity shift leaves the eigenvectors unchanged and
    removes the period-2 oscillation seen on bipartite digraphs.
    """
    if not is_strongly_connected(g):
        raise NotStronglyConnected("eigenvector centrality needs a strongly connected graph")
    shifted = g.adjacency_matrix() + np.eye(g.n)
    v = np.full(g.n, 1.0 / math.sqrt(g.n))
    for _ in range(max_iters):
        nxt = v @ shifted
        nxt /= np.linalg.norm(nxt)
        change = np.linalg.norm(nxt - v)
        v = nxt
        if change < tol:
            return CentralityVector(CentralityMeasure.EIGENVECTOR, v)
    raise NoConvergence(f"power iteration did not reach tol={tol} in {max_iters} steps")


def compute(g: DirectedGraph, measure: CentralityMeasure | str) -> CentralityVector:
    measure = CentralityMeasure(measure)
    if measure is CentralityMeasure.IN_DEGREE:
        return degree_centrality(g, "in")
    if measure is CentralityMeasure.OUT_DEGREE:
        return degree_centrality(g, "out")
    if measure is CentralityMeasure.BETWEENNESS:
        return betweenness_centrality(g)
    if measure is CentralityMeasure.CLOSENESS:
        return closeness_centrality(g)
    return eigenvector_centrality(g)


def top_k_nodes(c: CentralityVector | Sequence[float], k: int) -> tuple[int, ...]:
    """Ids of the ``k`` highest scores, ties going to the lower id, in rank order."""
    scores = np.asarray(c.scores if isinstance(c, CentralityVector) else c, dtype=np.float64)
    if not 1 <= k <= scores.size:
        raise ValueError(f"k must lie in [1, {scores.size}], got {k}")
    # lexsort: last key is primary
    order = np.lexsort((np.arange(scores.size), -scores))
    return tuple(int(i) for i in order[:k])


def pair_similarity(s1: Iterable[int], s2: Iterable[int]) -> float:
    a, b = set(s1), set(s2)
    return 1.0 - (len(a - b) + len(b - a)) / (len(a) + len(b))


def similarity_score(sets: Sequence[Iterable[int]]) -> float:
    """Mean pairwise overlap of equally sized node sets; 1 when all coincide, 0 when disjoint."""
    sets = [frozenset(s) for s in sets]
    if len(sets) < 2:
        raise CardinalityMismatch("need at least two sets")
    sizes = {len(s) for s in sets}
    if len(sizes) != 1 or 0 in sizes:
        raise CardinalityMismatch(f"sets must share one non-zero size, got {sorted(sizes)}")
    pairs = list(itertools.combinations(sets, 2))
    return sum(pair_similarity(a, b) for a, b in pairs) / len(pairs)


def adversary_count(fraction: float, n: int) -> int:
    # half-up rounding, at least one node
    return max(1, min(n, int(math.floor(fraction * n + 0.5))))


def similarity_curve(g: DirectedGraph, fractions: Sequence[float]) -> list[tuple[float, float]]:
    vectors = [compute(g, m) for m in CentralityMeasure]
    curve = []
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ValueError(f"fraction must lie in (0, 1], got {f}")
        k = adversary_count(f, g.n)
        curve.append((float(f), similarity_score([top_k_nodes(v, k) for v in vectors])))
    return curve


def write_centrality_csv(c: CentralityVector, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "score"])
        for i, s in enumerate(c.scores):
            w.writerow([i, format(float(s), ".17g")])
