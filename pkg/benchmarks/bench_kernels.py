"""Time the numba kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [--repeat 20]

Numba variants are warmed up once so compile time is excluded.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from maxspan_sim import kernels
from maxspan_sim._accel import NUMBA_AVAILABLE
from maxspan_sim.graph import GraphSpec, generate_strongly_connected


def cases():
    g, _ = generate_strongly_connected(GraphSpec("ER", 100, p_edge=0.05, seed=1))
    indptr, indices = g.csr
    n = g.n
    rng = np.random.default_rng(0)
    d, c, m, b = 16, 10, 25, 32
    feats = rng.normal(size=(4000, d))
    labels = rng.integers(c, size=4000)
    models = rng.normal(scale=0.1, size=(m, c * (d + 1)))
    idx = rng.integers(4000, size=(m, b))
    eps = np.full(m, 1.0)
    test = feats[:2000]
    vals = rng.normal(size=(n, c * (d + 1)))
    weights = np.ones(indices.size) / 3.0
    sources = np.arange(n)
    return {
        "bfs_distances (n=100, all sources)": ("bfs_distances", (indptr, indices, n, sources)),
        "betweenness (n=100)": ("betweenness", (indptr, indices, n)),
        "softmax_grads (25 nodes, B=32, FGSM)": ("softmax_grads", (feats, labels, idx, models, eps, c)),
        "softmax_eval (25 models, 2000 rows)": ("softmax_eval", (test, labels[:2000], models, c)),
        "mix_rows (n=100, p=170)": ("mix_rows", (indptr, indices, weights, vals)),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if not NUMBA_AVAILABLE:
        print("numba is not installed; only the numpy timings are shown")
    print(f"{'kernel':40s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, (name, call_args) in cases().items():
        f_np = getattr(kernels, f"{name}_np")
        t_np = min(timeit.repeat(lambda: f_np(*call_args), number=1, repeat=args.repeat)) * 1e3
        if NUMBA_AVAILABLE:
            f_nb = getattr(kernels, f"{name}_nb")
            f_nb(*call_args)
            t_nb = min(timeit.repeat(lambda: f_nb(*call_args), number=1, repeat=args.repeat)) * 1e3
            print(f"{label:40s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:7.1f}x")
        else:
            print(f"{label:40s} {t_np:10.3f} {'-':>10s} {'-':>8s}")


if __name__ == "__main__":
    main()
