"""Hot numeric kernels, each in a numba-compiled and a vectorised numpy form.

Graphs arrive in CSR form (``indptr``, ``indices``) over out-edges. Distances
use ``-1`` for unreachable nodes; callers translate that into the public
sentinel.

The public names at the bottom dispatch on ``_accel.USE_NUMBA``. Both
variants are importable directly (``*_nb`` / ``*_np``) for tests and the
benchmark.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from ._accel import njit

# ---------------------------------------------------------------- BFS


@njit
def bfs_distances_nb(indptr, indices, n, sources):
    out = np.full((sources.shape[0], n), -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for r in range(sources.shape[0]):
        s = sources[r]
        dist = out[r]
        dist[s] = 0
        head = 0
        tail = 1
        queue[0] = s
        while head < tail:
            v = queue[head]
            head += 1
            for k in range(indptr[v], indptr[v + 1]):
                w = indices[k]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue[tail] = w
                    tail += 1
    return out


def _dense(indptr, indices, n):
    adj = np.zeros((n, n), dtype=np.int64)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    adj[rows, indices] = 1
    return adj


def bfs_distances_np(indptr, indices, n, sources):
    adj = _dense(indptr, indices, n)
    m = sources.shape[0]
    dist = np.full((m, n), -1, dtype=np.int64)
    frontier = np.zeros((m, n), dtype=bool)
    frontier[np.arange(m), sources] = True
    reached = frontier.copy()
    level = 0
    while frontier.any():
        dist[frontier] = level
        frontier = ((frontier.astype(np.int64) @ adj) > 0) & ~reached
        reached |= frontier
        level += 1
    return dist


# ---------------------------------------------------------------- betweenness


@njit
def betweenness_nb(indptr, indices, n):
    bc = np.zeros(n, dtype=np.float64)
    sigma = np.zeros(n, dtype=np.float64)
    dist = np.empty(n, dtype=np.int64)
    delta = np.zeros(n, dtype=np.float64)
    order = np.empty(n, dtype=np.int64)
    for s in range(n):
        sigma[:] = 0.0
        delta[:] = 0.0
        dist[:] = -1
        sigma[s] = 1.0
        dist[s] = 0
        head = 0
        tail = 1
        order[0] = s
        while head < tail:
            v = order[head]
            head += 1
            for k in range(indptr[v], indptr[v + 1]):
                w = indices[k]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    order[tail] = w
                    tail += 1
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
        # reverse BFS order visits successors before predecessors
        for pos in range(tail - 1, -1, -1):
            v = order[pos]
            acc = 0.0
            for k in range(indptr[v], indptr[v + 1]):
                w = indices[k]
                if dist[w] == dist[v] + 1:
                    acc += (1.0 + delta[w]) / sigma[w]
            delta[v] = sigma[v] * acc
            if v != s:
                bc[v] += delta[v]
    return bc


def betweenness_np(indptr, indices, n):
    adj = _dense(indptr, indices, n).astype(np.float64)
    dist_all = bfs_distances_np(indptr, indices, n, np.arange(n))
    bc = np.zeros(n, dtype=np.float64)
    for s in range(n):
        dist = dist_all[s]
        depth = dist.max()
        sigma = np.zeros(n)
        sigma[s] = 1.0
        for level in range(1, depth + 1):
            nxt = dist == level
            sigma[nxt] = (sigma * (dist == level - 1)) @ adj[:, nxt]
        delta = np.zeros(n)
        for level in range(depth - 1, -1, -1):
            cur = dist == level
            coef = np.where(dist == level + 1, (1.0 + delta) / np.where(sigma > 0, sigma, 1.0), 0.0)
            delta[cur] = sigma[cur] * (adj[cur] @ coef)
        delta[s] = 0.0
        bc += delta
    return bc


# ---------------------------------------------------------------- linear softmax
#
# A model is a flat vector of C*(d+1) entries: row-major C x (d+1) weights
# whose last column is the bias. Loss is batch-mean cross-entropy.


@njit
def softmax_grads_nb(features, labels, idx, models, eps, n_classes):
    m, b = idx.shape
    d = features.shape[1]
    c = n_classes
    grads = np.zeros((m, c * (d + 1)), dtype=np.float64)
    z = np.empty(d, dtype=np.float64)
    logits = np.empty(c, dtype=np.float64)
    prob = np.empty(c, dtype=np.float64)
    for r in range(m):
        w = models[r]
        for t in range(b):
            row = idx[r, t]
            y = labels[row]
            for j in range(d):
                z[j] = features[row, j]
            for rep in range(2):
                mx = -np.inf
                for k in range(c):
                    acc = w[k * (d + 1) + d]
                    for j in range(d):
                        acc += w[k * (d + 1) + j] * z[j]
                    logits[k] = acc
                    if acc > mx:
                        mx = acc
                tot = 0.0
                for k in range(c):
                    prob[k] = np.exp(logits[k] - mx)
                    tot += prob[k]
                for k in range(c):
                    prob[k] /= tot
                prob[y] -= 1.0
                if rep == 1 or eps[r] == 0.0:
                    break
                # FGSM: move the sample along the sign of its input gradient
                for j in range(d):
                    gz = 0.0
                    for k in range(c):
                        gz += w[k * (d + 1) + j] * prob[k]
                    if gz > 0.0:
                        z[j] += eps[r]
                    elif gz < 0.0:
                        z[j] -= eps[r]
            g = grads[r]
            for k in range(c):
                base = k * (d + 1)
                for j in range(d):
                    g[base + j] += prob[k] * z[j]
                g[base + d] += prob[k]
        for q in range(c * (d + 1)):
            grads[r, q] /= b
    return grads


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_grads_np(features, labels, idx, models, eps, n_classes):
    m, b = idx.shape
    d = features.shape[1]
    w = models.reshape(m, n_classes, d + 1)
    z = features[idx]  # (m, b, d)
    onehot = np.eye(n_classes)[labels[idx]]

    def residual(z):
        logits = np.einsum("mkj,mbj->mbk", w[:, :, :d], z) + w[:, None, :, d]
        return _softmax(logits) - onehot

    res = residual(z)
    if np.any(eps != 0.0):
        gz = np.einsum("mkj,mbk->mbj", w[:, :, :d], res)
        z = z + eps[:, None, None] * np.sign(gz)
        res = residual(z)
    gw = np.einsum("mbk,mbj->mkj", res, z) / b
    gb = res.sum(axis=1) / b
    return np.concatenate([gw, gb[:, :, None]], axis=2).reshape(m, -1)


# fastmath is confined to evaluation; training dynamics stay strict IEEE
@njit(fastmath=True)
def softmax_eval_nb(features, labels, models, n_classes):
    m = models.shape[0]
    n, d = features.shape
    c = n_classes
    w = models.reshape(m, c, d + 1)
    acc = np.zeros(m, dtype=np.float64)
    loss = np.zeros(m, dtype=np.float64)
    logits = np.empty(c, dtype=np.float64)
    for r in range(m):
        hits = 0
        tot_loss = 0.0
        for i in range(n):
            best = 0
            mx = -np.inf
            for k in range(c):
                a = w[r, k, d]
                for j in range(d):
                    a += w[r, k, j] * features[i, j]
                logits[k] = a
                if a > mx:
                    mx = a
                    best = k
            s = 0.0
            for k in range(c):
                s += np.exp(logits[k] - mx)
            tot_loss += np.log(s) + mx - logits[labels[i]]
            if best == labels[i]:
                hits += 1
        acc[r] = hits / n
        loss[r] = tot_loss / n
    return acc, loss


def softmax_eval_np(features, labels, models, n_classes):
    m = models.shape[0]
    n, d = features.shape
    aug = np.hstack([features, np.ones((n, 1))])
    logits = (models.reshape(m * n_classes, d + 1) @ aug.T).reshape(m, n_classes, n)
    mx = logits.max(axis=1)
    lse = np.log(np.exp(logits - mx[:, None, :]).sum(axis=1)) + mx
    picked = logits[:, labels, np.arange(n)]
    acc = (logits.argmax(axis=1) == labels).mean(axis=1)
    return acc, (lse - picked).mean(axis=1)


# ---------------------------------------------------------------- mixing


@njit
def mix_rows_nb(indptr, indices, weights, values):
    n = indptr.shape[0] - 1
    out = np.zeros((n, values.shape[1]), dtype=np.float64)
    for i in range(n):
        for k in range(indptr[i], indptr[i + 1]):
            wgt = weights[k]
            j = indices[k]
            for q in range(values.shape[1]):
                out[i, q] += wgt * values[j, q]
    return out


def mix_rows_np(indptr, indices, weights, values):
    n = indptr.shape[0] - 1
    dense = np.zeros((n, values.shape[0]))
    rows = np.repeat(np.arange(n), np.diff(indptr))
    dense[rows, indices] = weights
    return dense @ values


# ---------------------------------------------------------------- dispatch


def _pick(nb, np_):
    return nb if _accel.USE_NUMBA else np_


def bfs_distances(indptr, indices, n, sources):
    return _pick(bfs_distances_nb, bfs_distances_np)(indptr, indices, n, sources)


def betweenness(indptr, indices, n):
    return _pick(betweenness_nb, betweenness_np)(indptr, indices, n)


def softmax_grads(features, labels, idx, models, eps, n_classes):
    return _pick(softmax_grads_nb, softmax_grads_np)(features, labels, idx, models, eps, n_classes)


def softmax_eval(features, labels, models, n_classes):
    return _pick(softmax_eval_nb, softmax_eval_np)(features, labels, models, n_classes)


def mix_rows(indptr, indices, weights, values):
    return _pick(mix_rows_nb, mix_rows_np)(indptr, indices, weights, values)
