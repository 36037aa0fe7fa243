"""Decentralised training with push-pull gradient tracking and FGSM adversaries.

Honest node ``i`` updates from the epoch-``t`` snapshot::

    x_i <- sum_{j in N_i} x_j / d_i^in - alpha * y_i
    y_i <- sum_{j in N_i} y_j / d_j^out + g_i(x_i_new) - g_i(x_i_old)

where ``N_i`` is the in-neighbourhood of ``i`` plus ``i`` itself and both
degrees count the node itself. The subtracted gradient is the cached one
from the previous epoch (same batch), which keeps the network sum of ``y``
equal to the sum of current local gradients.

Once the attack starts, an adversary drops its in-neighbours' models and
runs plain gradient descent on an FGSM-perturbed copy of its own data. It
keeps sending ``(x, y)`` like everyone else; by default its ``y`` is its
current poisoned gradient.

Two desk-scale tasks stand in for a neural network: a quadratic consensus
problem with a closed-form optimum, and multinomial logistic regression on
Gaussian class blobs.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .errors import InsufficientData, InvalidCount, NotStronglyConnected
from .graph import DirectedGraph, is_strongly_connected
from .placement import PlacementStrategy, avg_adversarial_distance, place
from .rng import substream

log = logging.getLogger(__name__)

QUADRATIC = "quadratic"
SOFTMAX = "softmax"

POISONED_GRADIENT = "poisoned_gradient"
TRACKING = "tracking"


# ---------------------------------------------------------------- tasks


@dataclass(frozen=True)
class Task:
    kind: str
    dim: int
    # quadratic: one target per node, shape (n, dim)
    targets: np.ndarray | None = None
    # softmax
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    test_features: np.ndarray | None = None
    test_labels: np.ndarray | None = None
    n_classes: int = 0
    shards: tuple[np.ndarray, ...] | None = None
    description: dict = field(default_factory=dict, compare=False)

    @property
    def n_features(self) -> int:
        return 0 if self.features is None else self.features.shape[1]

    @property
    def n_nodes(self) -> int | None:
        if self.kind == QUADRATIC:
            return self.targets.shape[0]
        return None if self.shards is None else len(self.shards)

    def shard_features(self, node: int) -> np.ndarray:
        return self.features[self.shards[node]]


def quadratic_task(n: int, dim: int = 1, seed: int = 0, scale: float = 1.0, targets=None) -> Task:
    """``f_i(x) = |x - b_i|^2 / 2``; the optimum of any node subset is the mean of its ``b_i``."""
    if targets is None:
        targets = scale * substream(seed, "task", "quadratic").standard_normal((n, dim))
    targets = np.array(targets, dtype=np.float64).reshape(n, -1)
    return Task(QUADRATIC, targets.shape[1], targets=targets,
                description={"kind": QUADRATIC, "n": n, "dim": int(targets.shape[1]), "scale": scale})


def softmax_task(
    seed: int = 0,
    n_features: int = 16,
    n_classes: int = 10,
    n_train: int = 4000,
    n_test: int = 2000,
    separation: float = 1.0,
) -> Task:
    """Gaussian blobs with unit covariance around per-class means drawn from ``N(0, separation^2 I)``."""
    rng = substream(seed, "task", "softmax")
    means = separation * rng.standard_normal((n_classes, n_features))

    def draw(count):
        labels = rng.integers(n_classes, size=count)
        return means[labels] + rng.standard_normal((count, n_features)), labels.astype(np.int64)

    x_train, y_train = draw(n_train)
    x_test, y_test = draw(n_test)
    desc = {"kind": SOFTMAX, "n_features": n_features, "n_classes": n_classes,
            "n_train": n_train, "n_test": n_test, "separation": separation}
    return Task(SOFTMAX, n_classes * (n_features + 1), features=x_train, labels=y_train,
                test_features=x_test, test_labels=y_test, n_classes=n_classes, description=desc)


@dataclass(frozen=True)
class Partition:
    kind: str = "iid"
    classes_per_node: int | None = None

    def to_dict(self):
        d = {"kind": self.kind}
        if self.classes_per_node is not None:
            d["classes_per_node"] = self.classes_per_node
        return d


def partition_data(task: Task, n: int, partition: Partition = Partition(), seed: int = 0,
                   batch_size: int | None = None) -> Task:
    """Assign each of ``n`` nodes a shard of the training set.

    IID shards are an equal split of a random permutation (remainder to the
    lowest ids). Non-IID nodes get ``classes_per_node`` classes dealt
    round-robin from a random class order and an equal share of each.
    """
    if task.kind != SOFTMAX:
        raise ValueError("only softmax tasks carry data to partition")
    total = task.features.shape[0]
    if total < n * (batch_size or 1):
        raise InsufficientData(f"{total} samples cannot give {n} nodes a batch of {batch_size}")
    rng = substream(seed, "partition", partition.kind)
    if partition.kind == "iid":
        shards = np.array_split(rng.permutation(total), n)
    elif partition.kind == "noniid":
        cpn = partition.classes_per_node
        if cpn is None or not 1 <= cpn <= task.n_classes:
            raise ValueError(f"classes_per_node must lie in [1, {task.n_classes}]")
        order = rng.permutation(task.n_classes)
        owners: dict[int, list[int]] = {int(c): [] for c in order}
        for node in range(n):
            for k in range(cpn):
                owners[int(order[(node * cpn + k) % task.n_classes])].append(node)
        pieces: list[list[np.ndarray]] = [[] for _ in range(n)]
        for cls in sorted(owners):
            nodes = owners[cls]
            if not nodes:
                continue
            members = rng.permutation(np.flatnonzero(task.labels == cls))
            for node, part in zip(nodes, np.array_split(members, len(nodes))):
                pieces[node].append(part)
        shards = [np.sort(np.concatenate(p)) if p else np.empty(0, np.int64) for p in pieces]
    else:
        raise ValueError(f"unknown partition kind {partition.kind!r}")
    shards = tuple(np.asarray(s, dtype=np.int64) for s in shards)
    smallest = min(s.size for s in shards)
    if smallest == 0 or (batch_size is not None and smallest < batch_size):
        raise InsufficientData(f"smallest shard has {smallest} samples, batch needs {batch_size or 1}")
    desc = dict(task.description, partition=partition.to_dict())
    return replace(task, shards=shards, description=desc)


# ---------------------------------------------------------------- per-node maths


def local_loss(task: Task, node: int, x: np.ndarray, batch: np.ndarray | None = None,
               features: np.ndarray | None = None) -> float:
    """Loss of node ``node`` at ``x``. ``features`` overrides the batch rows (poisoned copies)."""
    if task.kind == QUADRATIC:
        return 0.5 * float(np.sum((x - task.targets[node]) ** 2))
    rows = task.shards[node] if batch is None else batch
    z = task.features[rows] if features is None else features
    w = x.reshape(task.n_classes, task.n_features + 1)
    logits = z @ w[:, :-1].T + w[:, -1]
    mx = logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(logits - mx).sum(axis=1)) + mx[:, 0]
    return float(np.mean(lse - logits[np.arange(len(rows)), task.labels[rows]]))


def sample_batch(task: Task, node: int, batch_size: int | None, rng: np.random.Generator) -> np.ndarray | None:
    """Training-row indices for one stochastic batch; ``None`` means the whole shard."""
    if task.kind == QUADRATIC or batch_size is None:
        return None
    shard = task.shards[node]
    return shard[rng.choice(shard.size, size=batch_size, replace=False)]


def local_gradient(task: Task, node: int, x: np.ndarray, batch: np.ndarray | None = None,
                   epsilon: float = 0.0) -> np.ndarray:
    """Gradient of node ``node``'s loss at ``x``; ``epsilon > 0`` poisons the data first."""
    if task.kind == QUADRATIC:
        return x - poisoned_targets(task, node, x, epsilon)
    rows = task.shards[node] if batch is None else batch
    out = kernels.softmax_grads(task.features, task.labels, rows[None, :].astype(np.int64),
                                np.ascontiguousarray(x, dtype=np.float64)[None, :],
                                np.array([epsilon], dtype=np.float64), task.n_classes)
    return out[0]


def poisoned_targets(task: Task, node: int, x: np.ndarray, epsilon: float) -> np.ndarray:
    b = task.targets[node]
    return b + epsilon * np.sign(b - x) if epsilon else b.copy()


def data_gradient(task: Task, node: int, x: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
    """Per-sample gradient of the cross-entropy with respect to the input features."""
    rows = task.shards[node] if rows is None else rows
    z = task.features[rows]
    w = x.reshape(task.n_classes, task.n_features + 1)
    logits = z @ w[:, :-1].T + w[:, -1]
    prob = np.exp(logits - logits.max(axis=1, keepdims=True))
    prob /= prob.sum(axis=1, keepdims=True)
    prob[np.arange(len(rows)), task.labels[rows]] -= 1.0
    return prob @ w[:, :-1]


def fgsm_poison(task: Task, node: int, x: np.ndarray, epsilon: float, rows: np.ndarray | None = None) -> np.ndarray:
    """A poisoned copy of the node's data; the task itself is never modified.

    Softmax: the shard's feature matrix (or just ``rows``) moved by
    ``epsilon * sign(d loss / d features)``. Quadratic: the node's target.
    """
    if task.kind == QUADRATIC:
        return poisoned_targets(task, node, x, epsilon)
    rows = task.shards[node] if rows is None else rows
    z = task.features[rows].copy()
    if epsilon:
        z += epsilon * np.sign(data_gradient(task, node, x, rows))
    return z


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class SimConfig:
    alpha: float = 0.05
    batch_size: int | None = 32
    n_epochs: int = 100
    partition: Partition = Partition()
    seed: int = 0
    init_scale: float = 0.01
    adversary_tracker: str = POISONED_GRADIENT

    def to_dict(self):
        return {"alpha": self.alpha, "batch_size": self.batch_size, "n_epochs": self.n_epochs,
                "partition": self.partition.to_dict(), "seed": self.seed,
                "init_scale": self.init_scale, "adversary_tracker": self.adversary_tracker}


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 1.0
    t_attack: int = 25
    strategy: PlacementStrategy | None = None
    # explicit adversary set; overrides the strategy when given
    adversaries: frozenset[int] | None = None

    def to_dict(self):
        d = {"epsilon": self.epsilon, "t_attack": self.t_attack}
        if self.strategy is not None:
            d["strategy"] = self.strategy.label
            d["n_advs"] = self.strategy.n_advs
        if self.adversaries is not None:
            d["adversaries"] = sorted(self.adversaries)
        return d


@dataclass
class SimState:
    x: np.ndarray
    y: np.ndarray
    grad: np.ndarray
    # batch rows behind ``grad``, one entry per node (None = full shard / quadratic)
    batches: list

    def copy(self) -> "SimState":
        return SimState(self.x.copy(), self.y.copy(), self.grad.copy(), list(self.batches))


@dataclass(frozen=True)
class SimContext:
    graph: DirectedGraph
    task: Task
    alpha: float
    adversaries: frozenset[int] = frozenset()
    epsilon: float = 0.0
    t_attack: int = 0
    batch_size: int | None = None
    adversary_tracker: str = POISONED_GRADIENT

    def __post_init__(self):
        n = self.graph.n
        neigh = [tuple(sorted(set(self.graph.in_adjacency[i]) | {i})) for i in range(n)]
        d_out = np.array([len(o) + 1 for o in self.graph.out_adjacency], dtype=np.float64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(nb) for nb in neigh])
        indices = np.array([j for nb in neigh for j in nb], dtype=np.int64)
        row_w = np.concatenate([np.full(len(nb), 1.0 / len(nb)) for nb in neigh])
        col_w = 1.0 / d_out[indices]
        mask = np.zeros(n, dtype=bool)
        mask[list(self.adversaries)] = True
        object.__setattr__(self, "in_neighbourhoods", tuple(neigh))
        object.__setattr__(self, "d_out", d_out)
        object.__setattr__(self, "mixing", (indptr, indices, row_w, col_w))
        object.__setattr__(self, "adversary_mask", mask)
        object.__setattr__(self, "_nobody", np.zeros(n, dtype=bool))

    def attacking(self, t: int) -> np.ndarray:
        return self._nobody if t < self.t_attack else self.adversary_mask


# ---------------------------------------------------------------- stepping


def _batch_grads(task: Task, x: np.ndarray, batches: Sequence, eps: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Gradients for ``nodes`` at rows of ``x`` (one row per listed node)."""
    if nodes.size == 0:
        return np.zeros((0, task.dim))
    if task.kind == QUADRATIC:
        b = task.targets[nodes]
        bt = b + eps[:, None] * np.sign(b - x)
        return x - bt
    rows = [task.shards[i] if batches[i] is None else batches[i] for i in nodes]
    if len({r.size for r in rows}) == 1:
        return kernels.softmax_grads(task.features, task.labels, np.stack(rows), np.ascontiguousarray(x),
                                     eps, task.n_classes)
    return np.stack([
        kernels.softmax_grads(task.features, task.labels, r[None, :], np.ascontiguousarray(x[k:k + 1]),
                              eps[k:k + 1], task.n_classes)[0]
        for k, r in enumerate(rows)
    ])


def epoch_step(state: SimState, ctx: SimContext, t: int, next_batches: list) -> SimState:
    """One synchronous round: every node reads only the epoch-``t`` snapshot."""
    n = ctx.graph.n
    indptr, indices, row_w, col_w = ctx.mixing
    attacking = ctx.attacking(t)
    att = np.flatnonzero(attacking)
    everyone = np.arange(n)

    x_new = kernels.mix_rows(indptr, indices, row_w, state.x) - ctx.alpha * state.y
    if att.size:
        eps = np.full(att.size, ctx.epsilon)
        g_adv = _batch_grads(ctx.task, state.x[att], state.batches, eps, att)
        x_new[att] = state.x[att] - ctx.alpha * g_adv

    eps_all = np.where(attacking, ctx.epsilon, 0.0) if att.size else np.zeros(n)
    g_new = _batch_grads(ctx.task, x_new, next_batches, eps_all, everyone)
    y_new = kernels.mix_rows(indptr, indices, col_w, state.y) + g_new - state.grad
    if att.size and ctx.adversary_tracker == POISONED_GRADIENT:
        y_new[att] = g_new[att]
    return SimState(x_new, y_new, g_new, list(next_batches))


def honest_step(state: SimState, ctx: SimContext, i: int, next_batch=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reference update of a single honest node; returns ``(x, y, grad)``."""
    neigh = ctx.in_neighbourhoods[i]
    x_sum = np.zeros(ctx.task.dim)
    y_sum = np.zeros(ctx.task.dim)
    for j in neigh:
        x_sum += state.x[j] / len(neigh)
        y_sum += state.y[j] / ctx.d_out[j]
    x_new = x_sum - ctx.alpha * state.y[i]
    g_new = local_gradient(ctx.task, i, x_new, next_batch)
    return x_new, y_sum + g_new - state.grad[i], g_new


def adversary_step(state: SimState, ctx: SimContext, i: int, t: int, next_batch=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reference update of a single adversary; honest before ``t_attack``."""
    if t < ctx.t_attack:
        return honest_step(state, ctx, i, next_batch)
    g_now = local_gradient(ctx.task, i, state.x[i], state.batches[i], ctx.epsilon)
    x_new = state.x[i] - ctx.alpha * g_now
    g_new = local_gradient(ctx.task, i, x_new, next_batch, ctx.epsilon)
    if ctx.adversary_tracker == POISONED_GRADIENT:
        return x_new, g_new, g_new
    neigh = ctx.in_neighbourhoods[i]
    y_sum = np.zeros(ctx.task.dim)
    for j in neigh:
        y_sum += state.y[j] / ctx.d_out[j]
    return x_new, y_sum + g_new - state.grad[i], g_new


def reference_epoch(state: SimState, ctx: SimContext, t: int, next_batches: list, order=None) -> SimState:
    """Per-node version of :func:`epoch_step`, visiting nodes in ``order``."""
    n = ctx.graph.n
    out = state.copy()
    for i in (range(n) if order is None else order):
        step = adversary_step(state, ctx, i, t, next_batches[i]) if i in ctx.adversaries \
            else honest_step(state, ctx, i, next_batches[i])
        out.x[i], out.y[i], out.grad[i] = step
    out.batches = list(next_batches)
    return out


# ---------------------------------------------------------------- runs


@dataclass
class RunRecord:
    fingerprint: str
    seed: int
    task_kind: str
    loss: np.ndarray
    accuracy: np.ndarray | None = None
    dist_to_opt: np.ndarray | None = None
    adversaries: tuple[int, ...] = ()
    d_avg: float | None = None
    t_attack: int | None = None

    @property
    def n_epochs(self) -> int:
        return len(self.loss)

    def csv_rows(self) -> tuple[list[str], list[list[str]]]:
        fmt = lambda v: format(float(v), ".17g")  # noqa: E731
        if self.task_kind == SOFTMAX:
            header = ["epoch", "honest_mean_accuracy", "honest_mean_loss"]
            rows = [[str(e), fmt(a), fmt(l)] for e, (a, l) in enumerate(zip(self.accuracy, self.loss))]
        else:
            header = ["epoch", "honest_mean_loss", "dist_to_opt"]
            rows = [[str(e), fmt(l), fmt(d)] for e, (l, d) in enumerate(zip(self.loss, self.dist_to_opt))]
        return header, rows


def config_fingerprint(*parts: dict) -> str:
    """Stable hash of configuration dicts with every ``seed`` key removed."""

    def strip(obj):
        if isinstance(obj, dict):
            return {k: strip(v) for k, v in obj.items() if k != "seed"}
        if isinstance(obj, (list, tuple)):
            return [strip(v) for v in obj]
        return obj

    blob = json.dumps([strip(p) for p in parts], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _softmax_metrics(task: Task, x: np.ndarray) -> tuple[float, float]:
    """Mean test loss and accuracy over the model rows ``x``."""
    acc, loss = kernels.softmax_eval(task.test_features, task.test_labels, np.ascontiguousarray(x), task.n_classes)
    return float(loss.mean()), float(acc.mean())


def resolve_adversaries(g: DirectedGraph, atk: AttackConfig | None, seed: int) -> frozenset[int]:
    if atk is None:
        return frozenset()
    if atk.adversaries is not None:
        advs = frozenset(int(a) for a in atk.adversaries)
        if any(not 0 <= a < g.n for a in advs):
            raise InvalidCount("adversary id out of range")
        return advs
    if atk.strategy is None or atk.strategy.n_advs == 0:
        return frozenset()
    return place(atk.strategy, g, seed)


def run_simulation(g: DirectedGraph, task: Task, sim: SimConfig, atk: AttackConfig | None = None,
                   fingerprint: str | None = None, trace=None) -> RunRecord:
    """Run ``sim.n_epochs`` synchronous rounds and record honest-node metrics after each.

    Metrics after round ``t`` average over the nodes that were not attacking
    in that round, so every run on one seed shares its pre-attack prefix.

    ``trace``, when given, is called as ``trace(t, state, ctx)`` with the
    state before round ``t`` and once more with the final state.
    """
    if not is_strongly_connected(g):
        raise NotStronglyConnected("simulation requires a strongly connected graph")
    if task.kind == QUADRATIC and task.targets.shape[0] != g.n:
        raise ValueError("quadratic task must have one target per node")
    if task.kind == SOFTMAX and (task.shards is None or len(task.shards) != g.n):
        raise ValueError("softmax task must be partitioned over the graph's nodes")
    advs = resolve_adversaries(g, atk, sim.seed)
    ctx = SimContext(g, task, sim.alpha, advs,
                     epsilon=atk.epsilon if atk else 0.0,
                     t_attack=atk.t_attack if atk else 0,
                     batch_size=sim.batch_size, adversary_tracker=sim.adversary_tracker)
    n = g.n
    batch_rngs = [substream(sim.seed, "batch", i) for i in range(n)]
    if task.kind == QUADRATIC or sim.batch_size is None:
        full = [None] * n
        draw = lambda: full  # noqa: E731
    else:
        draw = lambda: [sample_batch(task, i, sim.batch_size, batch_rngs[i]) for i in range(n)]  # noqa: E731

    x0 = sim.init_scale * np.stack([substream(sim.seed, "init", i).standard_normal(task.dim) for i in range(n)])
    batches = draw()
    g0 = _batch_grads(task, x0, batches, np.zeros(n), np.arange(n))
    state = SimState(x0, g0.copy(), g0, batches)

    losses = np.empty(sim.n_epochs)
    accs = np.empty(sim.n_epochs) if task.kind == SOFTMAX else None
    dists = np.empty(sim.n_epochs) if task.kind == QUADRATIC else None
    # nodes count as honest until the attack begins
    phases = {}
    for key, members in ((False, np.arange(n)), (True, np.flatnonzero(~ctx.adversary_mask))):
        b_h = task.targets[members] if task.kind == QUADRATIC else None
        phases[key] = (members, b_h, None if b_h is None else b_h.mean(axis=0))
    for t in range(sim.n_epochs):
        if trace is not None:
            trace(t, state, ctx)
        state = epoch_step(state, ctx, t, draw())
        honest, b_h, x_star = phases[bool(advs) and t >= ctx.t_attack]
        xh = state.x[honest]
        if task.kind == SOFTMAX:
            losses[t], accs[t] = _softmax_metrics(task, xh)
        else:
            diff = xh[:, None, :] - b_h[None, :, :]
            losses[t] = 0.5 * float(np.mean(np.sum(diff**2, axis=2)))
            dists[t] = float(np.mean(np.sqrt(np.sum((xh - x_star) ** 2, axis=1))))
    if trace is not None:
        trace(sim.n_epochs, state, ctx)

    attacked = bool(advs)
    if fingerprint is None:
        # an attack without adversaries is indistinguishable from a clean run
        fingerprint = config_fingerprint(task.description, sim.to_dict(), atk.to_dict() if attacked else {})
    d_avg = avg_adversarial_distance(g, advs) if len(advs) >= 2 else None
    return RunRecord(fingerprint, sim.seed, task.kind, losses, accs, dists, tuple(sorted(advs)), d_avg,
                     atk.t_attack if attacked else None)
