"""Attack potency metrics over accuracy curves.

Curves are fractions in ``[0, 1]``; AAL works in percentage points so it is
``100 * sum(clean - attacked)`` over the post-attack epochs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FingerprintMismatch, LengthMismatch, NonPositiveBaseline
from .fedsim import RunRecord

Z95 = 1.959963984540054


@dataclass(frozen=True)
class PairedRun:
    attacked: RunRecord
    clean: RunRecord


def _series(record) -> np.ndarray:
    if isinstance(record, RunRecord):
        return record.accuracy if record.accuracy is not None else record.dist_to_opt
    return np.asarray(record, dtype=np.float64)


def attack_accuracy_loss(pr: PairedRun | tuple, t_attack: int | None = None) -> float:
    """Summed accuracy gap (points) from ``t_attack`` through the final epoch, both inclusive."""
    attacked, clean = (pr.attacked, pr.clean) if isinstance(pr, PairedRun) else pr
    if t_attack is None:
        t_attack = attacked.t_attack if isinstance(attacked, RunRecord) else None
    if t_attack is None:
        raise ValueError("t_attack is required")
    a, c = _series(attacked), _series(clean)
    if a.shape != c.shape:
        raise LengthMismatch(f"attacked has {a.size} epochs, clean has {c.size}")
    if not 0 <= t_attack < a.size:
        raise ValueError(f"t_attack {t_attack} outside 0..{a.size - 1}")
    return float(np.sum(100.0 * c[t_attack:] - 100.0 * a[t_attack:]))


def attack_advantage(aal_best: float, aal_next: float) -> float:
    """Relative AAL gain of one attack over another, in percent."""
    if not aal_next > 0:
        raise NonPositiveBaseline(f"baseline AAL {aal_next} must be positive")
    return 100.0 * (aal_best - aal_next) / aal_next


@dataclass
class Aggregate:
    n: int
    mean: np.ndarray
    std: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    aal_mean: float | None = None
    aal_std: float | None = None
    aals: np.ndarray | None = None

    def rows(self):
        fmt = lambda v: format(float(v), ".17g")  # noqa: E731
        return [[str(e), fmt(m), fmt(s), fmt(lo), fmt(hi)]
                for e, (m, s, lo, hi) in enumerate(zip(self.mean, self.std, self.ci_low, self.ci_high))]


def _check_fingerprints(records: Sequence[RunRecord]) -> None:
    prints = {r.fingerprint for r in records}
    if len(prints) > 1:
        raise FingerprintMismatch(f"records come from {len(prints)} different configurations")


def aggregate(records: Sequence, stat: str | None = None) -> Aggregate:
    """Pointwise mean, sample std and normal 95% CI across seeds.

    ``records`` are RunRecords or PairedRuns (the attacked curve is
    aggregated and per-seed AAL statistics are added). ``stat`` is accepted
    for symmetry with the CLI; every statistic is always computed.
    """
    if stat not in (None, "mean", "std", "ci95"):
        raise ValueError(f"unknown statistic {stat!r}")
    if len(records) < 2:
        raise ValueError("aggregate needs at least two records")
    paired = isinstance(records[0], PairedRun)
    runs = [p.attacked for p in records] if paired else list(records)
    _check_fingerprints(runs)
    if paired:
        _check_fingerprints([p.clean for p in records])
    curves = np.stack([_series(r) for r in runs])
    n = curves.shape[0]
    mean = curves.mean(axis=0)
    std = curves.std(axis=0, ddof=1)
    half = Z95 * std / math.sqrt(n)
    agg = Aggregate(n, mean, std, mean - half, mean + half)
    if paired:
        aals = np.array([attack_accuracy_loss(p) for p in records])
        agg.aals = aals
        agg.aal_mean = float(aals.mean())
        agg.aal_std = float(aals.std(ddof=1))
    return agg


def advantage_table(aal_means: dict[str, float]) -> dict[str, float | None]:
    """Each strategy's advantage over the best of the others (None when undefined)."""
    out = {}
    for name, value in aal_means.items():
        others = [v for k, v in aal_means.items() if k != name]
        if not others:
            out[name] = None
            continue
        try:
            out[name] = attack_advantage(value, max(others))
        except NonPositiveBaseline:
            out[name] = None
    return out


def write_aggregate_csv(agg: Aggregate, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean", "std", "ci_low", "ci_high"])
        w.writerows(agg.rows())


def write_summary_csv(aggs: dict[str, Aggregate], path) -> None:
    adv = advantage_table({k: a.aal_mean for k, a in aggs.items()})
    fmt = lambda v: "" if v is None else format(float(v), ".17g")  # noqa: E731
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "aal_mean", "aal_std", "n_seeds", "advantage_vs_next_best"])
        for name, agg in aggs.items():
            w.writerow([name, fmt(agg.aal_mean), fmt(agg.aal_std), agg.n, fmt(adv[name])])
