"""Config-driven sweeps: one clean run and one attacked run per strategy for every seed.

Config files are JSON. Unknown keys are rejected; every omitted key takes
the default listed in ``DEFAULTS`` (see the README for the reference).

Output layout::

    <output_dir>/<config_hash>/manifest.json
    <output_dir>/<config_hash>/<seed>/{clean,<strategy>}.csv, graph.txt,
                                      placements.csv, run.json
    <output_dir>/<config_hash>/aggregate/{clean,<strategy>}.csv, summary.csv
"""

from __future__ import annotations

import copy
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .centrality import CentralityMeasure, adversary_count
from .errors import ParseError, ValidationError
from .fedsim import (POISONED_GRADIENT, QUADRATIC, SOFTMAX, TRACKING, AttackConfig, Partition, RunRecord,
                     SimConfig, config_fingerprint, partition_data, quadratic_task, run_simulation, softmax_task)
from .graph import FAMILIES, GraphSpec, generate_strongly_connected, load_edge_list
from .metrics import PairedRun, aggregate, write_aggregate_csv, write_summary_csv
from .placement import PlacementStrategy, format_adversaries
from .rng import derive_seed

log = logging.getLogger(__name__)

GRAPH_DEFAULTS = {
    "ER": {"n": 25, "p_edge": 0.5},
    "PreferentialAttachment": {"n": 25, "m_attach": 2},
    "DirectedGeometric": {"n": 25, "radius": 0.2},
    "KOut": {"n": 25, "k": 5},
    "EdgeList": {},
}
TASK_DEFAULTS = {
    SOFTMAX: {"n_features": 16, "n_classes": 10, "n_train": 4000, "n_test": 2000, "separation": 1.0},
    QUADRATIC: {"dim": 1, "scale": 1.0},
}
DEFAULTS = {
    "graph": {"max_attempts": 1000},
    "sim": {"alpha": 0.05, "batch_size": 32, "n_epochs": 100, "partition": {"kind": "iid"},
            "init_scale": 0.01, "adversary_tracker": POISONED_GRADIENT},
    "attack": {"epsilon": 1.25, "t_attack": 25, "adversary_fraction": 0.2,
               "strategies": ["random", "eigenvector", "maxspan"], "direction": "out"},
    "n_seeds": 20,
    "seed": 0,
    "output_dir": "runs",
}
_TOP_KEYS = {"graph", "task", "sim", "attack", "n_seeds", "seed", "output_dir"}
_GRAPH_KEYS = {"family", "n", "p_edge", "m_attach", "radius", "k", "path", "max_attempts"}
_SIM_KEYS = set(DEFAULTS["sim"])
_ATTACK_KEYS = set(DEFAULTS["attack"]) | {"n_advs"}
_PARTITION_KEYS = {"kind", "classes_per_node"}


@dataclass
class ExperimentConfig:
    graph: GraphSpec
    max_attempts: int
    task: dict
    sim: SimConfig
    epsilon: float
    t_attack: int
    n_advs: int
    strategies: list[str]
    direction: str
    n_seeds: int
    seed: int
    output_dir: str
    resolved: dict

    @property
    def config_hash(self) -> str:
        blob = json.dumps({k: v for k, v in self.resolved.items() if k != "output_dir"}, sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


# ---------------------------------------------------------------- parsing


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ValidationError(where or "<root>", "expected an object")
    for key in obj:
        if key not in allowed:
            name = f"{where}.{key}" if where else key
            raise ParseError(f"unknown config key {name!r}")


def _number(value, path, *, lo=None, hi=None, lo_open=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ValidationError(path, f"expected an integer, got {value!r}")
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise ValidationError(path, f"{value} is below the allowed range")
    if hi is not None and value > hi:
        raise ValidationError(path, f"{value} is above the allowed range")
    return int(value) if integer else float(value)


def resolve_config(raw: dict) -> dict:
    """Expand defaults and validate; returns a plain dict."""
    _check_keys(raw, _TOP_KEYS, "")
    for key in ("graph", "task"):
        if key not in raw:
            raise ValidationError(key, "is required")
    cfg = copy.deepcopy(DEFAULTS)
    for key in ("n_seeds", "seed", "output_dir"):
        if key in raw:
            cfg[key] = raw[key]

    graph = raw["graph"]
    _check_keys(graph, _GRAPH_KEYS, "graph")
    family = graph.get("family")
    if family not in FAMILIES:
        raise ValidationError("graph.family", f"must be one of {', '.join(FAMILIES)}")
    cfg["graph"] = dict(cfg["graph"], family=family, **GRAPH_DEFAULTS[family])
    cfg["graph"].update(graph)
    g = cfg["graph"]
    allowed = {"family", "max_attempts", *GRAPH_DEFAULTS[family]} | ({"path"} if family == "EdgeList" else set())
    for key in g:
        if key not in allowed:
            raise ValidationError(f"graph.{key}", f"not a parameter of {family}")
    if family == "EdgeList":
        if not isinstance(g.get("path"), str):
            raise ValidationError("graph.path", "edge-list path is required")
    else:
        g["n"] = _number(g["n"], "graph.n", lo=2, integer=True)
    if "p_edge" in g:
        g["p_edge"] = _number(g["p_edge"], "graph.p_edge", lo=0.0, hi=1.0)
    if "radius" in g:
        g["radius"] = _number(g["radius"], "graph.radius", lo=0.0, lo_open=True, hi=math.sqrt(2.0))
    if "k" in g:
        g["k"] = _number(g["k"], "graph.k", lo=1, hi=g["n"] - 1, integer=True)
    if "m_attach" in g:
        g["m_attach"] = _number(g["m_attach"], "graph.m_attach", lo=1, hi=g["n"] - 1, integer=True)
    g["max_attempts"] = _number(g["max_attempts"], "graph.max_attempts", lo=1, integer=True)

    task = raw["task"]
    if isinstance(task, str):
        task = {"kind": task}
    if not isinstance(task, dict) or task.get("kind") not in TASK_DEFAULTS:
        raise ValidationError("task.kind", f"must be one of {', '.join(TASK_DEFAULTS)}")
    _check_keys(task, {"kind", *TASK_DEFAULTS[task["kind"]]}, "task")
    cfg["task"] = dict(kind=task["kind"], **TASK_DEFAULTS[task["kind"]])
    cfg["task"].update(task)
    t = cfg["task"]
    for key in ("n_features", "n_classes", "n_train", "n_test", "dim"):
        if key in t:
            t[key] = _number(t[key], f"task.{key}", lo=1 if key != "n_classes" else 2, integer=True)
    for key in ("separation", "scale"):
        if key in t:
            t[key] = _number(t[key], f"task.{key}", lo=0.0)

    sim = raw.get("sim", {})
    _check_keys(sim, _SIM_KEYS, "sim")
    cfg["sim"].update(sim)
    s = cfg["sim"]
    s["alpha"] = _number(s["alpha"], "sim.alpha", lo=0.0, lo_open=True)
    if s["batch_size"] is not None:
        s["batch_size"] = _number(s["batch_size"], "sim.batch_size", lo=1, integer=True)
    s["n_epochs"] = _number(s["n_epochs"], "sim.n_epochs", lo=1, integer=True)
    s["init_scale"] = _number(s["init_scale"], "sim.init_scale", lo=0.0)
    if s["adversary_tracker"] not in (POISONED_GRADIENT, TRACKING):
        raise ValidationError("sim.adversary_tracker", f"must be {POISONED_GRADIENT} or {TRACKING}")
    part = s["partition"]
    _check_keys(part, _PARTITION_KEYS, "sim.partition")
    if part.get("kind") not in ("iid", "noniid"):
        raise ValidationError("sim.partition.kind", "must be iid or noniid")
    if part["kind"] == "noniid":
        part.setdefault("classes_per_node", 3)
        part["classes_per_node"] = _number(part["classes_per_node"], "sim.partition.classes_per_node",
                                           lo=1, hi=t.get("n_classes", 1), integer=True)
    elif "classes_per_node" in part:
        raise ValidationError("sim.partition.classes_per_node", "only valid for noniid partitions")

    atk = raw.get("attack", {})
    _check_keys(atk, _ATTACK_KEYS, "attack")
    cfg["attack"].update(atk)
    a = cfg["attack"]
    a["epsilon"] = _number(a["epsilon"], "attack.epsilon", lo=0.0)
    a["t_attack"] = _number(a["t_attack"], "attack.t_attack", lo=0, hi=s["n_epochs"] - 1, integer=True)
    if "n_advs" in atk:
        a.pop("adversary_fraction", None)
        a["n_advs"] = _number(a["n_advs"], "attack.n_advs", lo=0, integer=True)
    else:
        a["adversary_fraction"] = _number(a["adversary_fraction"], "attack.adversary_fraction",
                                          lo=0.0, lo_open=True, hi=1.0)
    if not isinstance(a["strategies"], list) or not a["strategies"]:
        raise ValidationError("attack.strategies", "must be a non-empty list")
    valid = {"random", "maxspan", *(m.value for m in CentralityMeasure)}
    for i, name in enumerate(a["strategies"]):
        if name not in valid:
            raise ValidationError(f"attack.strategies[{i}]", f"unknown strategy {name!r}")
    if len(set(a["strategies"])) != len(a["strategies"]):
        raise ValidationError("attack.strategies", "duplicate strategy")
    if a["direction"] not in ("out", "in", "undirected"):
        raise ValidationError("attack.direction", "must be out, in or undirected")

    cfg["n_seeds"] = _number(cfg["n_seeds"], "n_seeds", lo=1, integer=True)
    cfg["seed"] = _number(cfg["seed"], "seed", lo=0, integer=True)
    if not isinstance(cfg["output_dir"], str):
        raise ValidationError("output_dir", "must be a string")
    return cfg


def config_from_dict(raw: dict) -> ExperimentConfig:
    cfg = resolve_config(raw)
    g = cfg["graph"]
    spec = GraphSpec(g["family"], g.get("n"), g.get("p_edge"), g.get("m_attach"), g.get("radius"), g.get("k"),
                     g.get("path"))
    if g["family"] != "EdgeList":
        spec.validate()
    s = cfg["sim"]
    part = Partition(s["partition"]["kind"], s["partition"].get("classes_per_node"))
    sim = SimConfig(s["alpha"], s["batch_size"], s["n_epochs"], part, 0, s["init_scale"], s["adversary_tracker"])
    a = cfg["attack"]
    n_nodes = g.get("n") or load_edge_list(g["path"]).n
    n_advs = a["n_advs"] if "n_advs" in a else adversary_count(a["adversary_fraction"], n_nodes)
    if n_advs >= n_nodes:
        raise ValidationError("attack.n_advs", f"{n_advs} adversaries leave no honest node")
    return ExperimentConfig(spec, g["max_attempts"], cfg["task"], sim, a["epsilon"], a["t_attack"], n_advs,
                            list(a["strategies"]), a["direction"], cfg["n_seeds"], cfg["seed"], cfg["output_dir"],
                            cfg)


def parse_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return config_from_dict(raw)


# ---------------------------------------------------------------- running


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    return "".join(",".join(r) + "\n" for r in [header, *rows])


def write_run_csv(record: RunRecord, path: Path) -> None:
    atomic_write_text(path, _csv_text(*record.csv_rows()))


def build_task(cfg: ExperimentConfig, n: int, run_seed: int):
    t = cfg.task
    if t["kind"] == QUADRATIC:
        return quadratic_task(n, t["dim"], run_seed, t["scale"])
    base = softmax_task(run_seed, t["n_features"], t["n_classes"], t["n_train"], t["n_test"], t["separation"])
    return partition_data(base, n, cfg.sim.partition, run_seed, cfg.sim.batch_size)


def run_seed_job(cfg: ExperimentConfig, index: int, root: Path) -> dict:
    """All runs of one seed; writes that seed's directory and returns its manifest entry."""
    run_seed = cfg.seed + index
    if cfg.graph.family == "EdgeList":
        g, base, graph_seed = load_edge_list(cfg.graph.path), None, None
    else:
        base = derive_seed(run_seed, "graph")
        g, graph_seed = generate_strongly_connected(cfg.graph.with_seed(base), cfg.max_attempts)
    task = build_task(cfg, g.n, run_seed)
    sim = SimConfig(cfg.sim.alpha, cfg.sim.batch_size, cfg.sim.n_epochs, cfg.sim.partition, run_seed,
                    cfg.sim.init_scale, cfg.sim.adversary_tracker)
    base_print = config_fingerprint(cfg.resolved)
    seed_dir = root / str(run_seed)
    clean = run_simulation(g, task, sim, None, fingerprint=f"{base_print}-clean")
    write_run_csv(clean, seed_dir / "clean.csv")
    placements = []
    entry = {"seed": run_seed, "graph_seed": graph_seed,
             "graph_attempts": None if base is None else graph_seed - base + 1, "n_nodes": g.n, "n_edges": g.n_edges, "strategies": {}}
    for label in cfg.strategies:
        strategy = PlacementStrategy.from_label(label, cfg.n_advs, cfg.direction)
        atk = AttackConfig(cfg.epsilon, cfg.t_attack, strategy if cfg.n_advs else None)
        rec = run_simulation(g, task, sim, atk, fingerprint=f"{base_print}-{label}")
        write_run_csv(rec, seed_dir / f"{label}.csv")
        placements.append([label, str(run_seed), format_adversaries(rec.adversaries)])
        entry["strategies"][label] = {"adversaries": list(rec.adversaries), "d_avg": rec.d_avg}
    atomic_write_text(seed_dir / "placements.csv", _csv_text(["strategy", "seed", "adversaries"], placements))
    lines = "".join(f"{i} {j}\n" for i, j in g.edges)
    atomic_write_text(seed_dir / "graph.txt", f"# n={g.n}\n" + lines)
    atomic_write_text(seed_dir / "run.json", json.dumps({"config": cfg.resolved, **entry}, indent=2, sort_keys=True) + "\n")
    return entry


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    """Run every seed, write per-run and aggregate CSVs plus ``manifest.json``; returns the manifest."""
    root = Path(cfg.output_dir) / cfg.config_hash
    root.mkdir(parents=True, exist_ok=True)
    manifest = {"tool_version": __version__, "config": cfg.resolved, "config_hash": cfg.config_hash,
                "seeds": [cfg.seed + i for i in range(cfg.n_seeds)], "runs": [], "complete": False}
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(run_seed_job, cfg, i, root) for i in range(cfg.n_seeds)]
                manifest["runs"] = [f.result() for f in futures]
        else:
            manifest["runs"] = [run_seed_job(cfg, i, root) for i in range(cfg.n_seeds)]
        write_aggregates(root, cfg.strategies, manifest["seeds"], cfg.t_attack)
        manifest["complete"] = True
    except Exception as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        manifest["finished_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
        atomic_write_text(root / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# ---------------------------------------------------------------- reporting


def read_run_csv(path: Path, fingerprint: str, seed: int, t_attack: int | None) -> RunRecord:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header) if name != "epoch"}
    if "honest_mean_accuracy" in cols:
        return RunRecord(fingerprint, seed, SOFTMAX, cols["honest_mean_loss"], accuracy=cols["honest_mean_accuracy"],
                         t_attack=t_attack)
    return RunRecord(fingerprint, seed, QUADRATIC, cols["honest_mean_loss"], dist_to_opt=cols["dist_to_opt"],
                     t_attack=t_attack)


def write_aggregates(root: Path, strategies, seeds, t_attack: int) -> dict:
    """Aggregate stored run CSVs under ``root``; used by both the runner and ``report``."""
    agg_dir = root / "aggregate"
    agg_dir.mkdir(exist_ok=True)
    cleans = [read_run_csv(root / str(s) / "clean.csv", "clean", s, None) for s in seeds]
    out = {}
    if len(seeds) >= 2:
        agg = aggregate(cleans)
        atomic_write_text(agg_dir / "clean.csv", _csv_text(["epoch", "mean", "std", "ci_low", "ci_high"], agg.rows()))
    for label in strategies:
        pairs = [PairedRun(read_run_csv(root / str(s) / f"{label}.csv", label, s, t_attack), c)
                 for s, c in zip(seeds, cleans)]
        if len(pairs) >= 2:
            out[label] = aggregate(pairs)
            write_aggregate_csv(out[label], agg_dir / f"{label}.csv")
    if out:
        write_summary_csv(out, agg_dir / "summary.csv")
    return out


def report(run_dir: str | os.PathLike) -> dict:
    """Recompute aggregates from the run CSVs and manifest in ``run_dir``."""
    root = Path(run_dir)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    cfg = manifest["config"]
    return write_aggregates(root, cfg["attack"]["strategies"], manifest["seeds"], cfg["attack"]["t_attack"])
