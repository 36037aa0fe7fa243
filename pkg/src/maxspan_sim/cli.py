"""Command-line front end: ``maxspan-sim <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .centrality import CentralityMeasure, compute, similarity_curve
from .errors import MaxspanError
from .experiment import (atomic_write_text, build_task, config_from_dict, parse_config, report, run_experiment,
                         write_run_csv)
from .fedsim import AttackConfig, SimConfig, run_simulation
from .graph import FAMILIES, GraphSpec, generate, generate_strongly_connected, load_edge_list, write_edge_list
from .placement import MAXSPAN, PlacementStrategy, format_adversaries, maxspan_place, place
from .rng import derive_seed

log = logging.getLogger("maxspan_sim")

DEFAULT_FRACTIONS = tuple(round(0.1 * i, 10) for i in range(1, 11))


def _emit(header, rows, out):
    text = "".join(",".join(map(str, r)) + "\n" for r in [header, *rows])
    if out:
        atomic_write_text(Path(out), text)
    else:
        sys.stdout.write(text)


def _fractions(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from None


def _default_jobs() -> int:
    raw = os.environ.get("MAXSPAN_SIM_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------- commands


def cmd_gen_graph(args) -> int:
    spec = GraphSpec(args.family, args.n, args.p_edge, args.m_attach, args.radius, args.k, None, args.seed)
    header = [f"family={args.family} n={args.n} seed={args.seed}"]
    if args.strongly_connected:
        g, used = generate_strongly_connected(spec, args.max_attempts)
        header.append(f"seed_used={used}")
    else:
        g = generate(spec)
    write_edge_list(g, args.out, header=header)
    return 0


def cmd_centrality(args) -> int:
    g = load_edge_list(args.graph)
    vec = compute(g, CentralityMeasure(args.measure))
    _emit(["node", "score"], [[i, format(float(s), ".17g")] for i, s in enumerate(vec.scores)], args.out)
    return 0


def cmd_similarity(args) -> int:
    g = load_edge_list(args.graph)
    curve = similarity_curve(g, args.fractions)
    _emit(["fraction", "score"], [[format(f, "g"), format(float(s), ".17g")] for f, s in curve], args.out)
    return 0


def cmd_place(args) -> int:
    g = load_edge_list(args.graph)
    if args.strategy == MAXSPAN and args.first is not None:
        advs = maxspan_place(g, args.n_advs, g.n, args.seed, first=args.first, direction=args.direction)
    else:
        advs = place(PlacementStrategy.from_label(args.strategy, args.n_advs, args.direction), g, args.seed)
    _emit(["strategy", "seed", "adversaries"], [[args.strategy, args.seed, format_adversaries(advs)]], args.out)
    return 0


def cmd_simulate(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        cfg = config_from_dict(json.load(fh))
    seed = cfg.seed if args.seed is None else args.seed
    if args.graph:
        g, graph_seed = load_edge_list(args.graph), None
    else:
        g, graph_seed = generate_strongly_connected(cfg.graph.with_seed(derive_seed(seed, "graph")), cfg.max_attempts)
    task = build_task(cfg, g.n, seed)
    sim = SimConfig(cfg.sim.alpha, cfg.sim.batch_size, cfg.sim.n_epochs, cfg.sim.partition, seed,
                    cfg.sim.init_scale, cfg.sim.adversary_tracker)
    atk = None
    if args.strategy:
        atk = AttackConfig(cfg.epsilon, cfg.t_attack, PlacementStrategy.from_label(args.strategy, cfg.n_advs,
                                                                                    cfg.direction))
    rec = run_simulation(g, task, sim, atk)
    out = Path(args.out)
    write_run_csv(rec, out)
    side = {"seed": seed, "graph_seed": graph_seed, "strategy": args.strategy, "adversaries": list(rec.adversaries),
            "d_avg": rec.d_avg, "config": cfg.resolved, "tool_version": __version__}
    atomic_write_text(out.with_suffix(".json"), json.dumps(side, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_report(args) -> int:
    aggs = report(args.run_dir)
    for name, agg in aggs.items():
        print(f"{name}: AAL {agg.aal_mean:.3f} ± {agg.aal_std:.3f} over {agg.n} seeds")
    return 0


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if args.seeds is not None or args.out is not None:
        raw = dict(cfg.resolved)
        if args.seeds is not None:
            raw["n_seeds"] = args.seeds
        if args.out is not None:
            raw["output_dir"] = args.out
        cfg = config_from_dict(raw)
    manifest = run_experiment(cfg, jobs=args.jobs)
    print(os.path.join(cfg.output_dir, manifest["config_hash"]))
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maxspan-sim", description="Adversary placement experiments on directed graphs.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("gen-graph", help="draw a graph and write it as an edge list")
    q.add_argument("--family", required=True, choices=[f for f in FAMILIES if f != "EdgeList"])
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--p-edge", type=float)
    q.add_argument("--m-attach", type=int)
    q.add_argument("--radius", type=float)
    q.add_argument("--k", type=int)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--strongly-connected", action="store_true", help="retry seeds until strongly connected")
    q.add_argument("--max-attempts", type=int, default=1000)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_gen_graph)

    q = sub.add_parser("centrality", help="score every node with one measure")
    q.add_argument("--graph", required=True)
    q.add_argument("--measure", required=True, choices=[m.value for m in CentralityMeasure])
    q.add_argument("--out")
    q.set_defaults(func=cmd_centrality)

    q = sub.add_parser("similarity", help="centrality similarity score over a grid of adversary fractions")
    q.add_argument("--graph", required=True)
    q.add_argument("--fractions", type=_fractions, default=list(DEFAULT_FRACTIONS))
    q.add_argument("--out")
    q.set_defaults(func=cmd_similarity)

    q = sub.add_parser("place", help="choose adversaries with one strategy")
    q.add_argument("--graph", required=True)
    q.add_argument("--strategy", required=True)
    q.add_argument("--n-advs", type=int, required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--first", type=int, help="pin the first maxspan pick")
    q.add_argument("--direction", default="out", choices=["out", "in", "undirected"])
    q.add_argument("--out")
    q.set_defaults(func=cmd_place)

    q = sub.add_parser("simulate", help="one training run (clean unless --strategy is given)")
    q.add_argument("--config", required=True)
    q.add_argument("--seed", type=int)
    q.add_argument("--graph", help="edge-list file; default draws a graph from the config")
    q.add_argument("--strategy")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("run", help="full sweep from a config file")
    q.add_argument("--config", required=True)
    q.add_argument("--seeds", type=int, help="override n_seeds")
    q.add_argument("--jobs", type=int, default=_default_jobs())
    q.add_argument("--out", help="override output_dir")
    q.set_defaults(func=cmd_run)

    q = sub.add_parser("report", help="recompute aggregates from stored run CSVs")
    q.add_argument("run_dir")
    q.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (MaxspanError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
