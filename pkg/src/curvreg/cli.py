"""Command-line entry point: ``curvreg <train|eval-nc|eval-lp|distortion|case-study> [flags]``.

Every command writes plain files into ``--out`` (JSON, JSON lines, CSV and the
embedding text format) and no timestamps, so re-running a command with the
same flags reproduces its outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import shortest_path as _hop_distances

from .errors import CurvregError
from .evaluation import DEFAULT_REMOVAL, lp_evaluate, nc_accuracy, summary_csv
from .geometry import (FULL_DISTORTION_MAX_NODES, _tree_geodesics, curvature_field,
                       distortion_details, load_embedding, sample_pairs, save_embedding,
                       theorem_pass_fraction)
from .graph_core import (SAMPLED_PAIRS, Graph, all_pair_list, bfs_predecessors,
                         largest_connected_component, load_edge_list, load_labels, pair_paths,
                         sample_node_set)
from .synthetic import barbell_graph, cycle_graph, path_graph, star_graph, two_block_graph
from .trainer import TrainConfig, two_phase_train

log = logging.getLogger("curvreg")

_SYNTHETIC = {
    "path": lambda k: path_graph(k or 20),
    "cycle": lambda k: cycle_graph(k or 20),
    "star": lambda k: star_graph(k or 10),
    "barbell": lambda k: barbell_graph(k or 5),
    "two-block": lambda k: two_block_graph(k or 100)[0],
}


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# argument handling


def _add_graph_args(p: argparse.ArgumentParser, labels: bool = False) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--edges", help="whitespace-separated edge list")
    src.add_argument("--synthetic", metavar="NAME[:SIZE]",
                     help="built-in graph: path, cycle, star, barbell or two-block")
    p.add_argument("--lcc", action=argparse.BooleanOptionalAction, default=True,
                   help="keep only the largest connected component (default; --no-lcc keeps all)")
    if labels:
        p.add_argument("--labels", required=True, help="node label file (node token, label token)")


def _add_train_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--method", choices=("mf", "le", "sgns"), default="le")
    g.add_argument("--reg", choices=("c", "s", "a", "none"), default="none")
    g.add_argument("--dim", type=int, default=64)
    g.add_argument("--lambda", dest="lam", type=float, default=0.1)
    g.add_argument("--t", type=int, default=3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--sample-size", type=int, default=64, help="node sample size for --reg s")
    g.add_argument("--resample-per-round", action="store_true",
                   help="redraw sampled pairs / walks for every phase-1 round")
    g.add_argument("--walks", type=int, default=10, help="walks per node")
    g.add_argument("--walk-length", type=int, default=40)
    g.add_argument("--window", type=int, default=5)
    g.add_argument("--neg", type=int, default=5, help="negative samples (SGNS and MF)")
    g.add_argument("--p", type=float, default=1.0, help="return parameter of biased walks")
    g.add_argument("--q", type=float, default=1.0, help="in-out parameter of biased walks")
    g.add_argument("--lr", type=float, default=0.025, help="SGNS learning rate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curvreg", description="Curvature-regularized graph embedding")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an embedding")
    _add_graph_args(p)
    _add_train_args(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval-nc", help="node classification accuracy")
    _add_graph_args(p, labels=True)
    _add_train_args(p)
    p.add_argument("--embedding", help="evaluate this embedding instead of training one")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval-lp", help="link prediction mean average precision")
    _add_graph_args(p)
    _add_train_args(p)
    p.add_argument("--removal", type=float, default=DEFAULT_REMOVAL, help="fraction of edges removed")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("distortion", help="distortion and curvature report for an embedding")
    _add_graph_args(p)
    p.add_argument("--embedding", required=True)
    p.add_argument("--pairs", type=int, default=None,
                   help=f"sampled pair count (forced above {FULL_DISTORTION_MAX_NODES} nodes)")
    p.add_argument("--sample-size", type=int, default=64, help="nodes whose shortest paths feed the "
                   "curvature statistics")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report here as well as to stdout")

    p = sub.add_parser("case-study", help="paired baseline/regularized run with scatter data")
    p.add_argument("--graph", choices=("two-block", "path", "cycle"), default="two-block")
    p.add_argument("--size", type=int, default=None, help="graph size (block size for two-block)")
    _add_train_args(p)
    p.set_defaults(method="mf", reg="s", dim=16, lam=0.2, t=1, sample_size=160)
    p.add_argument("--pairs", type=int, default=500, help="pairs in the scatter data")
    p.add_argument("--out", required=True)
    return parser


def _graph_from_args(args, lcc: bool | None = None) -> Graph:
    if getattr(args, "edges", None):
        g = load_edge_list(args.edges)
    else:
        name, _, size = args.synthetic.partition(":")
        if name not in _SYNTHETIC:
            raise ValueError(f"unknown synthetic graph {name!r}; choose from {sorted(_SYNTHETIC)}")
        g = _SYNTHETIC[name](int(size) if size else None)
    if args.lcc if lcc is None else lcc:
        g = largest_connected_component(g)
    return g


def _config_from_args(args) -> TrainConfig:
    return TrainConfig(embedder=args.method, regularizer=args.reg, dim=args.dim, t=args.t, lam=args.lam,
                       tol=args.tol, seed=args.seed, sample_size=args.sample_size,
                       walks_per_node=args.walks, walk_length=args.walk_length, window=args.window,
                       k_neg=args.neg, mf_neg=args.neg, p=args.p, q=args.q, lr=args.lr,
                       resample_per_round=args.resample_per_round)


def _run_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}


def _method_name(config: TrainConfig) -> str:
    return config.embedder if config.regularizer == "none" else f"{config.embedder}-{config.reg_kind.short}"


def _dataset_name(args) -> str:
    return Path(args.edges).stem if getattr(args, "edges", None) else args.synthetic


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    graph = _graph_from_args(args)
    config = _config_from_args(args)
    X, trace = two_phase_train(graph, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_embedding(out / "embedding.txt", X, graph.labels)
    _write(out / "trace.jsonl", trace.to_jsonl())
    meta = {"command": "train", "run_config": _run_config(args), "train_config": asdict(config),
            "graph": {"n": graph.n, "m": graph.m, "digest": graph.digest()},
            "path_cache": trace.meta.get("paths"),
            "n_curvature_samples": trace.meta.get("n_curvature_samples"),
            "init": trace.meta.get("init"), "diagnostics": trace.diagnostics}
    _write(out / "run.json", _dump(meta))
    print(f"wrote {out / 'embedding.txt'} ({X.shape[0]} x {X.shape[1]})")
    return 0


def _aligned(X: np.ndarray, ids, graph: Graph) -> np.ndarray:
    """Reorder embedding rows to the graph's node order using the sidecar ids."""
    if ids is None:
        if X.shape[0] != graph.n:
            raise ValueError(f"embedding has {X.shape[0]} rows but the graph has {graph.n} nodes")
        return X
    index = {t: k for k, t in enumerate(ids)}
    missing = [t for t in graph.labels if t not in index]
    if missing:
        raise ValueError(f"embedding has no row for node {missing[0]!r}")
    return X[[index[t] for t in graph.labels]]


def cmd_eval_nc(args) -> int:
    full = _graph_from_args(args, lcc=False)
    labels = load_labels(args.labels, full)
    graph = largest_connected_component(full) if args.lcc else full
    labels = labels.reindex(graph)
    if len(labels) == 0:
        raise ValueError("no labelled node remains in the graph")
    if args.embedding:
        X, ids = load_embedding(args.embedding)
        X = _aligned(X, ids, graph)
        config = None
        cfg_echo = {"embedding": args.embedding}
        method = Path(args.embedding).stem
    else:
        config = _config_from_args(args)
        X = two_phase_train(graph, config)[0]
        cfg_echo = asdict(config)
        method = _method_name(config)
    report = nc_accuracy(X, labels, repeats=args.repeats, seed=args.seed, config=cfg_echo)
    out = Path(args.out)
    _write(out / "report.jsonl", report.to_json() + "\n")
    _write(out / "summary.csv", summary_csv([report], method, _dataset_name(args)))
    _write(out / "run.json", _dump({"command": "eval-nc", "run_config": _run_config(args)}))
    print(f"accuracy {report.value:.4f} +- {report.sd:.4f} over {args.repeats} splits")
    return 0


def cmd_eval_lp(args) -> int:
    graph = _graph_from_args(args)
    config = _config_from_args(args)
    report = lp_evaluate(graph, config, removal_frac=args.removal, seed=args.seed, repeats=args.repeats)
    out = Path(args.out)
    _write(out / "report.jsonl", report.to_json() + "\n")
    _write(out / "summary.csv", summary_csv([report], _method_name(config), _dataset_name(args)))
    _write(out / "run.json", _dump({"command": "eval-lp", "run_config": _run_config(args)}))
    print(f"MAP {report.value:.4f} (removal {args.removal}, {args.repeats} split(s))")
    return 0


def distortion_report(X: np.ndarray, graph: Graph, pairs: int | None = None, sample_size: int = 64,
                      seed: int = 0) -> dict:
    if X.shape[0] != graph.n:
        raise ValueError(f"embedding has {X.shape[0]} rows but the graph has {graph.n} nodes")
    if pairs is None and graph.n > FULL_DISTORTION_MAX_NODES:
        pairs = 100 * graph.n
    res = distortion_details(X, graph, None if pairs is None else sample_pairs(graph, pairs, seed))
    nodes = sample_node_set(graph, min(sample_size, graph.n), seed)
    paths = pair_paths(graph, all_pair_list(nodes), source=SAMPLED_PAIRS)
    report = {"rho": res.rho, "mode": res.mode, "pairs_requested": pairs, "pairs_used": res.pairs_used,
              "coincident_skipped": res.coincident_skipped, "unreachable_skipped": res.unreachable_skipped,
              "n": graph.n, "dim": int(X.shape[1]), "curvature_paths": len(paths),
              "curvature": None, "theorem_pass_fraction": None}
    if len(paths):
        report["curvature"] = curvature_field(X, paths).stats()
        report["theorem_pass_fraction"] = theorem_pass_fraction(X, paths)
    return report


def cmd_distortion(args) -> int:
    graph = _graph_from_args(args)
    X, ids = load_embedding(args.embedding)
    if ids is None and X.shape[0] != graph.n:
        raise ValueError(f"embedding has {X.shape[0]} rows but the graph has {graph.n} nodes")
    X = _aligned(X, ids, graph)
    report = distortion_report(X, graph, args.pairs, args.sample_size, args.seed)
    text = _dump(report)
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)
    return 0


def scatter_records(X: np.ndarray, graph: Graph, pairs: np.ndarray) -> list[tuple]:
    """``(i, j, hops, geodesic, euclidean)`` for each pair, in input order."""
    rows = []
    cache: dict[int, tuple] = {}
    for i, j in pairs:
        i, j = int(i), int(j)
        if i not in cache:
            hops = _hop_distances(graph.csr(), unweighted=True, indices=i)
            cache[i] = (_tree_geodesics(X, bfs_predecessors(graph, i), i), hops)
        geo, hops = cache[i]
        rows.append((i, j, int(hops[j]) if np.isfinite(hops[j]) else -1, float(geo[j]), float(np.linalg.norm(X[i] - X[j]))))
    return rows


def cmd_case_study(args) -> int:
    graph = _SYNTHETIC[args.graph](args.size)
    config = _config_from_args(args)
    if config.regularizer == "none":
        raise ValueError("case-study compares against a regularized run; pass --reg c, s or a")
    base_cfg = TrainConfig(**{**asdict(config), "regularizer": "none", "lam": 0.0})
    X0 = two_phase_train(graph, base_cfg)[0]
    X1 = two_phase_train(graph, config)[0]
    pairs = sample_pairs(graph, args.pairs, args.seed)
    out = Path(args.out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "i", "j", "graph_distance", "geodesic_distance", "euclidean_distance"])
    rhos = {}
    for name, X in (("baseline", X0), ("regularized", X1)):
        rhos[name] = distortion_details(X, graph).rho
        for rec in scatter_records(X, graph, pairs):
            w.writerow([name, rec[0], rec[1], rec[2], repr(rec[3]), repr(rec[4])])
    _write(out / "scatter.csv", buf.getvalue())
    report = {"graph": args.graph, "n": graph.n, "m": graph.m, "pairs": int(args.pairs),
              "rho": rhos, "baseline_config": asdict(base_cfg), "regularized_config": asdict(config)}
    _write(out / "case_study.json", _dump(report))
    _write(out / "run.json", _dump({"command": "case-study", "run_config": _run_config(args)}))
    print(f"rho baseline {rhos['baseline']:.4f}  regularized {rhos['regularized']:.4f}")
    return 0


COMMANDS = {"train": cmd_train, "eval-nc": cmd_eval_nc, "eval-lp": cmd_eval_lp,
            "distortion": cmd_distortion, "case-study": cmd_case_study}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CurvregError, ValueError, OSError) as exc:
        print(f"curvreg {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
