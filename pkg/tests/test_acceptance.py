"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the status lines also appear
in the terminal summary under "acceptance criteria".
"""

import itertools
import math
import os
import time
from pathlib import Path

import networkx as nx
import numpy as np
import pytest

from curvreg.cli import main as cli_main
from curvreg.embedders import LeObjective, MfObjective, sgns_batch_loss_grad
from curvreg.evaluation import (logreg_loss_grad, lp_evaluate, mean_average_precision, nc_accuracy)
from curvreg.geometry import curvature_field, distortion
from curvreg.graph_core import (Graph, all_pairs_paths, largest_connected_component, load_edge_list,
                                load_labels, shortest_path)
from curvreg.regularizers import RegularizerKind, build_state, omega_gradient, omega_loss
from curvreg.synthetic import path_graph, two_block_graph
from curvreg.trainer import TrainConfig, two_phase_train

from acceptance_log import verdict
from oracles import (adjacency_sets, average_precision_oracle, canonical_shortest_path, central_difference,
                     curvature_count, distortion_oracle, rel_err)

RIGHT_ANGLE_RHO = (4 + 2 * math.sqrt(2)) / 6


def _random_graph(rng, n, p):
    edges = [(i, j) for i, j in itertools.combinations(range(n), 2) if rng.random() < p]
    return Graph(n, edges or [(0, 1)])


# -- 1 -------------------------------------------------------------------------


def test_criterion_1_distortion_unit_truth():
    start = time.perf_counter()
    errs = []
    for n in (3, 10, 50):
        X = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
        errs.append(abs(distortion(X, path_graph(n)) - 1.0))
    corner = np.array([[0, 0], [1, 0], [1, 1]], float)
    oracle = distortion_oracle(corner.tolist(), 3, [(0, 1), (1, 2)])
    oracle_err = abs(oracle - RIGHT_ANGLE_RHO)
    corner_err = abs(distortion(corner, path_graph(3)) - RIGHT_ANGLE_RHO)
    elapsed = time.perf_counter() - start
    ok = max(errs) < 1e-9 and oracle_err < 1e-9 and corner_err < 1e-9 and elapsed < 1.0
    verdict(1, ok, f"max line err {max(errs):.1e}, right-angle err {corner_err:.1e} "
                   f"(oracle {oracle_err:.1e}), {elapsed:.2f}s")


# -- 2 -------------------------------------------------------------------------


def test_criterion_2_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(20)
    worst = {"omega": 0.0, "mf": 0.0, "le": 0.0, "sgns": 0.0, "logreg": 0.0}
    count = {k: 0 for k in worst}
    for k in range(20):
        n = int(rng.integers(5, 13))
        g = _random_graph(rng, n, 0.35)
        g = Graph(n, np.concatenate([g.edges, [[i, i + 1] for i in range(n - 1)]]))
        X = rng.normal(size=(n, 2 + k % 4))

        kind = RegularizerKind(["full", "sampled", "walk"][k % 3], sample_size=min(6, n))
        st = build_state(g, kind, seed=k, walks_per_node=2, walk_length=6)
        fd = central_difference(lambda Z: omega_loss(Z, st), X)
        worst["omega"] = max(worst["omega"], rel_err(omega_gradient(X, st), fd))

        mf = MfObjective(g, 3, seed=k)
        worst["mf"] = max(worst["mf"], rel_err(mf.loss_grad(X)[1], central_difference(mf.loss, X)))
        le = LeObjective(g)
        worst["le"] = max(worst["le"], rel_err(le.loss_grad(X)[1], central_difference(le.loss, X)))

        Y = rng.normal(size=X.shape)
        c, o = rng.integers(0, n, 10), rng.integers(0, n, 10)
        neg = rng.integers(0, n, (10, 3))
        _, gX, gY = sgns_batch_loss_grad(X, Y, c, o, neg)
        fx = central_difference(lambda Z: sgns_batch_loss_grad(Z, Y, c, o, neg)[0], X)
        fy = central_difference(lambda Z: sgns_batch_loss_grad(X, Z, c, o, neg)[0], Y)
        worst["sgns"] = max(worst["sgns"], rel_err(gX, fx), rel_err(gY, fy))

        F = rng.normal(size=(25, 4))
        yb = (rng.random(25) < 0.5).astype(float)
        wb = np.append(rng.normal(size=4), rng.normal())
        _, gw, gb = logreg_loss_grad(wb[:4], wb[4], F, yb, 0.01)
        fd = central_difference(lambda v: logreg_loss_grad(v[:4], v[4], F, yb, 0.01)[0], wb)
        worst["logreg"] = max(worst["logreg"], rel_err(np.append(gw, gb), fd))
        for key in count:
            count[key] += 1
    elapsed = time.perf_counter() - start
    limits = {"omega": 1e-4, "mf": 1e-4, "le": 1e-4, "sgns": 1e-3, "logreg": 1e-4}
    ok = all(worst[k] < limits[k] and count[k] >= 20 for k in worst) and elapsed < 30
    detail = ", ".join(f"{k} {worst[k]:.1e}" for k in worst)
    verdict(2, ok, f"worst rel err over 20 instances each: {detail}; {elapsed:.1f}s")


# -- 3 -------------------------------------------------------------------------


def test_criterion_3_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(30)
    mismatches = {"paths": 0, "distortion": 0, "curvature": 0, "map": 0}
    for _ in range(30):
        n = int(rng.integers(3, 13))
        g = _random_graph(rng, n, 0.3)
        edges = g.edges.tolist()
        adj = adjacency_sets(n, edges)
        for i, j in itertools.permutations(range(n), 2):
            p = shortest_path(g, i, j)
            if (p.nodes if p else None) != canonical_shortest_path(adj, i, j):
                mismatches["paths"] += 1
        X = rng.normal(size=(n, 3))
        if abs(distortion(X, g) - distortion_oracle(X.tolist(), n, edges)) > 1e-9:
            mismatches["distortion"] += 1
        X[0] = X[1]  # force a degenerate segment somewhere
        ps = all_pairs_paths(g)
        if len(ps) and any(len(p) > 2 for p in ps):
            if len(curvature_field(X, ps)) != curvature_count(X.tolist(), [list(p.nodes) for p in ps]):
                mismatches["curvature"] += 1
    for _ in range(300):
        n = int(rng.integers(1, 13))
        scores = np.round(rng.random(n), 1)
        labels = rng.random(n) < 0.5
        labels[int(rng.integers(n))] = True
        if abs(mean_average_precision(scores, labels)
               - average_precision_oracle(scores.tolist(), labels.tolist())) > 1e-9:
            mismatches["map"] += 1
    elapsed = time.perf_counter() - start
    ok = not any(mismatches.values()) and elapsed < 30
    verdict(3, ok, f"mismatches {mismatches} over 30 graphs and 300 score vectors; {elapsed:.1f}s")


# -- 4 and 6 share their training runs ------------------------------------------

COMMON = dict(dim=16, t=1, sample_size=160, walks_per_node=5, walk_length=20)
LAMBDA = {"mf": 0.2, "le": 0.2, "sgns": 1.5}
REGS = {"mf": ("s",), "le": ("s",), "sgns": ("s", "a")}
SEEDS = range(5)


def _karate():
    kg = nx.karate_club_graph()
    return Graph(kg.number_of_nodes(), list(kg.edges()))


@pytest.fixture(scope="module")
def distortion_runs():
    graphs = {"karate": _karate(), "blocks": two_block_graph(100, 0.1, 0.005, seed=0)[0]}
    start = time.perf_counter()
    ratios, traces = {}, []
    for gname, g in graphs.items():
        for emb, regs in REGS.items():
            for seed in SEEDS:
                base = two_phase_train(g, TrainConfig(embedder=emb, seed=seed, lam=0.0, **COMMON))[0]
                rho0 = distortion(base, g)
                for reg in regs:
                    X, trace = two_phase_train(g, TrainConfig(embedder=emb, regularizer=reg, seed=seed,
                                                              lam=LAMBDA[emb], **COMMON))
                    ratios.setdefault((gname, emb, reg), []).append(distortion(X, g) / rho0)
                    traces.append(((gname, emb, reg, seed), trace))
    return ratios, traces, time.perf_counter() - start


def test_criterion_4_distortion_reduction(distortion_runs):
    ratios, _, elapsed = distortion_runs
    lines, ok = [], elapsed < 300
    for key, vals in ratios.items():
        wins = sum(v <= 0.95 for v in vals)
        ok &= wins >= 4
        lines.append(f"{'/'.join(key)} {wins}/5 [{', '.join(f'{v:.3f}' for v in vals)}]")
    verdict(4, ok, f"rho ratios regularized/plain ({elapsed:.0f}s): " + "; ".join(lines))


def test_criterion_6_omega_monotone(distortion_runs):
    _, traces, _ = distortion_runs
    violations, worse = [], []
    for key, trace in traces:
        rounds = sorted({r["round"] for r in trace.phase("phase1_omega")})
        for r in rounds:
            before = [rec["omega_loss"] for rec in trace.phase("phase1_embed", r)][-1:]
            om = before + [rec["omega_loss"] for rec in trace.phase("phase1_omega", r)]
            if any(b > a + 1e-6 for a, b in zip(om, om[1:])):
                violations.append(key)
        diag = {d["stage"]: d["theorem_pass_fraction"] for d in trace.diagnostics}
        last = f"phase1_round{max(rounds)}" if rounds else None
        if last is None or diag[last] < diag["init"]:
            worse.append(key)
    ok = not violations and not worse
    verdict(6, ok, f"{len(traces)} runs; omega increases in {len(violations)}, "
                   f"pass fraction below init in {len(worse)}")


# -- 5 -------------------------------------------------------------------------


def _cora_dir():
    for cand in (os.environ.get("CURVREG_CORA_DIR"), Path(__file__).resolve().parents[1] / "data" / "cora"):
        if cand and (Path(cand) / "cora.cites").is_file() and (Path(cand) / "cora.content").is_file():
            return Path(cand)
    return None


def test_criterion_5_downstream_direction():
    root = _cora_dir()
    if root is None:
        verdict(5, False, "Cora files (cora.cites, cora.content) not found; set CURVREG_CORA_DIR "
                          "or place them under data/cora")
    start = time.perf_counter()
    full = load_edge_list(root / "cora.cites")
    labels = load_labels(root / "cora.content", full)
    graph = largest_connected_component(full)
    labels = labels.reindex(graph)
    reg_for = {"mf": "s", "le": "s", "sgns": "a"}
    nc_wins = lp_wins = 0
    parts = []
    for emb, reg in reg_for.items():
        plain = TrainConfig(embedder=emb)
        regd = TrainConfig(embedder=emb, regularizer=reg)
        nc = [nc_accuracy(two_phase_train(graph, c)[0], labels, repeats=10).value for c in (plain, regd)]
        lp = [lp_evaluate(graph, c, repeats=10).value for c in (plain, regd)]
        nc_wins += nc[1] >= nc[0]
        lp_wins += lp[1] >= lp[0]
        parts.append(f"{emb} nc {nc[0]:.3f}->{nc[1]:.3f} lp {lp[0]:.3f}->{lp[1]:.3f}")
    elapsed = time.perf_counter() - start
    ok = nc_wins >= 2 and lp_wins >= 2 and elapsed < 1800
    verdict(5, ok, "; ".join(parts) + f"; {elapsed:.0f}s")


# -- 7 -------------------------------------------------------------------------


def _snapshot(directory: Path) -> dict:
    return {p.relative_to(directory): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_criterion_7_determinism(tmp_path, capsys):
    edges = tmp_path / "g.edges"
    g = two_block_graph(15, 0.4, 0.05, seed=1)[0]
    edges.write_text("".join(f"{a} {b}\n" for a, b in g.edges.tolist()))
    labels = tmp_path / "g.labels"
    labels.write_text("".join(f"{i} {'a' if i < 15 else 'b'}\n" for i in range(g.n)))
    train = ["--method", "sgns", "--reg", "a", "--dim", "4", "--walks", "2", "--walk-length", "8", "--t", "1"]
    commands = {
        "train": ["train", "--edges", edges, *train],
        "eval-nc": ["eval-nc", "--edges", edges, "--labels", labels, *train, "--repeats", "3"],
        "eval-lp": ["eval-lp", "--edges", edges, "--method", "le", "--reg", "s", "--sample-size", "8",
                    "--dim", "4", "--t", "1"],
        "case-study": ["case-study", "--graph", "cycle", "--size", "20", "--dim", "2", "--pairs", "30",
                       "--sample-size", "10"],
    }
    differing = []
    for name, argv in commands.items():
        out = tmp_path / name
        snaps = []
        for _ in range(2):
            assert cli_main([str(a) for a in argv] + ["--out", str(out)]) == 0
            snaps.append(_snapshot(out))
        if snaps[0] != snaps[1]:
            differing.append(name)
    emb = tmp_path / "train" / "embedding.txt"
    dist = [cli_main(["distortion", "--edges", str(edges), "--embedding", str(emb),
                      "--out", str(tmp_path / "d.json")]) for _ in range(2)]
    reports = capsys.readouterr().out
    if dist != [0, 0] or reports.count("\"rho\"") != 2:
        differing.append("distortion")
    verdict(7, not differing, f"commands with differing reruns: {differing or 'none'}")
