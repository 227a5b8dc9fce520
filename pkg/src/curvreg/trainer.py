"""Two-phase curvature-regularized training.

Phase 1 alternates, ``t`` times, between minimizing the embedding loss and
minimizing the curvature loss, each until convergence. Phase 2 then minimizes
``L + lam * Omega`` jointly. Full-batch objectives (MF, LE, and the curvature
loss itself) use gradient descent with a monotone line search; SGNS uses SGD
with a linearly decaying learning rate.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._rng import derive_rng
from .embedders import (EMBEDDERS, LeObjective, MfObjective, SgnsCorpus, build_sgns_corpus,
                        sgns_step)
from .errors import TrainingError
from .geometry import FULL_DISTORTION_MAX_NODES, distortion, sample_pairs, theorem_pass_fraction
from .graph_core import Graph, PathSet, random_walks
from .regularizers import (DEFAULT_SAMPLE_SIZE, RegularizerKind, RegularizerState, build_state,
                           omega_loss, omega_loss_grad)

_EPS = 1e-12


@dataclass
class TrainConfig:
    embedder: str = "le"
    regularizer: str = "none"
    dim: int = 64
    t: int = 3
    lam: float = 0.1
    tol: float = 1e-4
    max_epochs_embed: int | None = None
    max_epochs_omega: int = 200
    max_epochs_joint: int | None = None
    seed: int = 0
    sample_size: int = DEFAULT_SAMPLE_SIZE
    resample_per_round: bool = False
    # walk / skip-gram settings
    walks_per_node: int = 10
    walk_length: int = 40
    window: int = 5
    k_neg: int = 5
    p: float = 1.0
    q: float = 1.0
    walk_strategy: str | None = None
    lr: float = 0.025
    batch_size: int = 256
    omega_steps_per_epoch: int = 50
    # full-batch objectives
    mf_neg: int = 5
    le_beta: float | None = None
    le_gamma: float | None = None
    step0: float = 1e-2
    rho_every: int = 0

    def __post_init__(self):
        if self.embedder not in EMBEDDERS:
            raise ValueError(f"unknown embedder {self.embedder!r}; expected one of {EMBEDDERS}")
        RegularizerKind.parse(self.regularizer, max(self.sample_size, 2))
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if self.t < 0:
            raise ValueError("t must be non-negative")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.p <= 0 or self.q <= 0:
            raise ValueError("p and q must be positive")
        if self.walk_strategy not in (None, "uniform", "biased"):
            raise ValueError("walk_strategy must be uniform or biased")

    @property
    def strategy(self) -> str:
        if self.walk_strategy is not None:
            return self.walk_strategy
        return "uniform" if self.p == 1.0 and self.q == 1.0 else "biased"

    @property
    def embed_epochs(self) -> int:
        if self.max_epochs_embed is not None:
            return self.max_epochs_embed
        return 5 if self.embedder == "sgns" else 200

    @property
    def joint_epochs(self) -> int:
        if self.max_epochs_joint is not None:
            return self.max_epochs_joint
        return 10 if self.embedder == "sgns" else 500

    @property
    def reg_kind(self) -> RegularizerKind:
        return RegularizerKind.parse(self.regularizer, max(self.sample_size, 2))


@dataclass
class TrainTrace:
    """Per-epoch loss records plus diagnostics taken at phase boundaries."""

    records: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, phase: str, round_: int | None, embed_loss, omega_loss, joint_loss=None, rho=None):
        self.records.append({"epoch": len(self.records) + 1, "phase": phase, "round": round_,
                             "embed_loss": embed_loss, "omega_loss": omega_loss,
                             "joint_loss": joint_loss, "rho": rho})

    def phase(self, name: str, round_: int | None = None) -> list:
        return [r for r in self.records if r["phase"] == name
                and (round_ is None or r["round"] == round_)]

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "meta", **self.meta}, sort_keys=True)]
        lines += [json.dumps({"type": "epoch", **r}, sort_keys=True) for r in self.records]
        lines += [json.dumps({"type": "diagnostic", **d}, sort_keys=True) for d in self.diagnostics]
        return "\n".join(lines) + "\n"


def convergence_check(history, tol: float) -> bool:
    """True when the last relative loss change is below ``tol``."""
    if len(history) < 2:
        raise ValueError("need at least two losses")
    prev, cur = history[-2], history[-1]
    return abs(cur - prev) / max(abs(prev), _EPS) < tol


def init_embedding(n: int, dim: int, seed: int) -> np.ndarray:
    rng = derive_rng(seed, "init")
    return rng.uniform(-0.5 / dim, 0.5 / dim, size=(n, dim))


def _check_finite(value: float, what: str) -> None:
    if not math.isfinite(value):
        raise TrainingError(f"{what} became non-finite; lower the learning rate")


def degree_preconditioner(graph: Graph) -> np.ndarray:
    """Row scaling ``1 / (1 + deg_i)`` for full-batch descent.

    Hub rows otherwise set the admissible step for every row, which stalls
    low-degree nodes on large graphs.
    """
    return (1.0 / (1.0 + graph.degree.astype(float)))[:, None]


class _LineSearch:
    """Preconditioned gradient descent with step expansion and halving.

    The search direction is ``-P * G`` for a positive row scaling ``P``; a step
    that increases the loss is never accepted.
    """

    def __init__(self, step0: float, precond: np.ndarray | None = None):
        self.step = step0
        self.precond = precond

    def step_once(self, X, loss, G, f):
        if self.precond is not None:
            G = self.precond * G
        gnorm = float(np.sum(G * G))
        if gnorm == 0.0:
            return None
        trial = self.step
        cand = f(X - trial * G)
        if cand <= loss:
            for _ in range(30):
                bigger = f(X - 2 * trial * G)
                if not bigger < cand:
                    break
                trial, cand = 2 * trial, bigger
        else:
            for _ in range(60):
                trial *= 0.5
                cand = f(X - trial * G)
                if cand <= loss:
                    break
            else:
                return None
        self.step = trial
        return X - trial * G, cand


class Trainer:
    """Holds the objectives, path caches and trace for one training run."""

    def __init__(self, graph: Graph, config: TrainConfig, walks: PathSet | None = None):
        self.graph = graph
        self.config = config
        c = config
        self.walks = walks
        self.corpus: SgnsCorpus | None = None
        self.objective = None
        if c.embedder == "mf":
            self.objective = MfObjective(graph, c.mf_neg, derive_rng(c.seed, "mf_negatives"))
        elif c.embedder == "le":
            self.objective = LeObjective(graph, c.le_beta, c.le_gamma)
        else:
            if self.walks is None:
                self.walks = self._draw_walks()
            self.corpus = build_sgns_corpus(self.walks, c.window, n=graph.n)
        self.kind = c.reg_kind
        self.state = self._build_state(0)
        self.precond = degree_preconditioner(graph) if self.objective is not None else None
        self.trace = TrainTrace()
        self._rho_pairs = None
        if c.rho_every and graph.n > FULL_DISTORTION_MAX_NODES:
            self._rho_pairs = sample_pairs(graph, 100 * graph.n, c.seed)

    def _draw_walks(self, round_: int = 0) -> PathSet:
        c = self.config
        return random_walks(self.graph, c.walks_per_node, c.walk_length, c.strategy, c.p, c.q,
                            seed=c.seed + round_)

    def _build_state(self, round_: int) -> RegularizerState | None:
        c = self.config
        if self.kind.name == "none":
            return None
        seed = c.seed + round_
        shared = None
        if self.kind.name == "walk":
            if round_ == 0:
                if self.walks is None:
                    self.walks = self._draw_walks()
                shared = self.walks
            else:
                shared = self._draw_walks(round_)
        return build_state(self.graph, self.kind, seed=seed, walks=shared)

    # objective helpers -------------------------------------------------

    def embed_loss(self, X) -> float:
        return self.objective.loss(X)

    def _omega(self, X):
        return omega_loss(X, self.state) if self.state is not None else None

    def _rho(self, epoch_count: int, X):
        every = self.config.rho_every
        if not every or epoch_count % every:
            return None
        return distortion(X, self.graph, self._rho_pairs)

    def _diagnose(self, stage: str, X) -> None:
        if self.state is None:
            return
        self.trace.diagnostics.append({"stage": stage,
                                       "theorem_pass_fraction": theorem_pass_fraction(X, self.state.paths),
                                       "omega_loss": omega_loss(X, self.state),
                                       "omega_skipped": self.state.last_skipped})

    # sub-loops ---------------------------------------------------------

    def _descend(self, X, loss_grad, loss_fn, max_epochs, phase, round_, record, precond=None):
        search = _LineSearch(self.config.step0, precond)
        loss, G = loss_grad(X)
        _check_finite(loss, phase)
        history = [loss]
        for _ in range(max_epochs):
            out = search.step_once(X, loss, G, loss_fn)
            if out is None:
                break
            X, loss = out
            _check_finite(loss, phase)
            history.append(loss)
            record(X, loss)
            if convergence_check(history, self.config.tol):
                break
            loss, G = loss_grad(X)
        return X

    def _full_batch_embed(self, X, phase, round_):
        def record(Xc, loss):
            om = self._omega(Xc)
            self.trace.add(phase, round_, loss, om, None, self._rho(len(self.trace.records) + 1, Xc))
        return self._descend(X, self.objective.loss_grad, self.objective.loss,
                             self.config.embed_epochs, phase, round_, record, self.precond)

    def _minimize_omega(self, X, phase, round_):
        state = self.state
        emb = self.objective.loss if self.objective is not None else (lambda _X: None)

        def record(Xc, loss):
            self.trace.add(phase, round_, emb(Xc), loss, None, self._rho(len(self.trace.records) + 1, Xc))
        return self._descend(X, lambda Z: omega_loss_grad(Z, state), lambda Z: omega_loss(Z, state),
                             self.config.max_epochs_omega, phase, round_, record)

    def _joint_full_batch(self, X, phase):
        lam, state = self.config.lam, self.state

        def loss_grad(Z):
            lz, gz = self.objective.loss_grad(Z)
            if state is None or lam == 0:
                return lz, gz
            lo, go = omega_loss_grad(Z, state)
            return lz + lam * lo, gz + lam * go

        def loss_fn(Z):
            lz = self.objective.loss(Z)
            if state is None or lam == 0:
                return lz
            return lz + lam * omega_loss(Z, state)

        def record(Xc, loss):
            lz = self.objective.loss(Xc)
            om = self._omega(Xc)
            self.trace.add(phase, None, lz, om, loss, self._rho(len(self.trace.records) + 1, Xc))
        return self._descend(X, loss_grad, loss_fn, self.config.joint_epochs, phase, None, record,
                             self.precond)

    def _sgns_loop(self, X, Y, max_epochs, phase, round_, lam):
        c = self.config
        corpus = self.corpus
        rng = derive_rng(c.seed, "sgns", phase, str(round_))
        npairs = len(corpus)
        nbatches = max(1, math.ceil(npairs / c.batch_size))
        total_steps = max_epochs * nbatches
        use_omega = self.state is not None and lam > 0
        omega_every = max(1, nbatches // max(c.omega_steps_per_epoch, 1))
        history = []
        step = 0
        for _ in range(max_epochs):
            order = rng.permutation(npairs)
            epoch_loss = 0.0
            for b in range(nbatches):
                lr = c.lr * max(1.0 - step / total_steps, 1e-4)
                epoch_loss += sgns_step(X, Y, corpus, order[b * c.batch_size:(b + 1) * c.batch_size],
                                        c.k_neg, lr, rng)
                step += 1
                if use_omega and (b + 1) % omega_every == 0:
                    _, go = omega_loss_grad(X, self.state)
                    X -= lr * lam * (omega_every / nbatches) * go
            _check_finite(epoch_loss, phase)
            om = self._omega(X)
            joint = epoch_loss + lam * om if use_omega else None
            self.trace.add(phase, round_, epoch_loss, om, joint, self._rho(len(self.trace.records) + 1, X))
            history.append(epoch_loss if joint is None else joint)
            if len(history) >= 2 and convergence_check(history, c.tol):
                break
        return X

    # public ------------------------------------------------------------

    def run(self):
        c = self.config
        X = init_embedding(self.graph.n, c.dim, c.seed)
        Y = np.zeros_like(X) if self.corpus is not None else None
        self.trace.meta = {"config": asdict(c), "init": f"uniform[-0.5/d, 0.5/d] seed={c.seed}",
                           "graph": self.graph.digest(), "n": self.graph.n, "m": self.graph.m,
                           "paths": self.state.digest() if self.state is not None else None,
                           "n_curvature_samples": self.state.n_samples if self.state is not None else 0}
        self._diagnose("init", X)
        rounds = c.t if self.state is not None else 0
        for r in range(rounds):
            if r > 0 and c.resample_per_round:
                self.state = self._build_state(r)
            if self.corpus is not None:
                X = self._sgns_loop(X, Y, c.embed_epochs, "phase1_embed", r, 0.0)
            else:
                X = self._full_batch_embed(X, "phase1_embed", r)
            X = self._minimize_omega(X, "phase1_omega", r)
            self._diagnose(f"phase1_round{r}", X)
        if self.corpus is not None:
            X = self._sgns_loop(X, Y, c.joint_epochs, "phase2", None, c.lam)
        else:
            X = self._joint_full_batch(X, "phase2")
        self._diagnose("final", X)
        self.context = Y
        return X, self.trace


def two_phase_train(graph: Graph, config: TrainConfig, walks: PathSet | None = None):
    """Train an embedding; returns ``(X, trace)``."""
    return Trainer(graph, config, walks).run()


def train_plain(graph: Graph, config: TrainConfig):
    """Unregularized embedder training: the same loops with the regularizer switched off."""
    return Trainer(graph, replace(config, regularizer="none")).run()[0]
