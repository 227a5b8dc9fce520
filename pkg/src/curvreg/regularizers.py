"""Curvature regularization losses and their analytic gradients.

Each interior vertex ``q`` of each cached path contributes
``1 - cos(theta_q)``, where ``theta_q`` is the turning angle there. The loss is
zero exactly when every cached path is embedded as a straight, monotone line.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import CapacityError, DegenerateError
from .geometry import EPS
from .graph_core import (ALL_PAIRS, RANDOM_WALK, SAMPLED_PAIRS, Graph, PathSet, all_pair_list,
                         all_pairs_paths, pair_paths, random_walks, sample_node_set)

FULL_MAX_NODES = 1500
DEFAULT_SAMPLE_SIZE = 64

_ALIASES = {"none": "none", "c": "full", "full": "full", "s": "sampled", "sampled": "sampled",
            "a": "walk", "walk": "walk"}
_PROVENANCE = {"full": ALL_PAIRS, "sampled": SAMPLED_PAIRS, "walk": RANDOM_WALK}


@dataclass(frozen=True)
class RegularizerKind:
    name: str = "none"
    sample_size: int = DEFAULT_SAMPLE_SIZE

    def __post_init__(self):
        if self.name not in ("none", "full", "sampled", "walk"):
            raise ValueError(f"unknown regularizer {self.name!r}")
        if self.name == "sampled" and self.sample_size < 2:
            raise ValueError("sampled regularizer needs sample_size >= 2")

    @classmethod
    def parse(cls, text: str, sample_size: int = DEFAULT_SAMPLE_SIZE) -> "RegularizerKind":
        try:
            return cls(_ALIASES[text], sample_size)
        except KeyError:
            raise ValueError(f"unknown regularizer {text!r}; expected none, c, s or a") from None

    @property
    def short(self) -> str:
        return {"none": "none", "full": "c", "sampled": "s", "walk": "a"}[self.name]


@dataclass(eq=False)
class RegularizerState:
    """Cached paths for one regularizer plus precomputed scatter matrices.

    Identical ``(prev, vertex, next)`` triples are merged and weighted by
    multiplicity, which leaves loss and gradient unchanged.
    """

    kind: RegularizerKind
    paths: PathSet
    prev: np.ndarray = field(init=False)
    vertex: np.ndarray = field(init=False)
    next: np.ndarray = field(init=False)
    weight: np.ndarray = field(init=False)
    n: int = 0
    last_skipped: int = 0

    def __post_init__(self):
        if self.paths.source != _PROVENANCE[self.kind.name]:
            raise ValueError(f"{self.kind.name} regularizer cannot use {self.paths.source} paths")
        _, _, a, b, c = self.paths.triples()
        if len(a):
            uniq, counts = np.unique(np.column_stack([a, b, c]), axis=0, return_counts=True)
        else:
            uniq, counts = np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64)
        self.prev, self.vertex, self.next = uniq[:, 0], uniq[:, 1], uniq[:, 2]
        self.weight = counts.astype(float)
        k = len(self.weight)
        cols = np.arange(k)
        self._scatter = [sparse.csr_matrix((self.weight, (idx, cols)), shape=(self.n, k))
                         for idx in (self.prev, self.vertex, self.next)]

    @property
    def n_samples(self) -> int:
        return int(self.weight.sum())

    def digest(self) -> str:
        return self.paths.digest()


def _terms(X: np.ndarray, state: RegularizerState):
    u = X[state.vertex] - X[state.prev]
    v = X[state.next] - X[state.vertex]
    nu = np.sqrt((u * u).sum(axis=1))
    nv = np.sqrt((v * v).sum(axis=1))
    ok = (nu > EPS) & (nv > EPS)
    nu = np.where(ok, nu, 1.0)
    nv = np.where(ok, nv, 1.0)
    cos = np.where(ok, (u * v).sum(axis=1) / (nu * nv), 1.0)
    return u, v, nu, nv, np.clip(cos, -1.0, 1.0), ok


def omega_loss(X: np.ndarray, state: RegularizerState) -> float:
    if len(state.weight) == 0:
        return 0.0
    _, _, _, _, cos, ok = _terms(X, state)
    if not ok.any():
        raise DegenerateError("every curvature sample is degenerate")
    state.last_skipped = int(state.weight[~ok].sum())
    return float(np.dot(state.weight[ok], 1.0 - cos[ok]))


def omega_loss_grad(X: np.ndarray, state: RegularizerState) -> tuple[float, np.ndarray]:
    """Loss and exact gradient with respect to every embedding row.

    With ``u = x_q - x_{q-1}`` and ``v = x_{q+1} - x_q``:
    ``dcos/du = v/(|u||v|) - cos u/|u|^2`` and symmetrically for ``v``. Row
    ``q-1`` receives ``dcos/du``, row ``q`` receives ``dcos/dv - dcos/du`` and row
    ``q+1`` receives ``-dcos/dv`` (signs flipped because the loss is ``1 - cos``).
    """
    G = np.zeros_like(X, dtype=float)
    if len(state.weight) == 0:
        return 0.0, G
    u, v, nu, nv, cos, ok = _terms(X, state)
    if not ok.any():
        raise DegenerateError("every curvature sample is degenerate")
    state.last_skipped = int(state.weight[~ok].sum())
    inv = (ok / (nu * nv))[:, None]
    gu = v * inv - (cos * ok / nu**2)[:, None] * u
    gv = u * inv - (cos * ok / nv**2)[:, None] * v
    sa, sb, sc = state._scatter
    G = sa @ gu + sb @ (gv - gu) - sc @ gv
    loss = float(np.dot(state.weight[ok], 1.0 - cos[ok]))
    return loss, np.asarray(G)


def omega_gradient(X: np.ndarray, state: RegularizerState) -> np.ndarray:
    return omega_loss_grad(X, state)[1]


def build_state(graph: Graph, kind: RegularizerKind, seed: int = 0, walks: PathSet | None = None,
                walks_per_node: int = 10, walk_length: int = 40, strategy: str = "uniform",
                p: float = 1.0, q: float = 1.0) -> RegularizerState | None:
    """Collect the paths a regularizer runs over; ``None`` for ``kind.name == "none"``.

    For the walk regularizer, pass the embedder's own walk set as ``walks`` so
    both share one object; otherwise fresh walks are drawn.
    """
    if kind.name == "none":
        return None
    if kind.name == "full":
        if graph.n > FULL_MAX_NODES:
            raise CapacityError(
                f"the full curvature regularizer (--reg c) is limited to {FULL_MAX_NODES} nodes "
                f"(graph has {graph.n}); use the sampled regularizer --reg s instead")
        paths = all_pairs_paths(graph)
    elif kind.name == "sampled":
        size = min(kind.sample_size, graph.n)
        nodes = sample_node_set(graph, size, seed)
        paths = pair_paths(graph, all_pair_list(nodes), source=SAMPLED_PAIRS,
                           meta={"nodes": nodes.tolist(), "seed": seed})
    else:
        paths = walks if walks is not None else random_walks(
            graph, walks_per_node, walk_length, strategy, p, q, seed)
    return RegularizerState(kind, paths, n=graph.n)
