"""Proximity-preserving embedding objectives.

* ``mf``: symmetric factorization of the adjacency matrix over every edge plus
  sampled non-edges, ``sum (A_ij - <x_i, x_j>)^2``.
* ``le``: Laplacian smoothness ``sum_E |x_i - x_j|^2`` with a centering penalty
  and a second-moment penalty (unit variance, decorrelated dimensions) that
  stop the trivial collapse.
* ``sgns``: skip-gram with negative sampling over random-walk windows, trained
  by SGD with a separate context matrix.

MF and LE expose ``loss_grad(X)`` for full-batch descent; SGNS exposes a batch
gradient and an in-place SGD step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .graph_core import Graph, PathSet

EMBEDDERS = ("mf", "le", "sgns")


def mf_pairs(graph: Graph, k_neg: int = 5, seed: int | np.random.Generator = 0):
    """Every edge with target 1 plus ``k_neg`` uniformly drawn non-edges per edge with target 0."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    i_pos, j_pos = graph.edges[:, 0], graph.edges[:, 1]
    want = k_neg * graph.m
    neg_i, neg_j = [], []
    have = 0
    for _ in range(1000):
        if have >= want:
            break
        a = rng.integers(0, graph.n, size=2 * (want - have) + 8)
        b = rng.integers(0, graph.n, size=len(a))
        ok = (a != b) & ~graph.has_edges(a, b)
        a, b = a[ok][:want - have], b[ok][:want - have]
        neg_i.append(a)
        neg_j.append(b)
        have += len(a)
    i = np.concatenate([i_pos] + neg_i).astype(np.int64)
    j = np.concatenate([j_pos] + neg_j).astype(np.int64)
    target = np.concatenate([np.ones(graph.m), np.zeros(len(i) - graph.m)])
    return i, j, target


def mf_loss_grad(X: np.ndarray, graph: Graph | None = None, k_neg: int = 5, seed=0, pairs=None):
    """Squared reconstruction error of sampled adjacency entries and its gradient."""
    if pairs is None:
        pairs = mf_pairs(graph, k_neg, seed)
    i, j, target = pairs
    resid = np.einsum("ij,ij->i", X[i], X[j]) - target
    loss = float(np.dot(resid, resid))
    n = X.shape[0]
    S = sparse.coo_matrix((np.concatenate([resid, resid]),
                           (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n)).tocsr()
    return loss, 2.0 * np.asarray(S @ X)


class MfObjective:
    def __init__(self, graph: Graph, k_neg: int = 5, seed=0):
        self.pairs = mf_pairs(graph, k_neg, seed)

    def loss_grad(self, X):
        return mf_loss_grad(X, pairs=self.pairs)

    def loss(self, X):
        i, j, target = self.pairs
        resid = np.einsum("ij,ij->i", X[i], X[j]) - target
        return float(np.dot(resid, resid))


def laplacian(graph: Graph) -> sparse.csr_matrix:
    A = graph.csr()
    return (sparse.diags(graph.degree.astype(float)) - A).tocsr()


def le_loss_terms(X: np.ndarray, graph: Graph, beta: float | None = None, gamma: float | None = None,
                  lap=None) -> dict:
    """The three LE terms separately (smoothness, centering, second moment)."""
    beta = float(graph.m) if beta is None else beta
    gamma = float(graph.m) if gamma is None else gamma
    lap = laplacian(graph) if lap is None else lap
    n, d = X.shape
    smooth = float(np.sum(X * (lap @ X)))
    mean = X.mean(axis=0)
    gap = X.T @ X / n - np.eye(d)
    return {"smooth": smooth, "center": beta * float(mean @ mean),
            "moment": gamma * float(np.sum(gap * gap))}


def le_loss_grad(X: np.ndarray, graph: Graph, beta: float | None = None, gamma: float | None = None,
                 lap=None):
    """LE loss and gradient; ``beta`` and ``gamma`` default to the edge count.

    The moment penalty is ``gamma * |X^T X / n - I|_F^2``: its diagonal is the
    per-dimension unit second moment, its off-diagonal part keeps dimensions
    decorrelated so they do not all converge to the same eigenvector.
    """
    beta = float(graph.m) if beta is None else beta
    gamma = float(graph.m) if gamma is None else gamma
    lap = laplacian(graph) if lap is None else lap
    n, d = X.shape
    LX = np.asarray(lap @ X)
    mean = X.mean(axis=0)
    gap = X.T @ X / n - np.eye(d)
    loss = float(np.sum(X * LX)) + beta * float(mean @ mean) + gamma * float(np.sum(gap * gap))
    grad = 2.0 * LX + (2.0 * beta / n) * mean[None, :] + (4.0 * gamma / n) * (X @ gap)
    return loss, grad


class LeObjective:
    def __init__(self, graph: Graph, beta: float | None = None, gamma: float | None = None):
        self.graph = graph
        self.beta = float(graph.m) if beta is None else beta
        self.gamma = float(graph.m) if gamma is None else gamma
        self.lap = laplacian(graph)

    def loss_grad(self, X):
        return le_loss_grad(X, self.graph, self.beta, self.gamma, self.lap)

    def loss(self, X):
        return sum(le_loss_terms(X, self.graph, self.beta, self.gamma, self.lap).values())


@dataclass
class SgnsCorpus:
    """Center/context pairs from windowed walks and the negative-sampling distribution."""

    centers: np.ndarray
    contexts: np.ndarray
    unigram: np.ndarray
    window: int

    def __post_init__(self):
        self._cdf = np.cumsum(self.unigram)
        self._cdf[-1] = 1.0

    def __len__(self):
        return len(self.centers)

    def draw_negatives(self, centers, contexts, k: int, rng: np.random.Generator) -> np.ndarray:
        """``k`` unigram^0.75 draws per pair, redrawn while they hit the pair's own nodes."""
        neg = np.searchsorted(self._cdf, rng.random((len(centers), k)), side="right")
        neg = np.minimum(neg, len(self.unigram) - 1)
        if np.count_nonzero(self.unigram) <= 2:
            return neg
        for _ in range(100):
            bad = (neg == centers[:, None]) | (neg == contexts[:, None])
            nbad = int(bad.sum())
            if nbad == 0:
                break
            redraw = np.searchsorted(self._cdf, rng.random(nbad), side="right")
            neg[bad] = np.minimum(redraw, len(self.unigram) - 1)
        return neg


def build_sgns_corpus(walks: PathSet, window: int, n: int | None = None) -> SgnsCorpus:
    """All ordered (center, context) pairs within ``window`` positions of each other in a walk."""
    if len(walks) == 0:
        raise ValueError("no walks to build a corpus from")
    if window < 1:
        raise ValueError("window must be at least 1")
    n = int(walks.nodes.max()) + 1 if n is None else n
    flat = walks.nodes
    walk_id = np.repeat(np.arange(len(walks)), walks.lengths)
    centers, contexts = [], []
    for off in range(1, window + 1):
        k = np.arange(len(flat) - off)
        k = k[walk_id[k] == walk_id[k + off]]
        centers += [flat[k], flat[k + off]]
        contexts += [flat[k + off], flat[k]]
    counts = np.bincount(flat, minlength=n).astype(float) ** 0.75
    return SgnsCorpus(np.concatenate(centers), np.concatenate(contexts), counts / counts.sum(), window)


def _log_sigmoid_neg(s):
    # -log(sigmoid(s)), stable for large |s|
    return np.logaddexp(0.0, -s)


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def sgns_batch_loss_grad(X: np.ndarray, Y: np.ndarray, centers, contexts, negatives):
    """Summed SGNS loss of a batch and its gradients with respect to ``X`` and ``Y``."""
    xc = X[centers]
    s_pos = np.einsum("ij,ij->i", xc, Y[contexts])
    y_neg = Y[negatives]
    s_neg = np.einsum("ij,ikj->ik", xc, y_neg)
    loss = float(_log_sigmoid_neg(s_pos).sum() + _log_sigmoid_neg(-s_neg).sum())
    g_pos = _sigmoid(s_pos) - 1.0
    g_neg = _sigmoid(s_neg)
    gX = np.zeros_like(X)
    gY = np.zeros_like(Y)
    np.add.at(gX, centers, g_pos[:, None] * Y[contexts] + np.einsum("ik,ikj->ij", g_neg, y_neg))
    np.add.at(gY, contexts, g_pos[:, None] * xc)
    np.add.at(gY, negatives.ravel(), (g_neg[:, :, None] * xc[:, None, :]).reshape(-1, X.shape[1]))
    return loss, gX, gY


def sgns_step(X: np.ndarray, Y: np.ndarray, corpus: SgnsCorpus, batch, k_neg: int, lr: float,
              rng: np.random.Generator) -> float:
    """One SGD step on the pairs ``batch`` (indices into the corpus); updates in place."""
    if k_neg < 1:
        raise ValueError("k_neg must be at least 1")
    if lr <= 0:
        raise ValueError("lr must be positive")
    c = corpus.centers[batch]
    o = corpus.contexts[batch]
    neg = corpus.draw_negatives(c, o, k_neg, rng)
    loss, gX, gY = sgns_batch_loss_grad(X, Y, c, o, neg)
    X -= lr * gX
    Y -= lr * gY
    return loss
