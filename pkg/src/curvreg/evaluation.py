"""Downstream evaluation: node classification and link prediction.

Node classification trains one-vs-rest logistic regression on 60% of the
labelled nodes and reports test accuracy averaged over repeated splits. Link
prediction removes a fraction of the edges, embeds the remaining graph, scores
Hadamard edge features with logistic regression and reports average precision
over the removed edges against an equal number of non-edges.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._rng import derive_rng
from .graph_core import Graph, LabelMap

log = logging.getLogger(__name__)

L2 = 1e-4
LOGREG_EPOCHS = 500
LOGREG_GTOL = 1e-6
TRAIN_FRACTION = 0.6
DEFAULT_REMOVAL = 0.4
_ENUMERATE_LIMIT = 5_000_000


# ---------------------------------------------------------------------------
# logistic regression


def logreg_loss_grad(w: np.ndarray, b: float, F: np.ndarray, y: np.ndarray, l2: float = L2):
    """Mean logistic loss with ``l2/2 * |w|^2`` and its gradient.

    ``y`` holds 0/1 targets; the intercept ``b`` is not penalised.
    Returns ``(loss, grad_w, grad_b)``.
    """
    s = F @ w + b
    sign = 2.0 * y - 1.0
    loss = float(np.mean(np.logaddexp(0.0, -sign * s)) + 0.5 * l2 * (w @ w))
    p = 0.5 * (1.0 + np.tanh(0.5 * s))
    r = (p - y) / len(y)
    return loss, F.T @ r + l2 * w, float(r.sum())


def _fit_binary(F: np.ndarray, y: np.ndarray, l2: float, epochs: int, gtol: float):
    """Full-batch gradient descent with the fixed step ``1 / Lipschitz``."""
    n, d = F.shape
    lip = 0.25 * (np.linalg.norm(F, 2) ** 2 + n) / n + l2
    step = 1.0 / lip
    w = np.zeros(d)
    b = 0.0
    for _ in range(epochs):
        _, gw, gb = logreg_loss_grad(w, b, F, y, l2)
        if math.sqrt(float(gw @ gw) + gb * gb) < gtol:
            break
        w -= step * gw
        b -= step * gb
    return w, b


@dataclass
class OvrClassifier:
    """One binary model per class on standardised features."""

    classes: np.ndarray
    W: np.ndarray
    b: np.ndarray
    mean: np.ndarray
    scale: np.ndarray

    def decision_function(self, F: np.ndarray) -> np.ndarray:
        Z = (np.asarray(F, dtype=float) - self.mean) / self.scale
        return Z @ self.W + self.b

    def predict(self, F: np.ndarray) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest class id on ties
        return self.classes[np.argmax(self.decision_function(F), axis=1)]


def _standardise(F: np.ndarray):
    mean = F.mean(axis=0)
    scale = F.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return mean, scale


def train_logreg_ovr(features, labels, classes=None, l2: float = L2, epochs: int = LOGREG_EPOCHS,
                     gtol: float = LOGREG_GTOL) -> OvrClassifier:
    """Fit one-vs-rest logistic regression on ``features`` (rows) and integer ``labels``.

    ``classes`` fixes the class set (defaults to the labels present). A class
    absent from the training labels gets a model that never fires. If only one
    class is present the result predicts that class everywhere.
    """
    F = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if F.ndim != 2 or len(F) != len(y):
        raise ValueError("features must be a 2-D array with one row per label")
    if len(y) == 0:
        raise ValueError("no training examples")
    classes = np.unique(y) if classes is None else np.asarray(classes)
    mean, scale = _standardise(F)
    Z = (F - mean) / scale
    W = np.zeros((F.shape[1], len(classes)))
    b = np.full(len(classes), -np.inf)
    present = np.unique(y)
    if len(present) == 1:
        log.warning("training set holds a single class; classifier is constant")
        b[np.searchsorted(classes, present[0])] = 0.0
        return OvrClassifier(classes, W, b, mean, scale)
    for k, c in enumerate(classes):
        if c not in present:
            continue
        W[:, k], b[k] = _fit_binary(Z, (y == c).astype(float), l2, epochs, gtol)
    return OvrClassifier(classes, W, b, mean, scale)


def train_logreg_binary(features, y, l2: float = L2, epochs: int = LOGREG_EPOCHS,
                        gtol: float = LOGREG_GTOL):
    """Binary model on standardised features; returns a scoring function."""
    F = np.asarray(features, dtype=float)
    mean, scale = _standardise(F)
    w, b = _fit_binary((F - mean) / scale, np.asarray(y, dtype=float), l2, epochs, gtol)
    return lambda G: ((np.asarray(G, dtype=float) - mean) / scale) @ w + b


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    task: str
    metric: str
    value: float
    sd: float
    values: list
    seed: int
    config: dict = field(default_factory=dict)
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"{self.metric} out of [0, 1]: {self.value}")

    def to_record(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


SUMMARY_FIELDS = ("method", "dataset", "task", "metric", "mean", "sd", "repeats", "seed")


def summary_csv(reports, method: str, dataset: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_FIELDS)
    for r in reports:
        writer.writerow([method, dataset, r.task, r.metric, repr(r.value), repr(r.sd), len(r.values),
                         r.seed])
    return buf.getvalue()


def _mean_sd(values):
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1)) if len(arr) > 1 else 0.0


# ---------------------------------------------------------------------------
# node classification


@dataclass
class NcSplit:
    train: np.ndarray
    test: np.ndarray
    seed: int


def make_nc_split(labels: LabelMap, seed: int) -> NcSplit:
    """Uniform 60/40 split of the labelled nodes (no stratification)."""
    nodes = np.asarray(labels.nodes, dtype=np.int64)
    if len(nodes) < 2:
        raise ValueError("need at least two labelled nodes")
    counts = np.bincount(labels.y, minlength=labels.n_classes)
    for k in np.flatnonzero(counts < 2):
        log.warning("class %s has fewer than two labelled nodes", labels.classes[k])
    rng = derive_rng(seed, "nc_split")
    perm = rng.permutation(len(nodes))
    n_train = int(math.floor(TRAIN_FRACTION * len(nodes) + 0.5))
    n_train = min(max(n_train, 1), len(nodes) - 1)
    return NcSplit(np.sort(nodes[perm[:n_train]]), np.sort(nodes[perm[n_train:]]), seed)


def nc_accuracy(X: np.ndarray, labels: LabelMap, repeats: int = 10, seed: int = 0,
                config: dict | None = None) -> EvalReport:
    """Mean test accuracy over ``repeats`` independent splits (split ``r`` uses seed ``seed + r``)."""
    if len(labels) == 0:
        raise ValueError("no labelled nodes")
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    X = np.asarray(X, dtype=float)
    lookup = labels.as_dict()
    accs = []
    for r in range(repeats):
        split = make_nc_split(labels, seed + r)
        ytr = np.array([lookup[i] for i in split.train])
        yte = np.array([lookup[i] for i in split.test])
        clf = train_logreg_ovr(X[split.train], ytr, classes=np.arange(labels.n_classes))
        accs.append(float(np.mean(clf.predict(X[split.test]) == yte)))
    mean, sd = _mean_sd(accs)
    return EvalReport("node_classification", "accuracy", mean, sd, accs, seed, config or {},
                      {"train_fraction": TRAIN_FRACTION, "l2": L2, "n_labelled": len(labels),
                       "classes": list(labels.classes)})


# ---------------------------------------------------------------------------
# link prediction


@dataclass
class LpSplit:
    train_graph: Graph
    test_pos: np.ndarray
    test_neg: np.ndarray
    seed: int


def _keys(graph: Graph, pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    return lo * graph.n + hi


def sample_non_edges(graph: Graph, count: int, rng: np.random.Generator, exclude=None) -> np.ndarray:
    """``count`` distinct unordered non-edges ``(i < j)`` drawn uniformly, avoiding ``exclude`` pairs."""
    n = graph.n
    banned = np.unique(np.concatenate([_keys(graph, graph.edges),
                                       _keys(graph, exclude) if exclude is not None and len(exclude)
                                       else np.zeros(0, dtype=np.int64)]))
    pool = n * (n - 1) // 2 - len(banned)
    if count > pool:
        raise ValueError(f"need {count} non-edges but only {pool} are available (graph too dense)")
    if count == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if n * (n - 1) // 2 <= _ENUMERATE_LIMIT or 2 * count > pool:
        i, j = np.triu_indices(n, k=1)
        keys = i.astype(np.int64) * n + j
        keys = keys[~np.isin(keys, banned)]
        chosen = np.sort(rng.choice(keys, size=count, replace=False))
    else:
        chosen = np.zeros(0, dtype=np.int64)
        while len(chosen) < count:
            a = rng.integers(0, n, size=2 * count)
            b = rng.integers(0, n, size=2 * count)
            k = np.minimum(a, b) * n + np.maximum(a, b)
            k = k[(a != b) & ~np.isin(k, banned)]
            _, first = np.unique(k, return_index=True)
            k = k[np.sort(first)]
            k = k[~np.isin(k, chosen)]
            chosen = np.concatenate([chosen, k[:count - len(chosen)]])
        chosen = np.sort(chosen)
    return np.column_stack([chosen // n, chosen % n]).astype(np.int64)


def make_lp_split(graph: Graph, removal_frac: float = DEFAULT_REMOVAL, seed: int = 0) -> LpSplit:
    """Remove ``floor(removal_frac * |E|)`` edges uniformly and draw as many non-edges.

    The training graph keeps every node; it may become disconnected.
    """
    if not 0.0 < removal_frac < 1.0:
        raise ValueError("removal_frac must lie strictly between 0 and 1")
    k = int(math.floor(removal_frac * graph.m))
    rng = derive_rng(seed, "lp_split")
    removed = np.zeros(graph.m, dtype=bool)
    removed[rng.choice(graph.m, size=k, replace=False)] = True
    test_pos = graph.edges[removed]
    test_neg = sample_non_edges(graph, k, rng)
    train = Graph(graph.n, graph.edges[~removed], labels=graph.labels)
    return LpSplit(train, test_pos, test_neg, seed)


def hadamard_features(X: np.ndarray, edges) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= len(X)):
        raise ValueError("edge endpoint out of range")
    return X[e[:, 0]] * X[e[:, 1]]


def mean_average_precision(scores, labels) -> float:
    """Average precision of one ranking; ties keep input order."""
    scores = np.asarray(scores, dtype=float)
    rel = np.asarray(labels).astype(bool)
    if scores.shape != rel.shape:
        raise ValueError("scores and labels differ in length")
    npos = int(rel.sum())
    if npos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = rel[order]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision[hits].sum() / npos)


def lp_scores(X: np.ndarray, split: LpSplit, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Scores and 0/1 labels for the test edges, from a classifier fit on the training graph."""
    rng = derive_rng(seed, "lp_train_negatives")
    train_pos = split.train_graph.edges
    exclude = np.concatenate([split.test_neg, split.test_pos]) if len(split.test_neg) else split.test_pos
    # negatives for the scorer avoid every test pair, so nothing about the test set leaks in
    full = Graph(split.train_graph.n, np.concatenate([train_pos, split.test_pos]))
    train_neg = sample_non_edges(full, len(train_pos), rng, exclude=exclude)
    F = np.concatenate([hadamard_features(X, train_pos), hadamard_features(X, train_neg)])
    y = np.concatenate([np.ones(len(train_pos)), np.zeros(len(train_neg))])
    score = train_logreg_binary(F, y)
    test = np.concatenate([split.test_pos, split.test_neg])
    truth = np.concatenate([np.ones(len(split.test_pos)), np.zeros(len(split.test_neg))])
    return score(hadamard_features(X, test)), truth


def lp_evaluate(graph: Graph, config, removal_frac: float = DEFAULT_REMOVAL, seed: int = 0,
                repeats: int = 1, embed=None) -> EvalReport:
    """Link prediction MAP; split ``r`` uses seed ``seed + r``.

    ``embed(train_graph, config)`` returns an embedding of the training graph
    and defaults to two-phase training.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    if embed is None:
        from .trainer import two_phase_train

        def embed(g, c):
            return two_phase_train(g, c)[0]
    values = []
    for r in range(repeats):
        split = make_lp_split(graph, removal_frac, seed + r)
        X = embed(split.train_graph, config)
        scores, truth = lp_scores(X, split, seed + r)
        values.append(mean_average_precision(scores, truth))
    mean, sd = _mean_sd(values)
    cfg = asdict(config) if hasattr(config, "__dataclass_fields__") else dict(config or {})
    return EvalReport("link_prediction", "map", mean, sd, values, seed, cfg,
                      {"removal_frac": removal_frac, "negatives": "uniform non-edges, equal count",
                       "scorer": "logistic regression on Hadamard features", "l2": L2})
