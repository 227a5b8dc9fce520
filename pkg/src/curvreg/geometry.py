"""Metric and curvature computations over an embedding.

An embedding is an ``(n, d)`` float array whose row ``i`` is the point of node
``i``. Curvature is handled through the cosine of the turning angle at each
interior vertex of a polygonal path: 1 on a straight continuation, 0 for a
right-angle turn, -1 when the path doubles back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ._rng import derive_rng
from .errors import CapacityError, DegenerateError
from .graph_core import Graph, PathSet, PolygonalPath, bfs_predecessors

EPS = 1e-12
FULL_DISTORTION_MAX_NODES = 3000


def _nodes(path) -> np.ndarray:
    if isinstance(path, PolygonalPath):
        return np.asarray(path.nodes, dtype=np.int64)
    return np.asarray(path, dtype=np.int64)


def euclidean_distance(x_i, x_j) -> float:
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if x_i.shape != x_j.shape:
        raise ValueError(f"dimension mismatch: {x_i.shape} vs {x_j.shape}")
    return float(np.linalg.norm(x_i - x_j))


def geodesic_distance(X: np.ndarray, path) -> float:
    """Length of the polygonal curve through the embedded nodes of ``path``."""
    nodes = _nodes(path)
    if len(nodes) < 2:
        raise ValueError("path needs at least two nodes")
    seg = X[nodes[1:]] - X[nodes[:-1]]
    return float(np.sqrt((seg * seg).sum(axis=1)).sum())


def triple_cosines(X: np.ndarray, a, b, c):
    """Turning cosines at ``b`` for the segments ``a -> b -> c`` (vectorised).

    Returns ``(cos, ok)``; entries where either segment is shorter than
    ``EPS`` are marked not ok and their cosine is set to 1.
    """
    u = X[b] - X[a]
    v = X[c] - X[b]
    nu = np.sqrt((u * u).sum(axis=1))
    nv = np.sqrt((v * v).sum(axis=1))
    ok = (nu > EPS) & (nv > EPS)
    denom = np.where(ok, nu * nv, 1.0)
    cos = np.where(ok, (u * v).sum(axis=1) / denom, 1.0)
    return np.clip(cos, -1.0, 1.0), ok


def turning_cosine(X: np.ndarray, path, q: int) -> float | None:
    """Cosine of the turning angle at interior position ``q``; ``None`` if degenerate."""
    nodes = _nodes(path)
    if not 1 <= q <= len(nodes) - 2:
        raise ValueError(f"q={q} is not an interior position of a {len(nodes)}-node path")
    cos, ok = triple_cosines(X, nodes[q - 1:q], nodes[q:q + 1], nodes[q + 1:q + 2])
    return float(cos[0]) if ok[0] else None


class CurvatureSample(NamedTuple):
    path: int
    q: int
    vertex: int
    cosine: float


@dataclass
class CurvatureField:
    """Turning cosines at every interior vertex of every path in a path set.

    Grouping the samples by ``vertex`` gives the curvature vector at each
    embedded point; the whole object is the curvature vector field.
    """

    path_index: np.ndarray
    position: np.ndarray
    vertex: np.ndarray
    cosine: np.ndarray
    skipped: int = 0

    def __len__(self):
        return len(self.cosine)

    def __iter__(self):
        for p, q, v, c in zip(self.path_index, self.position, self.vertex, self.cosine):
            yield CurvatureSample(int(p), int(q), int(v), float(c))

    def at(self, vertex: int) -> np.ndarray:
        return self.cosine[self.vertex == vertex]

    def by_node(self) -> dict[int, list[CurvatureSample]]:
        out: dict[int, list[CurvatureSample]] = {}
        for s in self:
            out.setdefault(s.vertex, []).append(s)
        return out

    def stats(self) -> dict:
        if len(self.cosine) == 0:
            return {"count": 0, "skipped": self.skipped, "mean": None, "min": None, "max": None}
        return {"count": int(len(self.cosine)), "skipped": int(self.skipped),
                "mean": float(self.cosine.mean()), "min": float(self.cosine.min()),
                "max": float(self.cosine.max())}


def curvature_field(X: np.ndarray, paths: PathSet) -> CurvatureField:
    if len(paths) == 0:
        raise ValueError("path set is empty")
    pid, pos, a, b, c = paths.triples()
    cos, ok = triple_cosines(X, a, b, c)
    return CurvatureField(pid[ok], pos[ok], b[ok], cos[ok], skipped=int((~ok).sum()))


def _tree_geodesics(X: np.ndarray, pred: np.ndarray, src: int) -> np.ndarray:
    """Geodesic distance from ``src`` to every node along its BFS tree (NaN if unreachable)."""
    reach = pred >= 0
    parent = np.where(reach, pred, np.arange(len(pred)))
    parent[src] = src
    diff = X - X[parent]
    dist = np.sqrt((diff * diff).sum(axis=1))
    dist[~reach] = 0.0
    dist[src] = 0.0
    anc = parent
    # pointer jumping: after k rounds dist[v] covers 2**k edges of v's chain
    while True:
        nxt = anc[anc]
        if np.array_equal(nxt, anc):
            break
        dist = dist + dist[anc]
        anc = nxt
    dist[~reach] = np.nan
    return dist


@dataclass
class DistortionResult:
    rho: float
    pairs_used: int
    coincident_skipped: int
    unreachable_skipped: int
    mode: str


def sample_pairs(graph: Graph, count: int, seed: int) -> np.ndarray:
    """``count`` ordered pairs ``(i, j)``, ``i != j``, drawn uniformly with replacement."""
    rng = derive_rng(seed, "distortion_pairs")
    i = rng.integers(0, graph.n, size=count)
    j = rng.integers(0, graph.n - 1, size=count)
    j = j + (j >= i)
    return np.column_stack([i, j]).astype(np.int64)


def distortion_details(X: np.ndarray, graph: Graph, pairs=None) -> DistortionResult:
    """Mean ratio of geodesic to Euclidean distance over ordered node pairs.

    With ``pairs=None`` every connected ordered pair is used, which is only
    allowed up to ``FULL_DISTORTION_MAX_NODES`` nodes. Pairs whose endpoints
    coincide in the embedding are skipped and counted.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] != graph.n:
        raise ValueError(f"embedding has {X.shape[0]} rows but the graph has {graph.n} nodes")
    if pairs is None:
        if graph.n > FULL_DISTORTION_MAX_NODES:
            raise CapacityError(
                f"all-pairs distortion is limited to {FULL_DISTORTION_MAX_NODES} nodes; "
                "pass a sampled pair list (see sample_pairs)")
        groups = [(s, None) for s in range(graph.n)]
        mode = "all_pairs"
    else:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            raise ValueError("pair endpoints must differ")
        order = np.argsort(pairs[:, 0], kind="stable")
        srcs, starts = np.unique(pairs[order, 0], return_index=True)
        bounds = list(starts[1:]) + [len(order)]
        groups = [(int(s), pairs[order[lo:hi], 1]) for s, lo, hi in zip(srcs, starts, bounds)]
        mode = "sampled_pairs"

    total = 0.0
    used = coincident = unreachable = 0
    for src, dsts in groups:
        pred = bfs_predecessors(graph, src)
        d_m = _tree_geodesics(X, pred, src)
        diff = X - X[src]
        d_e = np.sqrt((diff * diff).sum(axis=1))
        if dsts is None:
            sel = np.ones(graph.n, dtype=bool)
            sel[src] = False
            dm, de = d_m[sel], d_e[sel]
        else:
            dm, de = d_m[dsts], d_e[dsts]
        reach = ~np.isnan(dm)
        unreachable += int((~reach).sum())
        good = reach & (de > EPS)
        coincident += int((reach & ~good).sum())
        used += int(good.sum())
        total += float(np.sum(dm[good] / de[good]))
    if used == 0:
        raise DegenerateError("no usable pair for distortion (all unreachable or coincident)")
    return DistortionResult(total / used, used, coincident, unreachable, mode)


def distortion(X: np.ndarray, graph: Graph, pairs=None) -> float:
    return distortion_details(X, graph, pairs).rho


@dataclass
class TheoremReport:
    satisfied: bool
    max_abs_sum: float


def theorem_condition_check(X: np.ndarray, path) -> TheoremReport:
    """Conservative check that every sub-path turns by less than pi/2 in total.

    Unsigned turning angles are summed, which bounds the absolute signed sum
    from above; the largest sub-path sum is therefore the sum over the whole
    path. Degenerate vertices contribute nothing.
    """
    nodes = _nodes(path)
    if len(nodes) < 3:
        raise ValueError("condition check needs a path with an interior vertex")
    cos, ok = triple_cosines(X, nodes[:-2], nodes[1:-1], nodes[2:])
    theta = np.where(ok, np.arccos(cos), 0.0)
    total = float(theta.sum())
    return TheoremReport(total < math.pi / 2, total)


def theorem_pass_fraction(X: np.ndarray, paths: PathSet) -> float | None:
    """Fraction of paths with an interior vertex that pass :func:`theorem_condition_check`."""
    pid, _, a, b, c = paths.triples()
    if len(pid) == 0:
        return None
    cos, ok = triple_cosines(X, a, b, c)
    theta = np.where(ok, np.arccos(cos), 0.0)
    sums = np.bincount(pid, weights=theta, minlength=len(paths))
    has_interior = paths.lengths >= 3
    return float(np.mean(sums[has_interior] < math.pi / 2))


def save_embedding(path, X: np.ndarray, labels=None) -> None:
    """Write ``n d`` then one row per node; labels go to a ``.ids`` sidecar."""
    path = Path(path)
    X = np.asarray(X, dtype=float)
    lines = [f"{X.shape[0]} {X.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in X]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if labels is not None:
        Path(str(path) + ".ids").write_text("\n".join(labels) + "\n", encoding="utf-8")


def load_embedding(path) -> tuple[np.ndarray, list[str] | None]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: first line must be 'n d'")
        n, d = int(header[0]), int(header[1])
        X = np.loadtxt(fh, dtype=float, ndmin=2)
    if X.shape != (n, d):
        raise ValueError(f"{path}: header says {n}x{d}, found {X.shape[0]}x{X.shape[1]}")
    ids = Path(str(path) + ".ids")
    labels = ids.read_text(encoding="utf-8").split("\n")[:n] if ids.exists() else None
    return X, labels
