"""Graph ingestion, connectivity, shortest paths and random-walk path generation.

Everything downstream (curvature, distortion, regularizers, skip-gram corpora)
consumes node sequences produced here, so the tie-breaking rules in this module
define which polygonal curves the rest of the package sees.
"""

from __future__ import annotations

import hashlib
import io
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import breadth_first_order, connected_components

from ._rng import derive_rng
from .errors import CurvregError, GraphFormatError

SHORTEST = "shortest"
WALK = "walk"

ALL_PAIRS = "all_pairs"
SAMPLED_PAIRS = "sampled_pairs"
RANDOM_WALK = "random_walk"

_NO_PRED = -9999  # scipy's marker for "no predecessor"


def _label_key(label: str):
    try:
        return (0, int(label), "")
    except ValueError:
        return (1, 0, label)


class Graph:
    """Undirected, unweighted simple graph with contiguous ids ``0..n-1``.

    Edges are canonicalised on construction: self-loops are dropped, direction
    is discarded and duplicates collapse. ``labels[i]`` is the original token of
    internal node ``i``.
    """

    def __init__(self, n: int, edges, labels: Sequence[str] | None = None):
        n = int(n)
        if n < 1:
            raise GraphFormatError("graph needs at least one node")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise GraphFormatError("edge endpoint out of range")
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        keep = lo != hi
        keys = np.unique(lo[keep] * n + hi[keep])
        self.n = n
        self.edges = np.column_stack([keys // n, keys % n]).astype(np.int64)
        self._keys = keys

        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        order = np.lexsort((cols, rows))
        self.indices = cols[order]
        self.degree = np.bincount(rows, minlength=n).astype(np.int64)
        self.indptr = np.concatenate([[0], np.cumsum(self.degree)]).astype(np.int64)

        if labels is None:
            labels = [str(i) for i in range(n)]
        if len(labels) != n:
            raise GraphFormatError("labels must have one entry per node")
        self.labels = [str(x) for x in labels]
        self.id_map = {lab: i for i, lab in enumerate(self.labels)}
        if len(self.id_map) != n:
            raise GraphFormatError("node labels must be unique")
        for arr in (self.edges, self.indices, self.degree, self.indptr, self._keys):
            arr.setflags(write=False)
        self._csr = None

    @property
    def m(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def adjacency(self) -> list[tuple[int, ...]]:
        return [tuple(int(j) for j in self.neighbors(i)) for i in range(self.n)]

    @property
    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.edges}

    def has_edges(self, a, b) -> np.ndarray:
        """Vectorised adjacency test for node arrays ``a`` and ``b``."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        keys = np.minimum(a, b) * self.n + np.maximum(a, b)
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, max(len(self._keys) - 1, 0))
        if len(self._keys) == 0:
            return np.zeros(keys.shape, dtype=bool)
        return (self._keys[pos] == keys) & (a != b)

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.has_edges(i, j))

    def csr(self) -> sparse.csr_matrix:
        if self._csr is None:
            data = np.ones(len(self.indices), dtype=np.float64)
            mat = sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))
            mat.sort_indices()
            self._csr = mat
        return self._csr

    def subgraph(self, nodes) -> "Graph":
        """Induced subgraph on ``nodes``; new ids follow ascending old id."""
        nodes = np.unique(np.asarray(nodes, dtype=np.int64))
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[nodes] = np.arange(len(nodes))
        ea, eb = remap[self.edges[:, 0]], remap[self.edges[:, 1]]
        keep = (ea >= 0) & (eb >= 0)
        return Graph(len(nodes), np.column_stack([ea[keep], eb[keep]]),
                     [self.labels[i] for i in nodes])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.n).encode())
        h.update(self.edges.tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.edges, other.edges)
                and self.labels == other.labels)

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


@dataclass(frozen=True)
class PolygonalPath:
    """Ordered node sequence realising a geodesic polygonal curve or an acyclic walk."""

    nodes: tuple[int, ...]
    kind: str = SHORTEST

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ValueError("a polygonal path needs at least two nodes")

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def is_valid(self, graph: Graph) -> bool:
        """Consecutive nodes adjacent and no node repeated."""
        arr = np.asarray(self.nodes)
        if arr.min() < 0 or arr.max() >= graph.n:
            return False
        return len(set(self.nodes)) == len(self.nodes) and bool(graph.has_edges(arr[:-1], arr[1:]).all())


@dataclass(frozen=True, eq=False)
class PathSet:
    """A collection of polygonal paths stored as one flat node array plus offsets.

    ``source`` records provenance: ``all_pairs``, ``sampled_pairs`` or
    ``random_walk``. ``skipped`` counts requests that produced no path
    (unreachable pairs, walks that collapsed below two nodes).
    """

    nodes: np.ndarray
    offsets: np.ndarray
    source: str
    kind: str = SHORTEST
    skipped: int = 0
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_sequences(cls, seqs: Iterable[Sequence[int]], source: str, kind: str = SHORTEST,
                       skipped: int = 0, meta: dict | None = None) -> "PathSet":
        seqs = [np.asarray(s, dtype=np.int64) for s in seqs]
        lengths = np.array([len(s) for s in seqs], dtype=np.int64)
        if np.any(lengths < 2):
            raise ValueError("every path needs at least two nodes")
        offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        flat = np.concatenate(seqs) if seqs else np.zeros(0, dtype=np.int64)
        return cls(flat, offsets, source, kind, skipped, dict(meta or {}))

    def __len__(self):
        return len(self.offsets) - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def path(self, i: int) -> np.ndarray:
        return self.nodes[self.offsets[i]:self.offsets[i + 1]]

    def __getitem__(self, i: int) -> PolygonalPath:
        return PolygonalPath(tuple(int(x) for x in self.path(i)), self.kind)

    def __iter__(self) -> Iterator[PolygonalPath]:
        for i in range(len(self)):
            yield self[i]

    def triples(self):
        """All interior vertices as ``(path_index, position, prev, vertex, next)`` arrays."""
        npaths = len(self)
        if npaths == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty, empty, empty
        path_id = np.repeat(np.arange(npaths), self.lengths)
        k = np.arange(len(self.nodes) - 2)
        ok = path_id[k] == path_id[k + 2]
        k = k[ok]
        pid = path_id[k]
        pos = k + 1 - self.offsets[pid]
        return pid, pos, self.nodes[k], self.nodes[k + 1], self.nodes[k + 2]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.source.encode())
        h.update(self.offsets.tobytes())
        h.update(self.nodes.tobytes())
        return h.hexdigest()[:16]

    def save(self, path) -> None:
        np.savez(path, nodes=self.nodes, offsets=self.offsets,
                 source=np.array(self.source), kind=np.array(self.kind),
                 skipped=np.array(self.skipped))

    @classmethod
    def load(cls, path) -> "PathSet":
        with np.load(path) as z:
            return cls(z["nodes"], z["offsets"], str(z["source"]), str(z["kind"]), int(z["skipped"]))


@dataclass
class LabelMap:
    """Class labels for (a subset of) graph nodes, densified to ``0..C-1``."""

    nodes: np.ndarray
    y: np.ndarray
    classes: list[str]
    tokens: list[str]

    def __len__(self):
        return len(self.nodes)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def as_dict(self) -> dict[int, int]:
        return {int(i): int(c) for i, c in zip(self.nodes, self.y)}

    def reindex(self, graph: Graph) -> "LabelMap":
        """Re-express the labels in the ids of ``graph``, dropping absent nodes."""
        keep = [(graph.id_map[t], c, t) for t, c in zip(self.tokens, self.y) if t in graph.id_map]
        keep.sort()
        return LabelMap(np.array([k[0] for k in keep], dtype=np.int64),
                        np.array([k[1] for k in keep], dtype=np.int64),
                        list(self.classes), [k[2] for k in keep])


def _lines(source) -> Iterable[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            yield from fh
    elif isinstance(source, io.IOBase):
        yield from source
    else:
        yield from source


def load_edge_list(source) -> Graph:
    """Read a whitespace-separated edge list.

    ``source`` is a filesystem path, an open text file or an iterable of lines.
    Lines starting with ``#`` and blank lines are ignored. Node ids are assigned
    in order of first appearance.
    """
    id_map: dict[str, int] = {}
    pairs = []
    for lineno, raw in enumerate(_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise GraphFormatError(f"line {lineno}: expected two node tokens, got {len(tokens)}")
        a = id_map.setdefault(tokens[0], len(id_map))
        b = id_map.setdefault(tokens[1], len(id_map))
        pairs.append((a, b))
    if not pairs:
        raise GraphFormatError("edge list contains no edges")
    labels = list(id_map)
    g = Graph(len(labels), pairs, labels)
    if g.m == 0:
        raise GraphFormatError("edge list contains only self-loops")
    return g


def load_labels(source, graph: Graph) -> LabelMap:
    """Read ``node_token label_token`` lines.

    Lines with more than two tokens use the first and the last token, which
    lets Cora-style ``.content`` files be read directly.
    """
    found: dict[str, str] = {}
    for lineno, raw in enumerate(_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise GraphFormatError(f"line {lineno}: expected node and label tokens")
        node, label = tokens[0], tokens[-1]
        if node not in graph.id_map:
            raise GraphFormatError(f"line {lineno}: unknown node token {node!r}")
        found[node] = label
    if not found:
        raise GraphFormatError("label file contains no labels")
    classes = sorted(set(found.values()), key=_label_key)
    cls_id = {c: k for k, c in enumerate(classes)}
    items = sorted((graph.id_map[t], cls_id[lab], t) for t, lab in found.items())
    return LabelMap(np.array([i for i, _, _ in items], dtype=np.int64),
                    np.array([c for _, c, _ in items], dtype=np.int64),
                    classes, [t for _, _, t in items])


def component_labels(graph: Graph) -> np.ndarray:
    _, comp = connected_components(graph.csr(), directed=False)
    return comp


def largest_connected_component(graph: Graph) -> Graph:
    """Induced subgraph on the largest component.

    Ties go to the component holding the smallest original id (numeric
    comparison when labels are integers).
    """
    comp = component_labels(graph)
    if comp.max() == 0:
        return graph
    sizes = np.bincount(comp)
    best = None
    for c in np.flatnonzero(sizes == sizes.max()):
        key = min(_label_key(graph.labels[i]) for i in np.flatnonzero(comp == c))
        if best is None or key < best[0]:
            best = (key, c)
    return graph.subgraph(np.flatnonzero(comp == best[1]))


def shortest_path(graph: Graph, src: int, dst: int) -> PolygonalPath | None:
    """One BFS shortest path from ``src`` to ``dst``, or ``None`` when unreachable.

    Neighbours are expanded in ascending id order and every node keeps its first
    discoverer as parent, which makes the returned path the lexicographically
    smallest among all shortest paths.
    """
    if src == dst:
        raise ValueError("src and dst must differ")
    if not (0 <= src < graph.n and 0 <= dst < graph.n):
        raise IndexError("node id out of range")
    parent = {src: src}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in graph.neighbors(u):
            v = int(v)
            if v in parent:
                continue
            parent[v] = u
            if v == dst:
                seq = [dst]
                while seq[-1] != src:
                    seq.append(parent[seq[-1]])
                return PolygonalPath(tuple(reversed(seq)), SHORTEST)
            queue.append(v)
    return None


def bfs_predecessors(graph: Graph, src: int) -> np.ndarray:
    """BFS parent array rooted at ``src`` (same tie-break as :func:`shortest_path`).

    The root maps to itself; unreachable nodes map to -1.
    """
    _, pred = breadth_first_order(graph.csr(), int(src), directed=True, return_predecessors=True)
    pred = pred.astype(np.int64)
    pred[pred == _NO_PRED] = -1
    pred[src] = src
    return pred


def _chains(pred: np.ndarray, src: int, dsts: np.ndarray):
    """Ancestor chains of ``dsts`` in a BFS tree; returns (paths matrix, depth)."""
    cols = [dsts]
    cur = dsts
    while True:
        nxt = pred[cur]
        nxt = np.where(cur == src, src, nxt)
        if np.all(nxt == cur):
            break
        cols.append(nxt)
        cur = nxt
    mat = np.column_stack(cols[::-1])  # column 0 is the deepest ancestor level
    depth = (mat != src).sum(axis=1)
    return mat, depth


def pair_paths(graph: Graph, pairs, source: str = SAMPLED_PAIRS, meta: dict | None = None) -> PathSet:
    """Shortest paths for each ``(src, dst)`` pair, in input order.

    Unreachable pairs are left out and counted in ``PathSet.skipped``.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise ValueError("pair endpoints must differ")
    out: list[np.ndarray | None] = [None] * len(pairs)
    for src in np.unique(pairs[:, 0]):
        idx = np.flatnonzero(pairs[:, 0] == src)
        pred = bfs_predecessors(graph, int(src))
        dsts = pairs[idx, 1]
        reach = pred[dsts] >= 0
        if not reach.any():
            continue
        idx, dsts = idx[reach], dsts[reach]
        mat, depth = _chains(pred, int(src), dsts)
        width = mat.shape[1]
        for row, (k, d) in enumerate(zip(idx, depth)):
            out[k] = mat[row, width - d - 1:]
    seqs = [p for p in out if p is not None]
    return PathSet.from_sequences(seqs, source, SHORTEST, skipped=len(pairs) - len(seqs), meta=meta)


def all_pair_list(nodes) -> np.ndarray:
    nodes = np.sort(np.asarray(nodes, dtype=np.int64))
    i, j = np.triu_indices(len(nodes), k=1)
    return np.column_stack([nodes[i], nodes[j]])


def all_pairs_paths(graph: Graph) -> PathSet:
    return pair_paths(graph, all_pair_list(np.arange(graph.n)), source=ALL_PAIRS)


def sample_node_set(graph: Graph, size: int, seed: int) -> np.ndarray:
    """Uniform sample of ``size`` distinct nodes, sorted ascending."""
    if not 2 <= size <= graph.n:
        raise ValueError(f"sample size must lie in [2, {graph.n}], got {size}")
    rng = derive_rng(seed, "sample_node_set")
    return np.sort(rng.choice(graph.n, size=size, replace=False))


def make_acyclic(path) -> PolygonalPath | None:
    """Truncate a walk just before its first repeated node.

    Returns ``None`` when fewer than two nodes survive.
    """
    nodes = path.nodes if isinstance(path, PolygonalPath) else tuple(int(x) for x in path)
    kind = path.kind if isinstance(path, PolygonalPath) else WALK
    if len(nodes) < 1:
        raise ValueError("path must contain at least one node")
    seen = set()
    cut = len(nodes)
    for k, v in enumerate(nodes):
        if v in seen:
            cut = k
            break
        seen.add(v)
    if cut < 2:
        return None
    return PolygonalPath(tuple(nodes[:cut]), kind)


def _acyclic_prefix_lengths(walks: np.ndarray) -> np.ndarray:
    length = walks.shape[1]
    cut = np.full(len(walks), length, dtype=np.int64)
    alive = np.ones(len(walks), dtype=bool)
    for k in range(1, length):
        rep = (walks[:, :k] == walks[:, k:k + 1]).any(axis=1) & alive
        cut[rep] = k
        alive &= ~rep
        if not alive.any():
            break
    return cut


def random_walks(graph: Graph, walks_per_node: int, walk_length: int, strategy: str = "uniform",
                 p: float = 1.0, q: float = 1.0, seed: int = 0) -> PathSet:
    """Random walks from every node, truncated to their acyclic prefix.

    ``strategy="biased"`` applies second-order weights ``1/p`` for returning to
    the previous node, ``1`` for a node adjacent to it and ``1/q`` otherwise,
    sampled by rejection. Walks from isolated nodes (and any walk whose acyclic
    prefix has fewer than two nodes) are dropped and counted in ``skipped``.
    """
    if walk_length < 2:
        raise ValueError("walk_length must be at least 2")
    if strategy not in ("uniform", "biased"):
        raise ValueError(f"unknown walk strategy {strategy!r}")
    if strategy == "biased" and (p <= 0 or q <= 0):
        raise ValueError("p and q must be positive")
    biased = strategy == "biased" and not (p == 1.0 and q == 1.0)
    rng = derive_rng(seed, "random_walks")

    starts = np.tile(np.arange(graph.n, dtype=np.int64), walks_per_node)
    total = len(starts)
    starts = starts[graph.degree[starts] > 0]
    walks = np.empty((len(starts), walk_length), dtype=np.int64)
    walks[:, 0] = starts
    deg, indptr, indices = graph.degree, graph.indptr, graph.indices
    w_return, w_far = 1.0 / p, 1.0 / q
    w_max = max(w_return, 1.0, w_far)

    for s in range(1, walk_length):
        cur = walks[:, s - 1]
        if not biased or s == 1:
            pick = (rng.random(len(cur)) * deg[cur]).astype(np.int64)
            walks[:, s] = indices[indptr[cur] + pick]
            continue
        prev = walks[:, s - 2]
        pending = np.arange(len(cur))
        while len(pending):
            c = cur[pending]
            x = indices[indptr[c] + (rng.random(len(c)) * deg[c]).astype(np.int64)]
            back = x == prev[pending]
            near = graph.has_edges(prev[pending], x)
            weight = np.where(back, w_return, np.where(near, 1.0, w_far))
            ok = rng.random(len(c)) * w_max < weight
            walks[pending[ok], s] = x[ok]
            pending = pending[~ok]

    cut = _acyclic_prefix_lengths(walks) if len(walks) else np.zeros(0, dtype=np.int64)
    seqs = [walks[i, :cut[i]] for i in range(len(walks)) if cut[i] >= 2]
    meta = {"walks_per_node": walks_per_node, "walk_length": walk_length,
            "strategy": strategy, "p": p, "q": q, "seed": seed}
    return PathSet.from_sequences(seqs, RANDOM_WALK, WALK, skipped=total - len(seqs), meta=meta)


def require_connected(graph: Graph) -> None:
    if graph.n > 1 and component_labels(graph).max() > 0:
        raise CurvregError("graph is disconnected; reduce it to its largest component first")
