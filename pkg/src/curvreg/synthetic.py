"""Small generated graphs used by the case study, tests and acceptance runs."""

import numpy as np

from ._rng import derive_rng
from .graph_core import Graph


def path_graph(n: int) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def star_graph(leaves: int) -> Graph:
    return Graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def barbell_graph(clique: int) -> Graph:
    """Two ``clique``-cliques joined by a single bridge edge."""
    edges = []
    for base in (0, clique):
        edges += [(base + i, base + j) for i in range(clique) for j in range(i + 1, clique)]
    edges.append((clique - 1, clique))
    return Graph(2 * clique, edges)


def two_block_graph(block_size: int = 100, p_in: float = 0.1, p_out: float = 0.005,
                    seed: int = 0) -> tuple[Graph, np.ndarray]:
    """Two-block stochastic block model; returns the graph and block memberships.

    Isolated nodes are patched with one edge to a random node of their own
    block so the graph stays usable for all-pairs geometry.
    """
    rng = derive_rng(seed, "two_block_graph")
    n = 2 * block_size
    block = np.repeat([0, 1], block_size)
    i, j = np.triu_indices(n, k=1)
    prob = np.where(block[i] == block[j], p_in, p_out)
    keep = rng.random(len(i)) < prob
    edges = [tuple(e) for e in np.column_stack([i[keep], j[keep]])]
    deg = np.bincount(np.concatenate([i[keep], j[keep]]), minlength=n)
    for v in np.flatnonzero(deg == 0):
        mates = np.flatnonzero((block == block[v]) & (np.arange(n) != v))
        edges.append((int(v), int(rng.choice(mates))))
    return Graph(n, edges), block
