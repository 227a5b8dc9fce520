import numpy as np
import pytest

from curvreg.embedders import (LeObjective, MfObjective, build_sgns_corpus, laplacian, le_loss_grad,
                               le_loss_terms, mf_loss_grad, mf_pairs, sgns_batch_loss_grad, sgns_step)
from curvreg.graph_core import RANDOM_WALK, Graph, PathSet, random_walks
from curvreg.synthetic import barbell_graph, cycle_graph, path_graph, two_block_graph
from curvreg.trainer import TrainConfig, train_plain

from oracles import central_difference, rel_err


def _blocks():
    return two_block_graph(100, 0.1, 0.005, seed=0)[0]


# -- matrix factorization ----------------------------------------------------


def test_mf_zero_loss_on_exact_edge():
    g = Graph(2, [(0, 1)])
    X = np.array([[1.0, 0.0], [1.0, 0.0]])
    pairs = (np.array([0]), np.array([1]), np.array([1.0]))
    loss, G = mf_loss_grad(X, pairs=pairs)
    assert loss == 0.0 and np.all(G == 0)
    assert g.m == 1


def test_mf_zero_embedding_loss_counts_edges():
    g = cycle_graph(7)
    loss, _ = mf_loss_grad(np.zeros((7, 3)), g, k_neg=2, seed=0)
    assert loss == g.m


def test_mf_pairs_composition():
    g = two_block_graph(15, 0.4, 0.05, seed=0)[0]
    i, j, y = mf_pairs(g, k_neg=3, seed=1)
    assert y.sum() == g.m and len(y) == 4 * g.m
    neg = y == 0
    assert not g.has_edges(i[neg], j[neg]).any()
    assert np.all(i[neg] != j[neg])


def test_mf_gradient_finite_difference():
    rng = np.random.default_rng(0)
    g = two_block_graph(8, 0.5, 0.1, seed=2)[0]
    obj = MfObjective(g, 3, seed=4)
    for _ in range(5):
        X = rng.normal(size=(g.n, 4))
        _, G = obj.loss_grad(X)
        assert rel_err(G, central_difference(obj.loss, X)) < 1e-6


# -- Laplacian eigenmaps -----------------------------------------------------


def test_le_smoothness_examples():
    g = path_graph(5)
    same = np.tile([0.3, -1.2], (5, 1))
    assert le_loss_terms(same, g)["smooth"] == pytest.approx(0.0, abs=1e-12)
    one = Graph(2, [(0, 1)])
    X = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert le_loss_terms(X, one)["smooth"] == pytest.approx(1.0)


def test_laplacian_rows_sum_to_zero():
    L = laplacian(_blocks()).toarray()
    assert np.allclose(L.sum(axis=1), 0) and np.allclose(L, L.T)


def test_le_penalties():
    g = cycle_graph(6)
    X = np.ones((6, 2))
    terms = le_loss_terms(X, g, beta=2.0, gamma=3.0)
    assert terms["center"] == pytest.approx(2.0 * 2)
    # X^T X / n is the all-ones 2x2 matrix; gap has zero diagonal, two unit off-diagonals
    assert terms["moment"] == pytest.approx(3.0 * 2)


def test_le_gradient_finite_difference():
    rng = np.random.default_rng(1)
    g = two_block_graph(8, 0.5, 0.1, seed=3)[0]
    obj = LeObjective(g)
    for _ in range(5):
        X = rng.normal(size=(g.n, 3))
        _, G = le_loss_grad(X, g)
        assert rel_err(G, central_difference(obj.loss, X)) < 1e-6


def test_le_trained_second_moment_near_unit():
    g = _blocks()
    X = train_plain(g, TrainConfig(embedder="le", dim=16, seed=0))
    second = (X ** 2).mean(axis=0)
    assert np.all((second > 0.5) & (second < 1.5))
    assert np.abs(X.mean(axis=0)).max() < 0.2


# -- skip-gram ---------------------------------------------------------------


def test_corpus_window_pairs():
    walks = PathSet.from_sequences([[0, 1, 2, 3]], RANDOM_WALK)
    c1 = build_sgns_corpus(walks, 1)
    assert len(c1) == 6  # three adjacent positions, both orders
    assert sorted(zip(c1.centers.tolist(), c1.contexts.tolist()))[:2] == [(0, 1), (1, 0)]
    walks = PathSet.from_sequences([[0, 1, 2]], RANDOM_WALK)
    assert len(build_sgns_corpus(walks, 1)) == 4
    assert len(build_sgns_corpus(walks, 2)) == 6
    with pytest.raises(ValueError):
        build_sgns_corpus(walks, 0)


def test_corpus_does_not_cross_walks():
    walks = PathSet.from_sequences([[0, 1], [2, 3]], RANDOM_WALK)
    c = build_sgns_corpus(walks, 5)
    assert set(zip(c.centers.tolist(), c.contexts.tolist())) == {(0, 1), (1, 0), (2, 3), (3, 2)}


def test_unigram_uniform_when_counts_equal():
    walks = PathSet.from_sequences([[0, 1], [2, 3]], RANDOM_WALK)
    c = build_sgns_corpus(walks, 1)
    assert np.allclose(c.unigram, 0.25)


def test_negatives_avoid_pair_nodes():
    g = cycle_graph(12)
    c = build_sgns_corpus(random_walks(g, 2, 6, seed=0), 2, n=12)
    rng = np.random.default_rng(0)
    neg = c.draw_negatives(c.centers, c.contexts, 5, rng)
    assert not np.any(neg == c.centers[:, None])
    assert not np.any(neg == c.contexts[:, None])


def test_sgns_gradient_finite_difference():
    rng = np.random.default_rng(2)
    n, d = 9, 3
    X, Y = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    centers = rng.integers(0, n, 12)
    contexts = rng.integers(0, n, 12)
    negs = rng.integers(0, n, (12, 4))
    _, gX, gY = sgns_batch_loss_grad(X, Y, centers, contexts, negs)
    fx = central_difference(lambda Z: sgns_batch_loss_grad(Z, Y, centers, contexts, negs)[0], X)
    fy = central_difference(lambda Z: sgns_batch_loss_grad(X, Z, centers, contexts, negs)[0], Y)
    assert rel_err(gX, fx) < 1e-6
    assert rel_err(gY, fy) < 1e-6


def test_sgns_loss_stable_when_saturated():
    X = np.array([[100.0, 0.0], [100.0, 0.0]])
    Y = X.copy()
    loss, gX, gY = sgns_batch_loss_grad(X, Y, np.array([0]), np.array([1]), np.array([[0]]))
    assert loss == pytest.approx(1e4)  # the negative scores 1e4, the positive costs ~0
    assert np.all(np.isfinite(gX)) and np.all(np.isfinite(gY))
    alone, _, _ = sgns_batch_loss_grad(X, Y, np.array([0]), np.array([1]), np.zeros((1, 0), dtype=int))
    assert 0.0 <= alone < 1e-300


def test_sgns_step_validation_and_determinism():
    g = cycle_graph(10)
    c = build_sgns_corpus(random_walks(g, 2, 5, seed=0), 2, n=10)
    out = []
    for _ in range(2):
        X = np.random.default_rng(0).normal(size=(10, 3)) * 0.1
        Y = np.zeros_like(X)
        sgns_step(X, Y, c, np.arange(len(c)), 3, 0.05, np.random.default_rng(7))
        out.append(X)
    assert np.array_equal(out[0], out[1])
    with pytest.raises(ValueError):
        sgns_step(X, Y, c, np.arange(3), 0, 0.05, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sgns_step(X, Y, c, np.arange(3), 2, 0.0, np.random.default_rng(0))


def _cos(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_sgns_barbell_separates_cliques():
    g = barbell_graph(10)
    X = train_plain(g, TrainConfig(embedder="sgns", dim=8, walks_per_node=20, walk_length=10,
                                   window=3, max_epochs_joint=20, seed=0))
    left, right = range(0, 9), range(11, 20)  # skip the bridge endpoints
    intra = np.mean([_cos(X[a], X[b]) for a in left for b in left if a < b]
                    + [_cos(X[a], X[b]) for a in right for b in right if a < b])
    inter = np.mean([_cos(X[a], X[b]) for a in left for b in right])
    assert intra > inter + 0.3


# -- shared properties ------------------------------------------------------


@pytest.mark.parametrize("embedder", ["mf", "le"])
def test_full_batch_losses_permutation_invariant(embedder):
    rng = np.random.default_rng(5)
    g = two_block_graph(10, 0.5, 0.1, seed=1)[0]
    perm = rng.permutation(g.n)
    inv = np.argsort(perm)
    gp = Graph(g.n, inv[g.edges])
    X = rng.normal(size=(g.n, 3))
    Xp = X[perm]
    if embedder == "le":
        assert LeObjective(g).loss(X) == pytest.approx(LeObjective(gp).loss(Xp), rel=1e-12)
    else:
        i, j, y = mf_pairs(g, 2, seed=0)
        a = mf_loss_grad(X, pairs=(i, j, y))[0]
        b = mf_loss_grad(Xp, pairs=(inv[i], inv[j], y))[0]
        assert a == pytest.approx(b, rel=1e-12)
