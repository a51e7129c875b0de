import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from inmo.backbones import lightgcn_forward, mf_forward, normalized_adjacency, score, top_k, top_k_batch
from inmo.data import InteractionDataset

from .helpers import random_view


def dense_lightgcn(Y, X, K):
    # explicit D^-1/2 A D^-1/2 powers
    n, m = Y.shape
    A = np.block([[np.zeros((n, n)), Y], [Y.T, np.zeros((m, m))]])
    deg = A.sum(axis=1)
    Dinv = np.diag([1 / np.sqrt(x) if x > 0 else 0.0 for x in deg])
    Ahat = Dinv @ A @ Dinv
    return sum(np.linalg.matrix_power(Ahat, k) @ X for k in range(K + 1)) / (K + 1)


@given(st.integers(0, 10_000), st.booleans())
def test_lightgcn_matches_dense_power_oracle(seed, full):
    rng = np.random.default_rng(seed)
    view = random_view(rng, 7, 5, full=full)
    X = rng.normal(size=(12, 3))
    reps = lightgcn_forward(X[:7], X[7:], view, K=3)
    expect = dense_lightgcn(view.dense().astype(float), X, 3)
    assert np.abs(np.vstack([reps.R_u, reps.R_i]) - expect).max() <= 1e-10


@given(st.integers(0, 10_000))
def test_lightgcn_is_linear(seed):
    rng = np.random.default_rng(seed)
    view = random_view(rng, 6, 5)
    A = normalized_adjacency(view)
    X1, X2 = rng.normal(size=(11, 4)), rng.normal(size=(11, 4))
    a, b = rng.normal(size=2)

    def f(X):
        reps = lightgcn_forward(X[:6], X[6:], A, 3)
        return np.vstack([reps.R_u, reps.R_i])

    assert np.abs(f(a * X1 + b * X2) - (a * f(X1) + b * f(X2))).max() <= 1e-9


def test_normalized_adjacency_is_symmetric_without_loops():
    view = InteractionDataset.from_edges(3, 2, [0, 1], [0, 0])
    A = normalized_adjacency(view).toarray()
    assert np.allclose(A, A.T)
    assert not A.diagonal().any() and not A[2].any() and not A[4].any()
    assert A[0, 3] == pytest.approx(1 / np.sqrt(2))
    E = np.arange(10.0).reshape(5, 2)
    reps = lightgcn_forward(E[:3], E[3:], view, K=3)
    assert np.array_equal(reps.R_u[2], E[2] / 4)


def test_k_zero_is_identity(rng):
    E_u, E_i = rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
    reps = lightgcn_forward(E_u, E_i, random_view(rng, 4, 3), K=0)
    assert np.array_equal(reps.R_u, E_u)
    with pytest.raises(ValueError):
        lightgcn_forward(E_u, E_i, random_view(rng, 4, 3), K=-1)
    with pytest.raises(ValueError):
        lightgcn_forward(E_u, E_i, random_view(rng, 5, 3), K=1)


def test_mf_and_score():
    reps = mf_forward(np.array([[1.0, 2.0]]), np.array([[3.0, 4.0], [1.0, 0.0]]))
    assert reps.scores([0]).tolist() == [[11.0, 1.0]]
    assert score([1, 2], [3, 4]) == 11.0
    with pytest.raises(ValueError):
        mf_forward(np.ones((2, 2)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        score([1], [1, 2])


def test_top_k_excludes_and_breaks_ties_low():
    s = np.array([[0.5, 0.9, 0.9, 0.1, 0.7]])
    assert top_k_batch(s, None, 3)[0].tolist() == [1, 2, 4]
    mask = sp.csr_matrix(np.array([[0, 1, 0, 0, 0]]))
    assert top_k_batch(s, mask, 3)[0].tolist() == [2, 4, 0]
    everything = sp.csr_matrix(np.array([[1, 1, 1, 1, 0]]))
    assert top_k_batch(s, everything, 3)[0].tolist() == [4]
    reps = mf_forward(np.array([[1.0]]), np.array([[0.5], [0.9], [0.9]]))
    assert top_k(0, reps, [1], 2).tolist() == [2, 0]
    with pytest.raises(ValueError):
        top_k_batch(s, None, 0)
