import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inmo.linalg import SizeCapError, check_dense_cap, truncated_svd


def gram_oracle(Y, d):
    """Singular values and right vectors from the eigendecomposition of Y^T Y."""
    w, Q = np.linalg.eigh(Y.T @ Y)
    order = np.argsort(w)[::-1]
    w = np.clip(w[order], 0.0, None)
    return np.sqrt(w), Q[:, order[:d]]


@given(st.integers(0, 10_000), st.integers(3, 12), st.integers(3, 12), st.data())
def test_matches_gram_eigendecomposition(seed, n, m, data):
    Y = (np.random.default_rng(seed).random((n, m)) < 0.4).astype(float)
    d = data.draw(st.integers(1, min(n, m)))
    svd = truncated_svd(Y, d)
    sigma, V_or = gram_oracle(Y, d)
    assert np.allclose(svd.spectrum, sigma[: svd.spectrum.size], atol=1e-6)
    assert svd.eps_min == pytest.approx(np.sqrt(np.sum(sigma[d:] ** 2)), abs=1e-6)
    assert svd.eps_min == pytest.approx(np.linalg.norm(Y - svd.reconstruct()), abs=1e-9)
    if sigma[d - 1] - (sigma[d] if d < sigma.size else 0) > 1e-3 and sigma[d - 1] > 1e-3:
        # subspaces agree even when individual vectors are rotated or flipped
        assert np.allclose(svd.V @ svd.V.T, V_or @ V_or.T, atol=1e-6)
    assert np.allclose(svd.U.T @ svd.U, np.eye(d), atol=1e-10)


def test_sign_convention_is_deterministic():
    Y = np.array([[1.0, 0, 1], [0, 1, 1], [1, 1, 0], [1, 0, 0]])
    a, b = truncated_svd(Y, 2), truncated_svd(-(-Y), 2)
    assert np.array_equal(a.V, b.V)
    pivot = np.abs(a.V).argmax(axis=0)
    assert (a.V[pivot, np.arange(2)] > 0).all()


def test_rank_deficient_and_degenerate():
    Y = np.array([[1.0, 1, 0], [1, 1, 0], [0, 0, 0]])
    svd = truncated_svd(Y, 2)
    assert svd.rank == 1
    assert svd.S[1] == 0.0
    iso = truncated_svd(np.eye(4), 2)
    assert iso.degenerate and iso.eps_min == pytest.approx(np.sqrt(2))
    assert not truncated_svd(np.diag([3.0, 2, 1]), 2).degenerate


def test_bounds_and_cap():
    with pytest.raises(ValueError):
        truncated_svd(np.ones((3, 2)), 3)
    with pytest.raises(SizeCapError):
        truncated_svd(np.ones((10, 10)), 2, cap=99)
    check_dense_cap(10, 10, cap=100)
    with pytest.raises(SizeCapError, match="dense cap"):
        check_dense_cap(2001, 2000)
