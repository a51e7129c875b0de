"""Backbones turning embeddings into final representations, plus scoring."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import InteractionDataset

__all__ = [
    "Representations",
    "mf_forward",
    "lightgcn_forward",
    "normalized_adjacency",
    "propagate",
    "score",
    "top_k",
    "top_k_batch",
]


@dataclass(frozen=True, eq=False)
class Representations:
    R_u: np.ndarray
    R_i: np.ndarray
    backbone: str = "mf"

    def scores(self, users) -> np.ndarray:
        return self.R_u[np.asarray(users)] @ self.R_i.T

    @property
    def n_items(self) -> int:
        return self.R_i.shape[0]


def _check_dims(E_u: np.ndarray, E_i: np.ndarray) -> None:
    if E_u.ndim != 2 or E_i.ndim != 2 or E_u.shape[1] != E_i.shape[1]:
        raise ValueError(f"embedding shapes {E_u.shape} and {E_i.shape} are incompatible")


def mf_forward(E_u, E_i) -> Representations:
    E_u, E_i = np.asarray(E_u), np.asarray(E_i)
    _check_dims(E_u, E_i)
    return Representations(E_u, E_i, "mf")


def normalized_adjacency(view: InteractionDataset) -> sp.csr_matrix:
    """Symmetric ``D^-1/2 A D^-1/2`` over the n + m nodes of ``view``.

    No self-loops. An isolated node has an all-zero row, so every propagated
    layer is zero there and its output is its own embedding over ``K + 1``.
    """
    Y = view.matrix()
    du = view.user_degree.astype(np.float64)
    di = view.item_degree.astype(np.float64)
    inv_u = np.divide(1.0, np.sqrt(du), out=np.zeros_like(du), where=du > 0)
    inv_i = np.divide(1.0, np.sqrt(di), out=np.zeros_like(di), where=di > 0)
    Yn = sp.diags(inv_u) @ Y @ sp.diags(inv_i)
    return sp.bmat([[None, Yn], [Yn.T, None]], format="csr")


def propagate(A: sp.csr_matrix, X: np.ndarray, K: int) -> np.ndarray:
    """Mean of ``A^l X`` over l = 0..K. A is symmetric, so this map is its
    own adjoint and also serves for backpropagation."""
    out = X.copy()
    layer = X
    for _ in range(K):
        layer = A @ layer
        out += layer
    return out / (K + 1)


def lightgcn_forward(E_u, E_i, view: InteractionDataset | sp.csr_matrix, K: int = 3) -> Representations:
    """Average of ``K + 1`` rounds of symmetric-normalized propagation.

    ``view`` is the propagation graph, or its precomputed
    :func:`normalized_adjacency`.
    """
    if K < 0:
        raise ValueError(f"K must be non-negative, got {K}")
    E_u, E_i = np.asarray(E_u), np.asarray(E_i)
    _check_dims(E_u, E_i)
    A = view if sp.issparse(view) else normalized_adjacency(view)
    n = E_u.shape[0]
    if A.shape[0] != n + E_i.shape[0]:
        raise ValueError("propagation graph does not match embedding rows")
    R = propagate(A, np.vstack([E_u, E_i]), K)
    return Representations(R[:n], R[n:], f"lightgcn({K})")


def score(r_u, r_i) -> float:
    r_u, r_i = np.asarray(r_u), np.asarray(r_i)
    if r_u.shape != r_i.shape:
        raise ValueError("representation dimensions differ")
    return float(r_u @ r_i)


def top_k_batch(scores: np.ndarray, exclude: sp.csr_matrix | None, k: int) -> list[np.ndarray]:
    """Row-wise top-k of a score matrix, ties to the lower item index.

    ``exclude`` is a sparse 0/1 mask with the same shape as ``scores``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    scores = np.array(scores, dtype=np.float64)
    if exclude is not None:
        mask = exclude.tocoo()
        scores[mask.row, mask.col] = -np.inf
    order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    top = np.take_along_axis(scores, order, axis=1)
    return [row[np.isfinite(s)] for row, s in zip(order, top)]


def top_k(u: int, reps, exclude, k: int) -> np.ndarray:
    """The ``k`` best-scoring items for user ``u`` outside ``exclude``."""
    s = reps.scores([u])
    m = s.shape[1]
    ex = np.asarray(sorted(exclude), dtype=np.int64) if exclude is not None else np.empty(0, np.int64)
    mask = sp.csr_matrix((np.ones(ex.size), (np.zeros(ex.size, dtype=np.int64), ex)), shape=(1, m))
    return top_k_batch(s, mask, k)[0]
