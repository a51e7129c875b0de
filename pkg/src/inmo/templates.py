"""Template selection: per-entity indicators and top-fraction selection.

Indicators score how much an entity matters as a template. ``error_sort``
comes from bounding the extra reconstruction error caused by leaving an
entity out of the template set; degree and PageRank are the heuristic
baselines it is compared against.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .data import InteractionDataset
from .linalg import DENSE_CAP, SizeCapError, check_dense_cap, truncated_svd

__all__ = [
    "TemplateSet",
    "degree_indicator",
    "pagerank_indicator",
    "error_sort_exact",
    "error_sort_simplified",
    "INDICATORS",
    "indicator_scores",
    "select_top",
    "select_templates",
    "templates_for_view",
    "error_curve",
    "write_error_curve_csv",
]

NON_TEMPLATE = -1


def _oriented(ds: InteractionDataset, side: str) -> InteractionDataset:
    if side == "user":
        return ds
    if side == "item":
        return ds.transpose()
    raise ValueError(f"side must be 'user' or 'item', got {side!r}")


def degree_indicator(ds: InteractionDataset, side: str = "user") -> np.ndarray:
    return _oriented(ds, side).user_degree.astype(np.float64)


def pagerank_indicator(
    ds: InteractionDataset,
    side: str = "user",
    damping: float = 0.85,
    iters: int = 100,
    tol: float = 1e-10,
) -> np.ndarray:
    """PageRank on the interaction graph taken as undirected.

    Scores are computed over all ``n + m`` nodes (summing to one) and the
    requested side's slice is returned. Nodes without edges spread their
    mass uniformly, like the teleport.
    """
    if not 0 < damping < 1:
        raise ValueError(f"damping must lie in (0, 1), got {damping}")
    g = _oriented(ds, side)
    n, m = g.n, g.m
    Y = g.matrix()
    A = sp.bmat([[None, Y], [Y.T, None]], format="csr")
    deg = np.asarray(A.sum(axis=1)).ravel()
    dangling = deg == 0
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=~dangling)
    N = n + m
    p = np.full(N, 1.0 / N)
    for _ in range(iters):
        nxt = damping * (A @ (p * inv)) + (damping * p[dangling].sum() + 1.0 - damping) / N
        delta = np.abs(nxt - p).sum()
        p = nxt
        if delta < tol:
            break
    return p[:n]


def _neighbor_degree_sum(g: InteractionDataset, power: float) -> np.ndarray:
    # sum over i in N_u of |N_i| ** power
    deg = g.item_degree.astype(np.float64)
    # zero-degree items have no neighbors to contribute to, weight them 0
    weights = np.power(deg, power, out=np.zeros_like(deg), where=deg > 0)
    return g.matrix() @ weights


def error_sort_exact(ds: InteractionDataset, d: int, side: str = "user", cap: int = DENSE_CAP) -> np.ndarray:
    """``|s_j|^2 * sum_{i in N_j} |N_i|`` with ``s_j`` column j of ``U_d U_d^T``.

    ``|s_j|^2`` equals the squared norm of row j of ``U_d`` (the leverage
    score), so the projection matrix is never formed. Needs a dense SVD and
    refuses matrices above ``cap`` entries; use
    :func:`error_sort_simplified` for those.
    """
    g = _oriented(ds, side)
    check_dense_cap(g.n, g.m, cap, hint="use error_sort_simplified for large datasets")
    U = truncated_svd(g.dense(), d, cap=cap).U
    leverage = np.einsum("ij,ij->i", U, U)
    return leverage * _neighbor_degree_sum(g, 1.0)


def error_sort_simplified(ds: InteractionDataset, side: str = "user") -> np.ndarray:
    """``sum_{i in N_u} 1 / |N_i|`` (item side symmetric)."""
    g = _oriented(ds, side)
    return _neighbor_degree_sum(g, -1.0)


INDICATORS: dict[str, Callable[..., np.ndarray]] = {
    "degree": degree_indicator,
    "pagerank": pagerank_indicator,
    "error_sort": error_sort_simplified,
    "error_sort_exact": error_sort_exact,
}


def indicator_scores(ds: InteractionDataset, name: str, d: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """User and item scores under indicator ``name``."""
    if name not in INDICATORS:
        raise ValueError(f"unknown indicator {name!r}; choose from {sorted(INDICATORS)}")
    fn = INDICATORS[name]
    if name == "error_sort_exact":
        if d is None:
            raise ValueError("error_sort_exact needs the embedding dimension d")
        return fn(ds, d, "user"), fn(ds, d, "item")
    return fn(ds, "user"), fn(ds, "item")


def _ceil_count(frac: float, n: int) -> int:
    return min(n, math.ceil(frac * n - 1e-9))


def select_top(scores: np.ndarray, count: int, eligible: np.ndarray | None = None) -> np.ndarray:
    """Sorted indices of the ``count`` best scores, ties to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    idx = np.arange(scores.size)
    if eligible is not None:
        idx = idx[np.asarray(eligible, dtype=bool)]
    order = idx[np.lexsort((idx, -scores[idx]))]
    return np.sort(order[:count])


@dataclass(frozen=True, eq=False)
class TemplateSet:
    template_users: np.ndarray
    template_items: np.ndarray
    user_rank_of: np.ndarray
    item_rank_of: np.ndarray
    indicator_name: str
    scores_users: np.ndarray
    scores_items: np.ndarray
    user_frac: float = 1.0
    item_frac: float = 1.0

    @classmethod
    def from_indices(cls, n, m, template_users, template_items, indicator_name="manual", scores_users=None, scores_items=None, user_frac=None, item_frac=None):
        tu = np.unique(np.asarray(template_users, dtype=np.int64))
        ti = np.unique(np.asarray(template_items, dtype=np.int64))
        urank = np.full(n, NON_TEMPLATE, dtype=np.int64)
        urank[tu] = np.arange(tu.size)
        irank = np.full(m, NON_TEMPLATE, dtype=np.int64)
        irank[ti] = np.arange(ti.size)
        return cls(
            tu,
            ti,
            urank,
            irank,
            indicator_name,
            np.zeros(n) if scores_users is None else np.asarray(scores_users, dtype=np.float64),
            np.zeros(m) if scores_items is None else np.asarray(scores_items, dtype=np.float64),
            tu.size / n if user_frac is None else user_frac,
            ti.size / m if item_frac is None else item_frac,
        )

    @property
    def n(self) -> int:
        return self.user_rank_of.size

    @property
    def m(self) -> int:
        return self.item_rank_of.size

    @property
    def n_t(self) -> int:
        return self.template_users.size

    @property
    def m_t(self) -> int:
        return self.template_items.size

    def to_dict(self) -> dict:
        return {
            "indicator": self.indicator_name,
            "n": self.n,
            "m": self.m,
            "user_frac": self.user_frac,
            "item_frac": self.item_frac,
            "template_users": self.template_users.tolist(),
            "template_items": self.template_items.tolist(),
            "scores_users": self.scores_users.tolist(),
            "scores_items": self.scores_items.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TemplateSet":
        return cls.from_indices(
            doc["n"],
            doc["m"],
            doc["template_users"],
            doc["template_items"],
            doc["indicator"],
            doc.get("scores_users"),
            doc.get("scores_items"),
            doc.get("user_frac"),
            doc.get("item_frac"),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "TemplateSet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def select_templates(
    scores_u,
    scores_i,
    user_frac: float = 1.0,
    item_frac: float = 1.0,
    indicator_name: str = "error_sort",
    eligible_users=None,
    eligible_items=None,
) -> TemplateSet:
    """Keep the top ``ceil(frac * count)`` users and items by score.

    ``eligible_*`` masks restrict the candidates (e.g. to entities that have
    training interactions); the fraction then applies to the eligible count.
    """
    for f in (user_frac, item_frac):
        if not 0 < f <= 1:
            raise ValueError(f"template fractions must lie in (0, 1], got {f}")
    scores_u = np.asarray(scores_u, dtype=np.float64)
    scores_i = np.asarray(scores_i, dtype=np.float64)
    n_pool = scores_u.size if eligible_users is None else int(np.count_nonzero(eligible_users))
    m_pool = scores_i.size if eligible_items is None else int(np.count_nonzero(eligible_items))
    tu = select_top(scores_u, _ceil_count(user_frac, n_pool), eligible_users)
    ti = select_top(scores_i, _ceil_count(item_frac, m_pool), eligible_items)
    return TemplateSet.from_indices(
        scores_u.size, scores_i.size, tu, ti, indicator_name, scores_u, scores_i, user_frac, item_frac
    )


def templates_for_view(
    view: InteractionDataset,
    indicator: str = "error_sort",
    user_frac: float = 1.0,
    item_frac: float = 1.0,
    d: int | None = None,
) -> TemplateSet:
    """Score ``view`` with ``indicator`` and keep the top fractions among the
    users and items that have at least one interaction in it."""
    su, si = indicator_scores(view, indicator, d)
    return select_templates(su, si, user_frac, item_frac, indicator, view.user_degree > 0, view.item_degree > 0)


def error_curve(
    ds: InteractionDataset,
    d: int,
    indicator: str | tuple[np.ndarray, np.ndarray],
    fractions: Sequence[float],
    cap: int = DENSE_CAP,
) -> list[tuple[float, float, float]]:
    """Additional-error ratio as a growing share of entities is left out.

    For each non-template fraction ``f`` the lowest-scoring ``n - ceil((1-f) n)``
    users form the non-template set and the user ratio is
    ``|U_d U_d^T L_u Y|_F^2`` over its value with every user left out; the
    item ratio uses ``|Y L_i V_d V_d^T|_F^2`` likewise. Returns
    ``(fraction, user_ratio, item_ratio)`` rows.
    """
    check_dense_cap(ds.n, ds.m, cap, hint="error curves need a dense SVD")
    Y = ds.dense()
    svd = truncated_svd(Y, d, cap=cap)
    if isinstance(indicator, str):
        su, si = indicator_scores(ds, indicator, d)
    else:
        su, si = (np.asarray(s, dtype=np.float64) for s in indicator)

    def side_curve(P: np.ndarray, M: np.ndarray, scores: np.ndarray) -> list[float]:
        # |P P^T L M|_F^2 = |P[S]^T M[S]|_F^2 for orthonormal P, S = left-out rows
        total = np.linalg.norm(P.T @ M) ** 2
        out = []
        for f in fractions:
            keep = select_top(scores, _ceil_count(1.0 - f, scores.size)) if f < 1 else np.empty(0, np.int64)
            left_out = np.setdiff1d(np.arange(scores.size), keep)
            err = np.linalg.norm(P[left_out].T @ M[left_out]) ** 2 if left_out.size else 0.0
            out.append(float(err / total) if total > 0 else 0.0)
        return out

    users = side_curve(svd.U, Y, su)
    items = side_curve(svd.V, Y.T, si)
    return [(float(f), u, i) for f, u, i in zip(fractions, users, items)]


def write_error_curve_csv(path, curves: dict[str, list[tuple[float, float, float]]]) -> None:
    """CSV with header ``fraction,user_ratio,item_ratio,indicator``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fraction", "user_ratio", "item_ratio", "indicator"])
        for name, rows in curves.items():
            for f, u, i in rows:
                w.writerow([f"{f:.6g}", repr(u), repr(i), name])
