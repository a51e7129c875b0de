"""Inductive embeddings built from template vectors.

A user's embedding is the normalized sum of the template vectors of the
template items it interacted with, plus a global user vector:

    e_u = (sum_{i in N_u & I_tem} t_i + t_user) / (|N_u & I_tem| + 1) ** alpha

and symmetrically for items. No per-user or per-item parameter exists, so
any interaction history, including one from an entity never seen during
training, maps to an embedding.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import InteractionDataset
from .templates import TemplateSet

__all__ = [
    "ModelParams",
    "TemplateAdjacency",
    "template_adjacency",
    "user_embedding",
    "item_embedding",
    "batch_embeddings",
    "save_model",
    "load_model",
]

PARAM_NAMES = ("T_u", "T_i", "t_user", "t_item", "W_s")
FORMAT_VERSION = 1


@dataclass(eq=False)
class ModelParams:
    T_u: np.ndarray  # n_t x d, row r belongs to templates.template_users[r]
    T_i: np.ndarray  # m_t x d
    t_user: np.ndarray
    t_item: np.ndarray
    W_s: np.ndarray  # diagonal of the self-enhanced interaction matrix

    def __post_init__(self):
        d = self.t_user.shape[0]
        if d < 1:
            raise ValueError("embedding dimension must be positive")
        if self.T_u.shape[1:] != (d,) or self.T_i.shape[1:] != (d,):
            raise ValueError("template matrices must have d columns")
        if self.t_item.shape != (d,) or self.W_s.shape != (d,):
            raise ValueError("global vectors and W_s must have length d")

    @classmethod
    def init(cls, n_t: int, m_t: int, d: int, rng: np.random.Generator, std: float = 0.1) -> "ModelParams":
        """Normal(0, std) template vectors and an identity ``W_s``."""
        return cls(
            rng.normal(0.0, std, size=(n_t, d)),
            rng.normal(0.0, std, size=(m_t, d)),
            rng.normal(0.0, std, size=d),
            rng.normal(0.0, std, size=d),
            np.ones(d),
        )

    @property
    def d(self) -> int:
        return self.t_user.shape[0]

    @property
    def n_t(self) -> int:
        return self.T_u.shape[0]

    @property
    def m_t(self) -> int:
        return self.T_i.shape[0]

    @property
    def n_parameters(self) -> int:
        return sum(getattr(self, k).size for k in PARAM_NAMES)

    def tensors(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(*(getattr(self, k).copy() for k in PARAM_NAMES))

    def allfinite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.tensors().values())

    def equals(self, other: "ModelParams") -> bool:
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in PARAM_NAMES)


def _check_bound(params: ModelParams, templates: TemplateSet) -> None:
    if params.n_t != templates.n_t or params.m_t != templates.m_t:
        raise ValueError(
            f"params hold {params.n_t} user / {params.m_t} item templates, "
            f"template set has {templates.n_t} / {templates.m_t}"
        )


def _aggregate(observed, rank_of: np.ndarray, T: np.ndarray, t_global: np.ndarray, alpha: float) -> np.ndarray:
    ranks = rank_of[np.asarray(observed, dtype=np.int64)]
    ranks = np.sort(ranks[ranks >= 0])
    acc = np.zeros(T.shape[1])
    for r in ranks:
        acc += T[r]
    return (acc + t_global) / np.float64(ranks.size + 1) ** alpha


def user_embedding(u_observed, params: ModelParams, templates: TemplateSet, alpha: float = 1.0) -> np.ndarray:
    """Embedding of a user with observed item set ``u_observed``."""
    _check_bound(params, templates)
    return _aggregate(u_observed, templates.item_rank_of, params.T_i, params.t_user, alpha)


def item_embedding(i_observed, params: ModelParams, templates: TemplateSet, alpha: float = 1.0) -> np.ndarray:
    """Embedding of an item with observed user set ``i_observed``."""
    _check_bound(params, templates)
    return _aggregate(i_observed, templates.user_rank_of, params.T_u, params.t_item, alpha)


@dataclass(frozen=True, eq=False)
class TemplateAdjacency:
    """Interaction matrix restricted to template columns, both directions.

    ``users`` is n x m_t (column r is template item r); ``items`` is
    m x n_t. ``*_count`` are the row sums, i.e. |N_u & I_tem|.
    """

    users: sp.csr_matrix
    items: sp.csr_matrix
    user_count: np.ndarray
    item_count: np.ndarray

    def user_scale(self, alpha: float) -> np.ndarray:
        return (self.user_count + 1.0) ** alpha

    def item_scale(self, alpha: float) -> np.ndarray:
        return (self.item_count + 1.0) ** alpha


def _restrict(g: InteractionDataset, rank_of: np.ndarray, width: int) -> sp.csr_matrix:
    ranks = rank_of[g.user_indices]
    keep = ranks >= 0
    rows = np.repeat(np.arange(g.n), g.user_degree)[keep]
    indptr = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=g.n), out=indptr[1:])
    # ranks are increasing within a row because both index lists are sorted
    return sp.csr_matrix((np.ones(rows.size), ranks[keep], indptr), shape=(g.n, width))


def template_adjacency(view: InteractionDataset, templates: TemplateSet) -> TemplateAdjacency:
    if (view.n, view.m) != (templates.n, templates.m):
        raise ValueError("view and template set index spaces differ")
    users = _restrict(view, templates.item_rank_of, templates.m_t)
    items = _restrict(view.transpose(), templates.user_rank_of, templates.n_t)
    return TemplateAdjacency(users, items, np.diff(users.indptr).astype(np.float64), np.diff(items.indptr).astype(np.float64))


def batch_embeddings(
    view: InteractionDataset | TemplateAdjacency,
    params: ModelParams,
    templates: TemplateSet,
    alpha: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """All user and item embeddings for the interaction graph ``view``."""
    _check_bound(params, templates)
    adj = view if isinstance(view, TemplateAdjacency) else template_adjacency(view, templates)
    E_u = (adj.users @ params.T_i + params.t_user) / adj.user_scale(alpha)[:, None]
    E_i = (adj.items @ params.T_u + params.t_item) / adj.item_scale(alpha)[:, None]
    return E_u, E_i


def save_model(path, params: ModelParams, templates: TemplateSet, extra: dict | None = None) -> None:
    """JSON artifact: header (dimensions, templates) then row-major matrices.

    Floats are written with ``repr`` precision, so a load round-trips bitwise.
    """
    doc = {
        "format": "inmo-model",
        "version": FORMAT_VERSION,
        "d": params.d,
        "n_t": params.n_t,
        "m_t": params.m_t,
        "templates": templates.to_dict(),
        "extra": extra or {},
    }
    doc.update({k: v.tolist() for k, v in params.tensors().items()})
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> tuple[ModelParams, TemplateSet, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "inmo-model" or doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: not an inmo-model v{FORMAT_VERSION} artifact")
    d = doc["d"]
    arrays = {}
    for k in PARAM_NAMES:
        a = np.asarray(doc[k], dtype=np.float64)
        arrays[k] = a.reshape(-1, d) if k in ("T_u", "T_i") else a
    params = ModelParams(**arrays)
    templates = TemplateSet.from_dict(doc["templates"])
    _check_bound(params, templates)
    return params, templates, doc.get("extra", {})
