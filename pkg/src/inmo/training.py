"""Training INMO parameters with BPR plus the self-enhanced template loss.

Every map between parameters and scores is linear except the final
log-sigmoid, so gradients are written out in closed form: the BPR gradient
w.r.t. representations is pushed back through the (self-adjoint) LightGCN
propagation, the row-wise normalization and the template adjacency.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import scipy.sparse as sp

from .backbones import normalized_adjacency, propagate
from .data import InteractionDataset
from .embedding import ModelParams, TemplateAdjacency, batch_embeddings, template_adjacency
from .evaluation import evaluate
from .model import BACKBONES, InmoModel
from .templates import TemplateSet

__all__ = [
    "TrainConfig",
    "TrainState",
    "TrainResult",
    "TrainingDivergedError",
    "GraphContext",
    "sample_bpr_batch",
    "sample_se_batch",
    "bpr_loss",
    "self_enhanced_loss",
    "total_loss",
    "anneal_alpha",
    "drop_interactions",
    "adam_step",
    "train",
]

_logger = logging.getLogger(__name__)

REJECTION_CAP = 1000

GRIDS = {
    "lr": (1e-4, 1e-3, 1e-2),
    "l2_lambda": (0.0, 1e-5, 1e-4, 1e-3, 1e-2),
    "drop_rate": (0.0, 0.1, 0.3, 0.5, 0.7, 0.9),
}


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    d: int = 64
    lr: float = 1e-3
    l2_lambda: float = 1e-4
    drop_rate: float = 0.1
    beta: float = 0.1
    K_layers: int = 3
    batch_size: int = 2048
    max_epochs: int = 1000
    patience: int = 50
    alpha_init: float = 0.5
    alpha_final: float = 1.0
    anneal_epochs: int = 100
    seed: int = 0
    backbone: str = "mf"
    eval_k: int = 20
    init_std: float = 0.1

    def __post_init__(self):
        if not 0 <= self.alpha_init <= self.alpha_final <= 1:
            raise ValueError("need 0 <= alpha_init <= alpha_final <= 1")
        if not 0 <= self.drop_rate < 1:
            raise ValueError("drop_rate must lie in [0, 1)")
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}")
        if self.d < 1 or self.batch_size < 1 or self.K_layers < 0 or self.beta < 0:
            raise ValueError("d and batch_size must be positive, K_layers and beta non-negative")

    def grid_warnings(self) -> list[str]:
        """Values outside the usual tuning grids. Grids are guidance only."""
        out = []
        for name, grid in GRIDS.items():
            v = getattr(self, name)
            if not any(math.isclose(v, g, rel_tol=1e-9, abs_tol=1e-15) for g in grid):
                out.append(f"{name}={v} is outside the tuning grid {grid}")
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


def anneal_alpha(epoch: int, cfg: TrainConfig) -> float:
    """Linear ramp from ``alpha_init`` to ``alpha_final`` over ``anneal_epochs``."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if cfg.anneal_epochs <= 0:
        return cfg.alpha_final
    return min(cfg.alpha_final, cfg.alpha_init + (cfg.alpha_final - cfg.alpha_init) * epoch / cfg.anneal_epochs)


def drop_interactions(view: InteractionDataset, drop_rate: float, rng: np.random.Generator) -> InteractionDataset:
    """Remove each edge independently with probability ``drop_rate``."""
    if not 0 <= drop_rate < 1:
        raise ValueError("drop_rate must lie in [0, 1)")
    if drop_rate == 0:
        return view
    keep = rng.random(view.n_edges) >= drop_rate
    u, i = view.edges()
    return view.with_edges(u[keep], i[keep])


def _reject(codes: np.ndarray, owners: np.ndarray, width: int, draw, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``draw(rng, k)`` candidates until none collides with ``codes``.

    Returns (candidates, ok-mask); rows still colliding after the cap are
    flagged False.
    """
    cand = draw(rng, owners.size)
    bad = np.isin(owners * width + cand, codes)
    tries = 1
    while bad.any() and tries < REJECTION_CAP:
        idx = np.flatnonzero(bad)
        cand[idx] = draw(rng, idx.size)
        bad[idx] = np.isin(owners[idx] * width + cand[idx], codes)
        tries += 1
    return cand, ~bad


def sample_bpr_batch(train_view: InteractionDataset, batch_size: int, rng: np.random.Generator, edge_ids=None) -> np.ndarray:
    """``(u, i_pos, i_neg)`` rows.

    Positives are training edges (uniform over edges unless ``edge_ids``
    fixes them); negatives are uniform items outside the user's training
    set. Users whose negative could not be found within the rejection cap
    are dropped from the batch.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    eu, ei = train_view.edges()
    if edge_ids is None:
        edge_ids = rng.integers(eu.size, size=batch_size)
    u, pos = eu[edge_ids], ei[edge_ids]
    neg, ok = _reject(train_view.edge_codes(), u, train_view.m, lambda r, k: r.integers(train_view.m, size=k), rng)
    return np.stack([u[ok], pos[ok], neg[ok]], axis=1)


def sample_se_batch(batch: np.ndarray, train_view: InteractionDataset, templates: TemplateSet, rng: np.random.Generator) -> np.ndarray:
    """Template-rank triples ``(user_rank, pos_rank, neg_rank)`` for the
    self-enhanced loss, taken from the BPR rows whose user and positive item
    are both templates. Negatives are uniform template items the user has
    not interacted with."""
    if batch.size == 0 or templates.m_t == 0:
        return np.empty((0, 3), dtype=np.int64)
    ur = templates.user_rank_of[batch[:, 0]]
    pr = templates.item_rank_of[batch[:, 1]]
    sel = (ur >= 0) & (pr >= 0)
    users = batch[sel, 0]
    ti = templates.template_items
    neg, ok = _reject(
        train_view.edge_codes(), users, train_view.m, lambda r, k: ti[r.integers(ti.size, size=k)], rng
    )
    nr = templates.item_rank_of[neg]
    return np.stack([ur[sel][ok], pr[sel][ok], nr[ok]], axis=1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class GraphContext:
    """Everything the forward pass needs about one training graph."""

    templates: TemplateSet
    adj: TemplateAdjacency
    prop: sp.csr_matrix | None
    K: int

    @classmethod
    def build(cls, view: InteractionDataset, templates: TemplateSet, backbone: str = "mf", K: int = 3) -> "GraphContext":
        prop = normalized_adjacency(view) if backbone == "lightgcn" else None
        return cls(templates, template_adjacency(view, templates), prop, K)

    def representations(self, params: ModelParams, alpha: float) -> tuple[np.ndarray, np.ndarray]:
        E_u, E_i = batch_embeddings(self.adj, params, self.templates, alpha)
        if self.prop is None:
            return E_u, E_i
        n = E_u.shape[0]
        R = propagate(self.prop, np.vstack([E_u, E_i]), self.K)
        return R[:n], R[n:]

    def backward(self, dR_u: np.ndarray, dR_i: np.ndarray, alpha: float) -> dict[str, np.ndarray]:
        """Pull representation gradients back to the template parameters."""
        if self.prop is not None:
            n = dR_u.shape[0]
            dE = propagate(self.prop, np.vstack([dR_u, dR_i]), self.K)
            dR_u, dR_i = dE[:n], dE[n:]
        G_u = dR_u / self.adj.user_scale(alpha)[:, None]
        G_i = dR_i / self.adj.item_scale(alpha)[:, None]
        return {
            "T_i": self.adj.users.T @ G_u,
            "t_user": G_u.sum(axis=0),
            "T_u": self.adj.items.T @ G_i,
            "t_item": G_i.sum(axis=0),
        }


def _log_sigmoid_loss(x: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean of -ln sigmoid(x) and its derivative w.r.t. each x."""
    loss = float(np.mean(np.logaddexp(0.0, -x)))
    grad = -0.5 * (1.0 - np.tanh(0.5 * x)) / x.size  # -sigmoid(-x) / B
    return loss, grad


REGULARIZED = ("T_u", "T_i", "t_user", "t_item")


def bpr_loss(params: ModelParams, ctx: GraphContext, batch: np.ndarray, alpha: float = 1.0, l2_lambda: float = 0.0):
    """Mean BPR loss over ``batch`` plus ``l2_lambda * |theta|^2``.

    theta covers the template vectors and the two global vectors. Returns
    ``(loss, grads)`` with a gradient entry for every parameter tensor.
    """
    R_u, R_i = ctx.representations(params, alpha)
    grads = {k: np.zeros_like(v) for k, v in params.tensors().items()}
    loss = 0.0
    if len(batch):
        u, p, q = batch[:, 0], batch[:, 1], batch[:, 2]
        ru, diff = R_u[u], R_i[p] - R_i[q]
        loss, g = _log_sigmoid_loss(np.einsum("ij,ij->i", ru, diff))
        dR_u = np.zeros_like(R_u)
        dR_i = np.zeros_like(R_i)
        np.add.at(dR_u, u, g[:, None] * diff)
        np.add.at(dR_i, p, g[:, None] * ru)
        np.add.at(dR_i, q, -g[:, None] * ru)
        grads.update(ctx.backward(dR_u, dR_i, alpha))
    if l2_lambda:
        for k in REGULARIZED:
            v = getattr(params, k)
            loss += l2_lambda * float(np.sum(v * v))
            grads[k] = grads[k] + 2.0 * l2_lambda * v
    if not math.isfinite(loss):
        raise TrainingDivergedError(f"non-finite BPR loss {loss}")
    return loss, grads


def self_enhanced_loss(params: ModelParams, se_batch: np.ndarray):
    """Mean of ``-ln sigmoid(t_u^T W (t_pos - t_neg))`` over template triples."""
    grads = {k: np.zeros_like(v) for k, v in params.tensors().items()}
    if len(se_batch) == 0:
        return 0.0, grads
    a, p, q = se_batch[:, 0], se_batch[:, 1], se_batch[:, 2]
    tu, diff = params.T_u[a], params.T_i[p] - params.T_i[q]
    loss, g = _log_sigmoid_loss(np.einsum("ij,ij->i", tu * params.W_s, diff))
    gw = g[:, None] * params.W_s
    np.add.at(grads["T_u"], a, gw * diff)
    np.add.at(grads["T_i"], p, gw * tu)
    np.add.at(grads["T_i"], q, -gw * tu)
    grads["W_s"] = np.einsum("i,ij->j", g, tu * diff)
    if not math.isfinite(loss):
        raise TrainingDivergedError(f"non-finite self-enhanced loss {loss}")
    return loss, grads


def total_loss(params, ctx, batch, se_batch, alpha: float, l2_lambda: float, beta: float):
    """``L_BPR + beta * L_SE``; returns (total, bpr, se, grads)."""
    bpr, g_bpr = bpr_loss(params, ctx, batch, alpha, l2_lambda)
    if beta == 0:
        return bpr, bpr, 0.0, g_bpr
    se, g_se = self_enhanced_loss(params, se_batch)
    grads = {k: g_bpr[k] + beta * g_se[k] for k in g_bpr}
    return bpr + beta * se, bpr, se, grads


@dataclass
class TrainState:
    params: ModelParams
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    epoch: int = 0
    best_ndcg: float = -math.inf
    best_epoch: int = -1
    best_params: ModelParams | None = None

    @classmethod
    def fresh(cls, params: ModelParams) -> "TrainState":
        zeros = {k: np.zeros_like(v) for k, v in params.tensors().items()}
        return cls(params, zeros, {k: z.copy() for k, z in zeros.items()})


def adam_step(state: TrainState, grads: dict[str, np.ndarray], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> TrainState:
    """One bias-corrected Adam update, in place, with per-tensor moments."""
    for k, g in grads.items():
        if not np.isfinite(g).all():
            raise TrainingDivergedError(f"non-finite gradient for {k}")
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for k, g in grads.items():
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        update = lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + eps)
        setattr(state.params, k, getattr(state.params, k) - update)
    return state


@dataclass
class TrainResult:
    params: ModelParams
    templates: TemplateSet
    config: TrainConfig
    log: list[dict]
    best_epoch: int
    best_ndcg: float
    timings: list[float] = field(default_factory=list)

    @property
    def model(self) -> InmoModel:
        return InmoModel(self.params, self.templates, self.config.backbone, self.config.K_layers)


def _views(data) -> tuple[InteractionDataset, InteractionDataset]:
    if hasattr(data, "train_view"):
        return data.train_view, data.valid_view
    return data.train, data.valid


def train(data, templates: TemplateSet, cfg: TrainConfig, callback=None) -> TrainResult:
    """Fit template parameters, early-stopping on validation NDCG@k.

    ``data`` is a :class:`~inmo.data.DatasetSplit` or an
    :class:`~inmo.data.InductiveScenario`. Each epoch walks a fresh
    permutation of the training edges in batches; every batch sees its own
    drop-interaction perturbation. Validation always runs with
    ``alpha_final`` on the unperturbed training graph. The returned params
    are the best validation snapshot.
    """
    for msg in cfg.grid_warnings():
        warnings.warn(msg, stacklevel=2)
    train_view, valid_view = _views(data)
    rng = np.random.default_rng(cfg.seed)
    params = ModelParams.init(templates.n_t, templates.m_t, cfg.d, rng, cfg.init_std)
    state = TrainState.fresh(params)
    full_ctx = GraphContext.build(train_view, templates, cfg.backbone, cfg.K_layers)
    n_edges = train_view.n_edges
    if n_edges == 0:
        raise ValueError("training graph has no edges")
    log: list[dict] = []
    timings: list[float] = []
    start = time.perf_counter()

    for epoch in range(cfg.max_epochs):
        state.epoch = epoch
        alpha = anneal_alpha(epoch, cfg)
        order = rng.permutation(n_edges)
        sums = np.zeros(3)
        n_batches = 0
        for b, lo in enumerate(range(0, n_edges, cfg.batch_size)):
            batch = sample_bpr_batch(train_view, cfg.batch_size, rng, order[lo : lo + cfg.batch_size])
            se_batch = sample_se_batch(batch, train_view, templates, rng) if cfg.beta else np.empty((0, 3), np.int64)
            if cfg.drop_rate:
                ctx = GraphContext.build(drop_interactions(train_view, cfg.drop_rate, rng), templates, cfg.backbone, cfg.K_layers)
            else:
                ctx = full_ctx
            try:
                total, bpr, se, grads = total_loss(state.params, ctx, batch, se_batch, alpha, cfg.l2_lambda, cfg.beta)
                adam_step(state, grads, cfg.lr)
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(f"epoch {epoch}, batch {b}: {exc}") from exc
            sums += (total, bpr, se)
            n_batches += 1

        model = InmoModel(state.params, templates, cfg.backbone, cfg.K_layers)
        val = evaluate(model.representations(train_view, cfg.alpha_final), valid_view, train_view, cfg.eval_k)
        record = {
            "epoch": epoch,
            "alpha": alpha,
            "train_loss": sums[0] / n_batches,
            "bpr": sums[1] / n_batches,
            "se": sums[2] / n_batches,
            f"val_recall@{cfg.eval_k}": val.recall,
            f"val_precision@{cfg.eval_k}": val.precision,
            f"val_ndcg@{cfg.eval_k}": val.ndcg,
        }
        log.append(record)
        timings.append(time.perf_counter() - start)
        if callback is not None:
            callback(record)
        if val.ndcg > state.best_ndcg:
            state.best_ndcg = val.ndcg
            state.best_epoch = epoch
            state.best_params = state.params.copy()
        elif epoch - state.best_epoch >= cfg.patience:
            _logger.info("early stop at epoch %d (best %d)", epoch, state.best_epoch)
            break

    return TrainResult(state.best_params, templates, cfg, log, state.best_epoch, state.best_ndcg, timings)
