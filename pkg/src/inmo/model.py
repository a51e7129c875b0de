"""An INMO recommender: template parameters attached to a backbone."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbones import Representations, lightgcn_forward, mf_forward, normalized_adjacency
from .data import InteractionDataset
from .embedding import ModelParams, batch_embeddings, template_adjacency
from .templates import TemplateSet

__all__ = ["InmoModel", "BACKBONES"]

BACKBONES = ("mf", "lightgcn")


@dataclass(eq=False)
class InmoModel:
    params: ModelParams
    templates: TemplateSet
    backbone: str = "mf"
    K: int = 3

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")

    def representations(self, view: InteractionDataset, alpha: float = 1.0) -> Representations:
        """Final representations of every entity given the observed graph.

        Passing a graph with more edges than training saw (new interactions,
        new users or items) is how inference stays inductive: nothing in
        ``params`` changes.
        """
        E_u, E_i = batch_embeddings(template_adjacency(view, self.templates), self.params, self.templates, alpha)
        if self.backbone == "mf":
            return mf_forward(E_u, E_i)
        return lightgcn_forward(E_u, E_i, normalized_adjacency(view), self.K)

    @property
    def n_parameters(self) -> int:
        return self.params.n_parameters

    def recommend(self, view: InteractionDataset, users, k: int = 20) -> list[np.ndarray]:
        from .backbones import top_k_batch

        reps = self.representations(view)
        users = np.asarray(users, dtype=np.int64)
        return top_k_batch(reps.scores(users), view.matrix()[users], k)
