import numpy as np
import pytest

from inmo.backbones import lightgcn_forward
from inmo.embedding import ModelParams, batch_embeddings
from inmo.model import InmoModel
from inmo.templates import TemplateSet

from .helpers import random_view


def build(rng, backbone="mf"):
    view = random_view(rng, 9, 7)
    ts = TemplateSet.from_indices(9, 7, [0, 2, 5], [1, 3, 4, 6])
    return view, InmoModel(ModelParams.init(3, 4, 5, rng), ts, backbone)


def test_mf_representations_are_embeddings(rng):
    view, model = build(rng)
    reps = model.representations(view)
    E_u, E_i = batch_embeddings(view, model.params, model.templates)
    assert np.array_equal(reps.R_u, E_u) and np.array_equal(reps.R_i, E_i)


def test_lightgcn_representations(rng):
    view, model = build(rng, "lightgcn")
    E_u, E_i = batch_embeddings(view, model.params, model.templates)
    expect = lightgcn_forward(E_u, E_i, view, 3)
    assert np.allclose(model.representations(view).R_u, expect.R_u)


def test_inference_on_grown_graph_leaves_params_untouched(rng):
    view, model = build(rng, "lightgcn")
    before = model.params.copy()
    u, i = view.edges()
    grown = view.with_edges(np.append(u, [8, 8]), np.append(i, [0, 5]))
    model.representations(grown)
    assert model.params.equals(before)
    assert model.n_parameters == (3 + 4 + 2) * 5 + 5


def test_recommend_skips_seen(rng):
    view, model = build(rng)
    recs = model.recommend(view, [0, 1], k=3)
    for u, r in zip([0, 1], recs):
        assert not set(r.tolist()) & set(view.user_items(u).tolist())


def test_rejects_unknown_backbone(rng):
    with pytest.raises(ValueError):
        InmoModel(ModelParams.init(1, 1, 2, rng), TemplateSet.from_indices(2, 2, [0], [0]), "ngcf")
