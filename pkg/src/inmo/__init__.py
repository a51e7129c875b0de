"""Inductive collaborative filtering with template-based embeddings."""
from .backbones import Representations, lightgcn_forward, mf_forward, score, top_k
from .data import (
    DatasetSplit,
    InductiveScenario,
    InteractionDataset,
    RawInteractions,
    ScenarioKind,
    load_interactions,
    make_new_interactions_scenario,
    make_new_users_items_scenario,
    preprocess,
    split_per_user,
    synthetic_block_dataset,
)
from .embedding import ModelParams, batch_embeddings, item_embedding, load_model, save_model, user_embedding
from .evaluation import EvalReport, evaluate, evaluate_scenario, popular_baseline, recall_precision_ndcg
from .model import InmoModel
from .templates import TemplateSet, error_curve, indicator_scores, select_templates, templates_for_view
from .training import TrainConfig, TrainResult, train

__version__ = "0.1.0"
