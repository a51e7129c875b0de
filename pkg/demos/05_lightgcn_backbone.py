"""
LightGCN backbone
=================

The same template parameters can feed a graph-convolution backbone:
embeddings are propagated over the normalized interaction graph and the
layers are averaged.
"""
from inmo.data import make_new_interactions_scenario, split_per_user, synthetic_block_dataset
from inmo.evaluation import evaluate_scenario
from inmo.templates import templates_for_view
from inmo.training import TrainConfig, train

split = split_per_user(synthetic_block_dataset(seed=1), seed=1)
scenario = make_new_interactions_scenario(split, seed=1)
templates = templates_for_view(scenario.train_view, "error_sort", 0.5, 0.5)

result = train(scenario, templates, TrainConfig(backbone="lightgcn", K_layers=3, max_epochs=60, seed=1))
model = result.model
# inference on the graph with the new interactions, and on the training graph only
print(evaluate_scenario(model, scenario, k=20, use_new=True).format())
print(evaluate_scenario(model, scenario, k=20, use_new=False).format())
