"""
Training and inductive inference
================================

Train the matrix-factorization variant on the new-users/items scenario,
then embed users that never appeared during training. No parameter is
added or changed at inference.
"""
from inmo.data import make_new_users_items_scenario, split_per_user, synthetic_block_dataset
from inmo.evaluation import evaluate_scenario, popular_baseline
from inmo.templates import templates_for_view
from inmo.training import TrainConfig, train

ds = synthetic_block_dataset(seed=0)
split = split_per_user(ds, seed=0)
scenario = make_new_users_items_scenario(split, seed=0)

templates = templates_for_view(scenario.train_view, "error_sort", 1.0, 1.0)
cfg = TrainConfig(max_epochs=150, patience=50, drop_rate=0.5, seed=0)
result = train(scenario, templates, cfg)
print(f"stopped after {len(result.log)} epochs, best epoch {result.best_epoch}")
print("parameters:", result.params.n_parameters)

model = result.model
before = result.params.copy()
reps = model.representations(scenario.test_observed)
print("new user 0 representation (first 5 dims):", reps.R_u[scenario.new_user_ids[0], :5].round(4))
print("parameters unchanged by inference:", result.params.equals(before))

print(evaluate_scenario(model, scenario, k=20).format())
popular = evaluate_scenario(popular_baseline(scenario.train_view), scenario, k=20)
popular.scenario = "popular"
print(popular.format())
