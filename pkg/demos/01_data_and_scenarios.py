"""
Interaction data and inductive scenarios
========================================

Load the bundled toy file, filter and split it, then cut the two inductive
scenarios out of the split.
"""
from importlib import resources

from inmo.data import (
    load_interactions,
    make_new_interactions_scenario,
    make_new_users_items_scenario,
    preprocess,
    split_per_user,
)

path = resources.files("inmo") / "resources" / "toy200.tsv"
raw = load_interactions(path, "triple-tsv")
print(f"raw records: {len(raw)} ({raw.n_users} users, {raw.n_items} items)")

# k-core filter (10 by default) and dense reindexing
ds = preprocess(raw)
print(ds, ds.summary())

split = split_per_user(ds, ratios=(0.7, 0.1, 0.2), seed=0)
print("train / valid / test edges:", split.train.n_edges, split.valid.n_edges, split.test.n_edges)

# a fifth of each user's training edges arrive only after training
ni = make_new_interactions_scenario(split, hold_frac=0.2, seed=0)
print("new interactions at test time:", ni.new_interactions.n_edges)

# a fifth of users and items are unseen during training
nui = make_new_users_items_scenario(split, entity_frac=0.2, seed=0)
print("new users:", nui.new_user_ids.size, "new items:", nui.new_item_ids.size)
print("their training degree:", int(nui.train_view.user_degree[nui.new_user_ids].sum()))
