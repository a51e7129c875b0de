"""
Choosing template users and items
=================================

Compare indicators by how much extra reconstruction error they cause when
a growing share of users is left out of the template set.
"""
import numpy as np

from inmo.data import synthetic_block_dataset
from inmo.templates import error_curve, indicator_scores, select_templates

ds = synthetic_block_dataset(n_users=600, n_items=400, n_blocks=6, mean_degree=25,
                             popularity_skew=0.8, activity_sigma=0.8, seed=0)
print(ds)

fractions = [0.0, 0.3, 0.5, 0.7, 0.9, 1.0]
print("non-template share:", fractions)
for name in ("degree", "pagerank", "error_sort", "error_sort_exact"):
    rows = error_curve(ds, 32, name, fractions)
    print(f"{name:<17}", " ".join(f"{u:.3f}" for _, u, _ in rows))

# keep the best 30% of users and items under the simplified error-sort score
su, si = indicator_scores(ds, "error_sort")
templates = select_templates(su, si, 0.3, 0.3, "error_sort")
print("templates:", templates.n_t, "users,", templates.m_t, "items")
print("mean degree of template users:", ds.user_degree[templates.template_users].mean().round(1),
      "vs all users:", ds.user_degree.mean().round(1))
print("score of the lowest kept user:", np.round(su[templates.template_users].min(), 3))
