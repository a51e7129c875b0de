"""
Closed-form expressiveness checks
=================================

With every user as a template the model reaches the best rank-d error.
With only some of them, the extra error obeys a chain of bounds; each step
is evaluated numerically here.
"""
import numpy as np

from inmo.data import InteractionDataset
from inmo.templates import error_sort_exact, select_top
from inmo.theory import random_binary_matrix, theorem1_check, theorem2_check

rng = np.random.default_rng(0)
Y = random_binary_matrix(60, 45, 0.15, rng)

for d in (2, 4, 8, 16):
    rep = theorem1_check(Y, d)
    print(f"d={d:>2}  template error {rep.inmo_error:.6f}  best rank-d error {rep.eps_min:.6f}  passed={rep.passed}")

d = 8
scores = error_sort_exact(InteractionDataset.from_matrix(Y), d)
for frac in (0.3, 0.5, 0.7):
    keep = select_top(scores, int(np.ceil(frac * Y.shape[0])))
    rep = theorem2_check(Y, d, keep)
    print(f"templates {frac:.0%}: error {rep.true_error:.3f} <= {rep.eps_min:.3f} + {rep.extra_error:.3f}, "
          f"bound {rep.bound:.2f}, checks {rep.checks}")
