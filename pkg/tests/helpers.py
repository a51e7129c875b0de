import numpy as np

from inmo.data import InteractionDataset


def random_view(rng, n=12, m=9, density=0.35, full=True):
    """Random interaction graph; with ``full`` every row and column has an edge."""
    Y = rng.random((n, m)) < density
    if full:
        Y[np.arange(n), rng.integers(m, size=n)] = True
        Y[rng.integers(n, size=m), np.arange(m)] = True
    return InteractionDataset.from_matrix(Y)
