"""Numerical checks of the expressiveness results behind template embeddings.

With every user and item as a template, ``T_u = U_d S_d^-1`` and
``T_i = V_d`` make the template model reproduce the best rank-d
approximation of Y. With only some users as templates, the extra error is
bounded by a sum over the left-out users, which is what the error-sort
indicator minimizes. The functions here build those closed-form solutions
on dense matrices and evaluate every step of the argument.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .data import InteractionDataset
from .linalg import DENSE_CAP, SvdFactors, truncated_svd
from .templates import error_sort_exact, error_sort_simplified

__all__ = [
    "truncated_svd",
    "SvdFactors",
    "Theorem1Report",
    "Theorem2Report",
    "theorem1_check",
    "theorem2_check",
    "degree_weighted_bound",
    "indicator_faithfulness",
    "random_binary_matrix",
]

SLACK = 1e-8


def random_binary_matrix(n: int, m: int, density: float, rng: np.random.Generator) -> np.ndarray:
    """0/1 matrix with no empty row or column."""
    Y = (rng.random((n, m)) < density).astype(np.float64)
    Y[np.arange(n), rng.integers(m, size=n)] = 1.0
    Y[rng.integers(n, size=m), np.arange(m)] = 1.0
    return Y


@dataclass
class Theorem1Report:
    n: int
    m: int
    d: int
    requested_d: int
    inmo_error: float
    eps_min: float
    passed: bool
    degenerate_spectrum: bool
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def theorem1_check(Y, d: int, seed: int | None = None, cap: int = DENSE_CAP) -> Theorem1Report:
    """All-template INMO-MF reaches the Eckart-Young error.

    Uses ``E_u = Y V_d`` and ``E_i = Y^T U_d S_d^-1`` and compares
    ``|Y - E_u E_i^T|_F`` with ``eps_min``. If ``sigma_d`` is zero, d is
    lowered to the numerical rank (reported as ``d``).
    """
    Y = np.asarray(Y, dtype=np.float64)
    svd = truncated_svd(Y, d, cap=cap)
    d_used = d
    if d and svd.S[-1] == 0:
        d_used = svd.rank
        svd = truncated_svd(Y, d_used, cap=cap)
    E_u = Y @ svd.V
    E_i = Y.T @ (svd.U / svd.S) if d_used else np.zeros((Y.shape[1], 0))
    err = float(np.linalg.norm(Y - E_u @ E_i.T))
    passed = abs(err - svd.eps_min) <= 1e-6 * max(1.0, svd.eps_min)
    return Theorem1Report(Y.shape[0], Y.shape[1], d_used, d, err, svd.eps_min, bool(passed), svd.degenerate, seed)


def degree_weighted_bound(svd: SvdFactors, ds: InteractionDataset, non_template) -> float:
    """``sum_{j left out} |s_j|^2 * sum_{i in N_j} |N_i|`` for users."""
    non_template = np.asarray(non_template, dtype=np.int64)
    leverage = np.einsum("ij,ij->i", svd.U, svd.U)
    weight = ds.matrix() @ ds.item_degree.astype(np.float64)
    return float(np.sum(leverage[non_template] * weight[non_template]))


@dataclass
class Theorem2Report:
    n: int
    m: int
    d: int
    n_templates: int
    true_error: float  # |Y - E_u E_i^T|_F
    eps_min: float
    extra_error: float  # |U_d U_d^T L_u Y|_F
    decomposed_error: float  # |Y - U S V^T + U U^T L_u Y|_F
    column_sum_sq: float  # sum_i |sum_{j in N_i, left out} s_j|^2
    cauchy_schwarz: float  # sum_i |N_i & left out| sum_j |s_j|^2
    bound: float  # sum_{j left out} |s_j|^2 sum_{i in N_j} |N_i|
    checks: dict[str, bool] = field(default_factory=dict)
    degenerate_spectrum: bool = False
    seed: int | None = None

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def theorem2_check(Y, d: int, template_users, seed: int | None = None, cap: int = DENSE_CAP) -> Theorem2Report:
    """Evaluate each step bounding the extra error of a partial user template set.

    Item templates are all items. Builds ``T_u = C_u^T U_d S_d^-1``,
    ``T_i = V_d`` and checks, within ``1e-8`` slack:

    * the true error equals ``|Y - U S V^T + U U^T L_u Y|_F``;
    * it is at most ``eps_min + |U U^T L_u Y|_F`` (triangle inequality);
    * ``|U U^T L_u Y|_F^2`` equals the per-item column sums of ``s_j``;
    * that is at most the Cauchy-Schwarz sum, which is at most the bound.
    """
    Y = np.asarray(Y, dtype=np.float64)
    n, m = Y.shape
    svd = truncated_svd(Y, d, cap=cap)
    if d and svd.S[-1] == 0:
        raise ValueError(f"sigma_d is zero (rank {svd.rank} < d = {d})")
    tem = np.unique(np.asarray(template_users, dtype=np.int64))
    is_tem = np.zeros(n, dtype=bool)
    is_tem[tem] = True
    left_out = np.flatnonzero(~is_tem)
    L = np.diag((~is_tem).astype(np.float64))

    T_u = svd.U[tem] / svd.S  # C_u^T U_d S_d^-1
    E_u = Y @ svd.V
    E_i = Y[tem].T @ T_u  # Y^T C_u T_u
    true_error = float(np.linalg.norm(Y - E_u @ E_i.T))

    P = svd.U @ svd.U.T
    extra = P @ L @ Y
    extra_norm = float(np.linalg.norm(extra))
    decomposed = float(np.linalg.norm(Y - svd.reconstruct() + extra))

    # columns of P are s_j; column i of the extra term sums s_j over left-out j in N_i
    col_sums = P[:, left_out] @ Y[left_out]
    column_sum_sq = float(np.sum(col_sums**2))
    s_sq = np.sum(P**2, axis=0)
    cs = float(np.sum(Y[left_out].sum(axis=0) * (s_sq[left_out] @ Y[left_out])))
    ds = InteractionDataset.from_matrix(Y)
    bound = degree_weighted_bound(svd, ds, left_out)

    tol = SLACK * max(1.0, true_error, bound)
    checks = {
        "decomposition": abs(true_error - decomposed) <= tol,
        "triangle": true_error <= svd.eps_min + extra_norm + tol,
        "column_expansion": abs(extra_norm**2 - column_sum_sq) <= tol,
        "cauchy_schwarz": column_sum_sq <= cs + tol,
        "degree_bound": cs <= bound + tol,
    }
    return Theorem2Report(
        n, m, d, int(tem.size), true_error, svd.eps_min, extra_norm, decomposed,
        column_sum_sq, cs, bound, checks, svd.degenerate, seed,
    )


def indicator_faithfulness(Y, d: int, cap: int = DENSE_CAP) -> dict:
    """Spearman correlation between exact and simplified error-sort user scores."""
    ds = InteractionDataset.from_matrix(np.asarray(Y))
    exact = error_sort_exact(ds, d, "user", cap=cap)
    simple = error_sort_simplified(ds, "user")
    degenerate = bool(np.ptp(exact) <= 1e-12 * max(1.0, np.abs(exact).max()) or np.ptp(simple) == 0)
    rho = float("nan") if degenerate else float(stats.spearmanr(exact, simple).statistic)
    return {
        "d": d,
        "n": ds.n,
        "m": ds.m,
        "spearman": rho,
        "degenerate": degenerate,
        "exact": exact.tolist(),
        "simplified": simple.tolist(),
    }
