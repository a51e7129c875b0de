"""Dense truncated SVD used by the template indicators and the theory checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["DENSE_CAP", "SizeCapError", "SvdFactors", "check_dense_cap", "truncated_svd"]

DENSE_CAP = 4_000_000


class SizeCapError(ValueError):
    """The matrix is too large for the dense routines."""


def check_dense_cap(n: int, m: int, cap: int = DENSE_CAP, hint: str = "") -> None:
    if n * m > cap:
        msg = f"{n} x {m} = {n * m} entries exceeds the dense cap of {cap}"
        raise SizeCapError(f"{msg}; {hint}" if hint else msg)


@dataclass(frozen=True, eq=False)
class SvdFactors:
    """Rank-d truncation ``Y ~ U diag(S) V^T``.

    ``eps_min`` is the Frobenius distance from Y to the truncation, i.e. the
    root of the discarded squared singular values. ``spectrum`` keeps every
    singular value of Y.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    eps_min: float
    spectrum: np.ndarray

    @property
    def d(self) -> int:
        return self.S.size

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.spectrum))

    @property
    def degenerate(self) -> bool:
        """True when sigma_d == sigma_{d+1}, so the truncation is not unique."""
        if self.d >= self.spectrum.size or self.d == 0:
            return False
        a, b = self.spectrum[self.d - 1], self.spectrum[self.d]
        return bool(np.isclose(a, b, rtol=1e-10, atol=1e-12) and a > 0)

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


def truncated_svd(Y, d: int, cap: int = DENSE_CAP) -> SvdFactors:
    """Leading ``d`` singular triplets of a dense matrix.

    Singular values below ``max(n, m) * eps * sigma_1`` are set to exactly
    zero; their vectors stay orthonormal. Each right singular vector is
    flipped so its largest-magnitude entry is positive, which makes the
    factors deterministic.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ValueError("Y must be a matrix")
    n, m = Y.shape
    check_dense_cap(n, m, cap, hint="dense SVD refused")
    if not 0 <= d <= min(n, m):
        raise ValueError(f"d must lie in [0, min(n, m)] = [0, {min(n, m)}], got {d}")
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    tol = max(n, m) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    s = np.where(s > tol, s, 0.0)
    U, V = U[:, :d], Vt[:d].T
    pivot = np.abs(V).argmax(axis=0)
    sign = np.sign(V[pivot, np.arange(d)])
    sign[sign == 0] = 1.0
    U = U * sign
    V = V * sign
    eps_min = float(np.sqrt(np.sum(s[d:] ** 2)))
    return SvdFactors(U, s[:d].copy(), V, eps_min, s)
