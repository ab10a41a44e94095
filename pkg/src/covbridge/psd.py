"""Symmetric positive-semidefinite linear algebra.

Every function here goes through a symmetric eigendecomposition of
``(S + S')/2``; eigenvalues below ``rank_tol * max_eigenvalue`` are treated as
exact zeros, and that same threshold defines the range/null projections.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import RANK_TOL, sym
from .errors import NotPSDError, NotSymmetricError, NumericalFailure, ValidationError

SYM_TOL = 1e-9


def _check_square(S):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValidationError("matrix has non-finite entries")
    return S


def _check_symmetric(S, tol=SYM_TOL):
    resid = np.max(np.abs(S - S.T), initial=0.0)
    scale = max(1.0, np.max(np.abs(S), initial=0.0))
    if resid > tol * scale:
        raise NotSymmetricError(f"not-symmetric: asymmetry {resid:.3e} exceeds {tol:g} x {scale:.3g}")


def psd_eigh(S, rank_tol: float = RANK_TOL):
    """Eigenpairs of a PSD matrix with small eigenvalues truncated to zero.

    Returns ``(w, V)`` sorted by decreasing eigenvalue, so the range basis
    comes first.  Raises `NotPSDError` on materially negative eigenvalues.
    """
    w, V = np.linalg.eigh(sym(S))
    w, V = w[::-1], V[:, ::-1]
    scale = np.max(np.abs(w), initial=0.0)
    if w.size and w[-1] < -rank_tol * scale:
        raise NotPSDError(f"not-psd: eigenvalue {w[-1]:.3e} below -{rank_tol:g} x {scale:.3g}")
    w = np.where(w > rank_tol * max(w[0], 0.0), w, 0.0) if w.size else w
    return w, V


def psd_sqrt(S, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Unique symmetric PSD square root."""
    w, V = psd_eigh(_check_square(S), rank_tol)
    return sym((V * np.sqrt(w)) @ V.T)


def psd_pinv(S, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a PSD matrix."""
    w, V = psd_eigh(_check_square(S), rank_tol)
    k = int(np.count_nonzero(w))
    return sym((V[:, :k] / w[:k]) @ V[:, :k].T)


@dataclass(frozen=True, eq=False)
class GaussianMarginal:
    """Zero-mean Gaussian with possibly singular covariance ``Sigma``.

    ``basis`` holds orthonormal eigenvectors with the ``rank`` range
    directions first, so ``basis' Sigma basis = diag(Lambda, 0)``.
    """

    Sigma: np.ndarray
    rank: int
    eigvals: np.ndarray
    basis: np.ndarray
    sqrt: np.ndarray
    pinv: np.ndarray
    pinv_sqrt: np.ndarray
    proj_range: np.ndarray
    proj_null: np.ndarray
    rank_tol: float = RANK_TOL

    @property
    def n(self) -> int:
        return self.Sigma.shape[0]

    @property
    def singular(self) -> bool:
        return self.rank < self.n

    @property
    def range_basis(self) -> np.ndarray:
        return self.basis[:, : self.rank]

    @property
    def Lambda(self) -> np.ndarray:
        """Range block of ``Sigma`` in ``basis`` (diagonal)."""
        return np.diag(self.eigvals[: self.rank])

    @property
    def inv(self) -> np.ndarray:
        if self.singular:
            raise ValidationError("covariance is singular; use pinv")
        return self.pinv


def make_marginal(Sigma, rank_tol: float = RANK_TOL, sym_tol: float = SYM_TOL) -> GaussianMarginal:
    """Build a `GaussianMarginal`, detecting rank and the derived operators.

    >>> m = make_marginal([[1.0, 0.0], [0.0, 0.0]])
    >>> m.rank, m.proj_null.tolist()
    (1, [[0.0, 0.0], [0.0, 1.0]])
    """
    S = _check_square(Sigma)
    _check_symmetric(S, sym_tol)
    w, V = psd_eigh(S, rank_tol)
    k = int(np.count_nonzero(w))
    Vr, wr = V[:, :k], w[:k]
    n = S.shape[0]
    proj_range = sym(Vr @ Vr.T)
    ops = dict(
        Sigma=sym((Vr * wr) @ Vr.T),
        sqrt=sym((Vr * np.sqrt(wr)) @ Vr.T),
        pinv=sym((Vr / wr) @ Vr.T),
        pinv_sqrt=sym((Vr / np.sqrt(wr)) @ Vr.T),
        proj_range=proj_range,
        proj_null=sym(np.eye(n) - proj_range),
    )
    if k == n:
        ops["Sigma"] = sym(S)
    for a in ops.values():
        a.setflags(write=False)
    return GaussianMarginal(rank=k, eigvals=w, basis=V, rank_tol=rank_tol, **ops)


def perturb(marg: GaussianMarginal, eps: float) -> np.ndarray:
    """``Sigma + eps * Pi_null``: positive definite for every ``eps > 0``."""
    if not eps > 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    return sym(marg.Sigma + eps * marg.proj_null)


def check_invertible(S, what: str, rank_tol: float = RANK_TOL) -> None:
    """Raise `NumericalFailure` when ``S`` is numerically singular."""
    s = np.linalg.svd(S, compute_uv=False)
    if not np.all(np.isfinite(s)):
        raise NumericalFailure(f"numerical-failure: {what} has non-finite entries")
    if s[0] == 0 or s[-1] <= rank_tol * s[0]:
        raise NumericalFailure(
            f"numerical-failure: {what} is singular (singular-value ratio "
            f"{(s[-1] / s[0]) if s[0] else 0.0:.3e})"
        )
