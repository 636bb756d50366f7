"""Dense symmetric matrix kernels."""

from typing import NamedTuple

import numpy as np
from scipy import linalg as sla

from .core import NotPositiveDefiniteError

__all__ = ["SymEig", "sym_eig", "logdet_spd", "inv_spd", "solve_stationarity", "symmetrize"]


class SymEig(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def sym_eig(M) -> SymEig:
    """Full spectral decomposition of a symmetric matrix, eigenvalues ascending."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = max(np.abs(M).max(), np.finfo(float).tiny)
    if np.abs(M - M.T).max() > 1e-8 * scale:
        raise ValueError("matrix is not symmetric")
    w, Q = np.linalg.eigh(symmetrize(M))
    return SymEig(w, Q)


def _cholesky(M):
    try:
        return sla.cholesky(symmetrize(M), lower=True, check_finite=False)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc


def logdet_spd(M) -> float:
    """log|M| for SPD `M` via Cholesky; raises NotPositiveDefiniteError otherwise."""
    L = _cholesky(np.atleast_2d(M))
    d = np.diag(L)
    if not np.all(d > 0):
        raise NotPositiveDefiniteError("matrix is not positive definite")
    return 2.0 * float(np.sum(np.log(d)))


def inv_spd(M) -> np.ndarray:
    M = np.atleast_2d(M)
    L = _cholesky(M)
    Linv = sla.solve_triangular(L, np.eye(M.shape[0]), lower=True, check_finite=False)
    return Linv.T @ Linv


def solve_stationarity(R, lam) -> np.ndarray:
    """Solve ``-V^{-1} + lam * V = R`` for positive definite `V`.

    With ``R = Q diag(l) Q^T`` the solution is ``Q diag(y) Q^T`` where
    ``y_i`` is the positive root of ``lam * y^2 - l_i * y - 1 = 0``.

    Parameters
    ----------
    R : (d, d) array_like
        Symmetric right-hand side, of any inertia.
    lam : float
        Strictly positive weight.

    Returns
    -------
    V : (d, d) ndarray
        The unique SPD solution.
    """
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    w, Q = np.linalg.eigh(R)
    disc = np.sqrt(w * w + 4.0 * lam)
    # (w + disc) / (2 lam) cancels catastrophically for w << 0
    y = np.where(w >= 0, (w + disc) / (2.0 * lam), 2.0 / (disc - w))
    return (Q * y) @ Q.T
