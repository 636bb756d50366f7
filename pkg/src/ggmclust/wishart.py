"""Inverse-Wishart density and sampling, plus the special functions they need."""

import numpy as np
from scipy import linalg as sla
from scipy import special

from .linalg import inv_spd, logdet_spd, symmetrize

__all__ = ["multigamma_log", "digamma", "invwishart_logpdf", "invwishart_mode", "sample_invwishart"]

_LOG_PI = np.log(np.pi)


def multigamma_log(p: int, a: float) -> float:
    """log of the multivariate gamma function Gamma_p(a).

    Gamma_p(a) = pi^{p(p-1)/4} prod_{i=1}^{p} Gamma(a + (1 - i)/2); requires
    ``a > (p - 1)/2``.
    """
    p = int(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    if not a > 0.5 * (p - 1):
        raise ValueError(f"multigamma_log({p}, a) needs a > {(p - 1) / 2}, got {a}")
    i = np.arange(1, p + 1)
    return float(0.25 * p * (p - 1) * _LOG_PI + special.gammaln(a + 0.5 * (1 - i)).sum())


def digamma(a):
    """Digamma function; raises on poles (non-positive integers)."""
    a_arr = np.asarray(a, dtype=float)
    if np.any((a_arr <= 0) & (a_arr == np.round(a_arr))):
        raise ValueError("digamma has poles at non-positive integers")
    out = special.digamma(a_arr)
    return float(out) if out.ndim == 0 else out


def invwishart_logpdf(Sigma, nu: float, Psi) -> float:
    """Log density of InvW(nu, Psi) at `Sigma`.

    ``p(Sigma) = |Psi|^{nu/2} / (2^{nu d/2} Gamma_d(nu/2)) |Sigma|^{-(nu+d+1)/2}
    exp(-tr(Psi Sigma^{-1}) / 2)``
    """
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
    d = Sigma.shape[0]
    if Psi.shape != Sigma.shape:
        raise ValueError("Sigma and Psi shapes differ")
    if not nu > d - 1:
        raise ValueError(f"nu must exceed d - 1 = {d - 1}, got {nu}")
    ld_sigma = logdet_spd(Sigma)
    ld_psi = logdet_spd(Psi)
    tr = float(np.sum(Psi * inv_spd(Sigma)))
    return (
        0.5 * nu * ld_psi
        - 0.5 * nu * d * np.log(2.0)
        - multigamma_log(d, 0.5 * nu)
        - 0.5 * (nu + d + 1) * ld_sigma
        - 0.5 * tr
    )


def invwishart_mode(nu, Psi):
    Psi = np.atleast_2d(Psi)
    return Psi / (nu + Psi.shape[0] + 1)


def sample_invwishart(nu: float, Psi, rng: np.random.Generator) -> np.ndarray:
    """Draw from InvW(nu, Psi) via the Bartlett decomposition.

    Draws ``W ~ Wishart(nu, Psi^{-1})`` as ``W = (C A)(C A)^T`` with ``C``
    the Cholesky factor of ``Psi^{-1}`` and ``A`` lower triangular with
    chi-distributed diagonal, then returns ``W^{-1}``.
    """
    Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
    d = Psi.shape[0]
    if not nu > d - 1:
        raise ValueError(f"nu must exceed d - 1 = {d - 1}, got {nu}")
    C = sla.cholesky(inv_spd(Psi), lower=True)
    A = np.zeros((d, d))
    A[np.diag_indices(d)] = np.sqrt(rng.chisquare(nu - np.arange(d)))
    il = np.tril_indices(d, -1)
    A[il] = rng.standard_normal(len(il[0]))
    T = C @ A
    # Sigma = (T T^T)^{-1} = T^{-T} T^{-1}
    Tinv = sla.solve_triangular(T, np.eye(d), lower=True)
    return symmetrize(Tinv.T @ Tinv)
