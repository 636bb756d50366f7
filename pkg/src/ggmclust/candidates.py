"""Restricted hypothesis space of clusterings.

Spectral candidates come from sparse precision estimates: for each penalty
in a grid the graphical lasso estimate defines a weighted graph on the
variables, and k-means on the leading Laplacian eigenvectors yields one
clustering per ``k``. Hierarchical linkage candidates serve as baselines.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform
from sklearn.cluster import KMeans

from .core import Clustering, SampleStats
from .linalg import inv_spd, logdet_spd, solve_stationarity

__all__ = [
    "DEFAULT_LAMBDAS",
    "GlassoConfig",
    "GlassoResult",
    "CandidateSet",
    "graphical_lasso",
    "build_laplacian",
    "spectral_candidates",
    "linkage_candidates",
]

log = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (0.0001, 0.0005, 0.001, 0.002, 0.003, 0.004, 0.005, 0.006, 0.007, 0.008, 0.009, 0.01)
RIDGE = 0.001


@dataclass(frozen=True)
class GlassoConfig:
    lambda_grid: tuple = DEFAULT_LAMBDAS
    k_max: int = 15
    tol: float = 1e-5
    max_iters: int = 5000
    q: float = 1.0
    kmeans_restarts: int = 10

    def __post_init__(self):
        if any(lam < 0 for lam in self.lambda_grid):
            raise ValueError("penalties must be non-negative")
        if self.k_max < 2:
            raise ValueError("k_max must be >= 2")
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("tol must be positive and max_iters >= 1")
        if self.q <= 0:
            raise ValueError("q must be positive")


@dataclass(eq=False)
class GlassoResult:
    X: np.ndarray
    gap: float
    iterations: int
    converged: bool


@dataclass(eq=False)
class CandidateSet:
    """Deduplicated clusterings with the provenance of their first occurrence."""

    candidates: list = field(default_factory=list)
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        self._seen = {}
        cands, prov = self.candidates, self.provenance
        self.candidates, self.provenance = [], []
        for c, pr in zip(cands, prov):
            self.add(c, pr)

    def add(self, clustering: Clustering, provenance: dict) -> bool:
        """Add `clustering` unless an equal partition is present; return whether it was added."""
        if clustering in self._seen:
            return False
        self._seen[clustering] = len(self.candidates)
        self.candidates.append(clustering)
        self.provenance.append(dict(provenance))
        return True

    def merge(self, other: "CandidateSet") -> "CandidateSet":
        out = CandidateSet(list(self.candidates), list(self.provenance))
        for c, pr in zip(other.candidates, other.provenance):
            out.add(c, pr)
        return out

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __contains__(self, clustering):
        return clustering in self._seen

    def to_json(self) -> dict:
        return {
            "candidates": [
                {"labels": list(c.labels), **{k: pr[k] for k in sorted(pr)}} for c, pr in zip(self.candidates, self.provenance)
            ]
        }

    @classmethod
    def from_json(cls, obj) -> "CandidateSet":
        if isinstance(obj, str):
            obj = json.loads(obj)
        out = cls()
        for item in obj["candidates"]:
            item = dict(item)
            labels = item.pop("labels")
            out.add(Clustering(tuple(labels)), item)
        return out


def _glasso_objective(X, S, lam):
    off = np.abs(X).sum() - np.abs(np.diag(X)).sum()
    return -logdet_spd(X) + float(np.sum(S * X)) + lam * off


def _duality_gap(Z, S, lam):
    try:
        primal = _glasso_objective(Z, S, lam)
        G = np.clip(inv_spd(Z) - S, -lam, lam)
        np.fill_diagonal(G, 0.0)
        dual = logdet_spd(S + G) + S.shape[0]
    except ValueError:
        return np.inf
    return primal - dual


def graphical_lasso(S, lam: float, cfg: GlassoConfig | None = None, init=None) -> GlassoResult:
    """l1-penalized Gaussian precision estimate with unpenalized diagonal.

    Minimizes ``-log|X| + tr(S X) + lam sum_{i != j} |X_ij|`` by ADMM on the
    split ``X = Z``: the log-det block is solved in closed form and the
    penalized block by soft-thresholding. Stops once the duality gap
    (primal at ``Z`` against the dual point ``S + clip(Z^{-1} - S)``) is at
    most ``cfg.tol``.

    Parameters
    ----------
    S : (p, p) array_like
        Positive definite covariance.
    lam : float
        Off-diagonal penalty.
    init : (p, p) ndarray, optional
        Warm start for ``Z``.
    """
    cfg = cfg or GlassoConfig()
    S = np.asarray(S, dtype=float)
    if lam < 0:
        raise ValueError("lam must be non-negative")
    p = S.shape[0]
    if lam >= np.max(np.abs(S - np.diag(np.diag(S)))) and p > 1 or p == 1:
        X = np.diag(1.0 / np.diag(S))
        return GlassoResult(X, _duality_gap(X, S, lam), 0, True)
    Z = np.diag(1.0 / np.diag(S)) if init is None else np.array(init, dtype=float)
    U = np.zeros_like(S)
    rho = 1.0
    off = ~np.eye(p, dtype=bool)
    gap = np.inf
    for it in range(1, cfg.max_iters + 1):
        X = solve_stationarity(rho * (Z - U) - S, rho)
        V = X + U
        Z_old = Z
        Z = V.copy()
        t = lam / rho
        Z[off] = np.sign(V[off]) * np.maximum(np.abs(V[off]) - t, 0.0)
        U = V - Z
        if it % 5 == 0:
            gap = _duality_gap(Z, S, lam)
            if gap <= cfg.tol:
                return GlassoResult(0.5 * (Z + Z.T), gap, it, True)
            r = np.linalg.norm(X - Z)
            s = rho * np.linalg.norm(Z - Z_old)
            # residual balancing, rescaling the scaled dual
            if r > 10 * s:
                rho *= 2.0
                U /= 2.0
            elif s > 10 * r:
                rho /= 2.0
                U *= 2.0
    log.warning("graphical lasso (lam=%g) stopped at duality gap %.3g", lam, gap)
    return GlassoResult(0.5 * (Z + Z.T), gap, cfg.max_iters, False)


def build_laplacian(X, q: float = 1.0) -> np.ndarray:
    """Graph Laplacian with edge weights ``|X_ij|^q`` (diagonal of `X` ignored)."""
    X = np.asarray(X, dtype=float)
    Wt = np.abs(0.5 * (X + X.T)) ** q
    np.fill_diagonal(Wt, 0.0)
    return np.diag(Wt.sum(axis=1)) - Wt


def _kmeans_labels(E, k, seed, restarts):
    km = KMeans(n_clusters=k, init="k-means++", n_init=restarts, random_state=seed)
    with warnings.catch_warnings():
        # duplicate embedding rows give fewer distinct points than k
        warnings.simplefilter("ignore")
        return km.fit_predict(E)


def _ridged(S):
    if np.linalg.eigvalsh(S)[0] <= 1e-10 * max(np.abs(S).max(), 1.0):
        return S + RIDGE * np.eye(S.shape[0])
    return S


def spectral_candidates(stats: SampleStats, cfg: GlassoConfig | None = None, seed: int = 0) -> CandidateSet:
    """Spectral clustering candidates over the penalty grid and ``k = 2..k_max``.

    For each penalty the graphical lasso estimate defines a Laplacian; its
    eigenvectors for the ``k_max`` smallest eigenvalues (rows = variables,
    unnormalized) are clustered by k-means using the first ``k`` columns.
    Outcomes with fewer than ``k`` non-empty clusters are dropped.
    """
    cfg = cfg or GlassoConfig()
    p = stats.p
    if p < 2:
        raise ValueError("need at least two variables")
    S = _ridged(np.array(stats.S))
    k_max = min(cfg.k_max, p)
    out = CandidateSet()
    init = None
    for lam in sorted(cfg.lambda_grid):
        try:
            res = graphical_lasso(S, lam, cfg, init=init)
        except (ValueError, FloatingPointError) as exc:
            log.warning("skipping lam=%g: %s", lam, exc)
            continue
        init = res.X
        L = build_laplacian(res.X, cfg.q)
        _, vecs = np.linalg.eigh(L)
        E = vecs[:, :k_max]
        for k in range(2, k_max + 1):
            labels = _kmeans_labels(E[:, :k], k, seed, cfg.kmeans_restarts)
            if len(np.unique(labels)) < k:
                continue
            out.add(Clustering(tuple(labels.tolist())), {"method": "spectral", "lambda": float(lam), "k": k})
    return out


def linkage_candidates(stats: SampleStats, method: str = "average", k_max: int = 15) -> CandidateSet:
    """Hierarchical clustering on ``1 - |corr|``, cut at ``k = 2..min(k_max, p)``."""
    if method not in ("single", "average"):
        raise ValueError("method must be 'single' or 'average'")
    p = stats.p
    if p < 2:
        raise ValueError("need at least two variables")
    d = np.sqrt(np.diag(stats.S))
    if np.any(d <= 0):
        raise ValueError("zero-variance variable")
    R = stats.S / np.outer(d, d)
    D = np.clip(1.0 - np.abs(R), 0.0, None)
    np.fill_diagonal(D, 0.0)
    Z = linkage(squareform(0.5 * (D + D.T), checks=False), method=method)
    out = CandidateSet()
    for k in range(2, min(k_max, p) + 1):
        out.add(Clustering(tuple(_cut(Z, p, k).tolist())), {"method": method, "k": k})
    return out


def _cut(Z, p, k):
    # replay the first p - k merges; scipy's cut_tree mislabels some trees
    members = {i: [i] for i in range(p)}
    for step in range(p - k):
        a, b = int(Z[step, 0]), int(Z[step, 1])
        members[p + step] = members.pop(a) + members.pop(b)
    labels = np.empty(p, dtype=int)
    for lab, idx in enumerate(members.values()):
        labels[idx] = lab
    return labels
