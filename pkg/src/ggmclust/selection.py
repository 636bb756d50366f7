"""Scoring candidate clusterings and picking the best one."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.metrics import calinski_harabasz_score

from .admm import AdmmConfig, solve_map
from .core import Clustering, Hyperparams, SampleStats
from .linalg import inv_spd, logdet_spd
from .marginal import analytic_log_marginal_basic, variational_log_marginal
from .mcmc import McmcConfig, chib_log_marginal

__all__ = [
    "Criterion",
    "SelectionResult",
    "score",
    "score_record",
    "ebic_score",
    "aic_score",
    "chi_score",
    "correlation_embedding",
    "posterior_over_k",
    "select",
]

log = logging.getLogger(__name__)

RIDGE = 0.001
LIKELIHOOD_KINDS = ("proposed-vi", "proposed-mcmc", "basic-iw")
KINDS = LIKELIHOOD_KINDS + ("ebic", "aic", "chi")


@dataclass(frozen=True)
class Criterion:
    """A selection criterion.

    `exclude_one_cluster` defaults to on for ``ebic`` and ``aic`` and off
    otherwise.
    """

    kind: str
    beta: float = 0.02
    gamma: float = 0.0
    exclude_one_cluster: bool | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown criterion {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.exclude_one_cluster is None:
            object.__setattr__(self, "exclude_one_cluster", self.kind in ("ebic", "aic"))

    @classmethod
    def parse(cls, text: str, beta: float = 0.02, exclude_one_cluster: bool | None = None) -> "Criterion":
        """Parse ``"proposed-vi"``, ``"ebic:0.5"`` and the like."""
        kind, _, arg = text.partition(":")
        if kind == "ebic":
            return cls("ebic", beta=beta, gamma=float(arg) if arg else 0.0, exclude_one_cluster=exclude_one_cluster)
        if arg:
            if kind not in ("proposed-vi", "proposed-mcmc"):
                raise ValueError(f"criterion {kind!r} takes no parameter")
            beta = float(arg)
        return cls(kind, beta=beta, exclude_one_cluster=exclude_one_cluster)

    @property
    def is_likelihood(self) -> bool:
        return self.kind in LIKELIHOOD_KINDS

    @property
    def name(self) -> str:
        if self.kind == "ebic":
            return f"ebic:{self.gamma:g}"
        if self.kind.startswith("proposed"):
            return f"{self.kind}:{self.beta:g}"
        return self.kind


@dataclass(eq=False)
class SelectionResult:
    criterion: Criterion
    best: Clustering
    candidates: list
    scores: np.ndarray
    posterior_k: dict | None
    records: list = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "criterion": self.criterion.name,
            "best": {"labels": list(self.best.labels), "k": self.best.k},
            "scores": [{"labels": list(c.labels), "score": float(s)} for c, s in zip(self.candidates, self.scores)],
            "posterior_k": None if self.posterior_k is None else {str(k): v for k, v in sorted(self.posterior_k.items())},
        }


def _ridge_block_loglik(stats: SampleStats, clustering: Clustering):
    n, p = stats.n, stats.p
    val = 0.0
    for idx in clustering.blocks():
        Sj = stats.S[np.ix_(idx, idx)]
        Theta = inv_spd(Sj + RIDGE * np.eye(len(idx)))
        val += logdet_spd(Theta) - float(np.sum(Sj * Theta))
    return 0.5 * n * val - 0.5 * n * p * np.log(2.0 * np.pi)


def _edges(clustering: Clustering) -> int:
    return sum(s * (s - 1) // 2 for s in clustering.sizes)


def ebic_score(stats: SampleStats, clustering: Clustering, gamma: float = 0.0) -> float:
    """Negated EBIC of the saturated block model with ridge-regularized block MLEs."""
    E = _edges(clustering)
    ebic = -2.0 * _ridge_block_loglik(stats, clustering) + E * np.log(stats.n) + 4.0 * gamma * E * np.log(stats.p)
    return float(-ebic)


def aic_score(stats: SampleStats, clustering: Clustering) -> float:
    """Negated AIC with ``p + |E|`` free parameters."""
    df = stats.p + _edges(clustering)
    return float(-(-2.0 * _ridge_block_loglik(stats, clustering) + 2.0 * df))


def correlation_embedding(stats: SampleStats) -> np.ndarray:
    """Rows are variables, features are their correlation profiles."""
    d = np.sqrt(np.diag(stats.S))
    if np.any(d <= 0):
        raise ValueError("zero-variance variable")
    return stats.S / np.outer(d, d)


def chi_score(stats: SampleStats, clustering: Clustering, embedding=None) -> float:
    """Calinski-Harabasz index of the clustering on a variable embedding.

    Returns ``-inf`` for ``k = 1``, ``k = p`` or zero within-cluster dispersion.
    """
    E = correlation_embedding(stats) if embedding is None else np.asarray(embedding, dtype=float)
    if E.shape[0] != clustering.p:
        raise ValueError("embedding must have one row per variable")
    k, p = clustering.k, clustering.p
    if k == 1 or k == p:
        return -np.inf
    labels = clustering.as_array()
    within = sum(np.sum((E[labels == j] - E[labels == j].mean(axis=0)) ** 2) for j in range(k))
    if within <= 0:
        return -np.inf
    return float(calinski_harabasz_score(E, labels))


def score_record(stats, clustering, criterion: Criterion, admm_cfg=None, mcmc_cfg=None, embedding=None) -> dict:
    """Score one candidate and return a JSON-ready record with a ``score`` field."""
    rec = {"clustering": list(clustering.labels), "criterion": criterion.name}
    kind = criterion.kind
    if kind == "proposed-vi":
        hyper = Hyperparams.default(clustering, criterion.beta)
        fit = variational_log_marginal(stats, clustering, hyper, admm_cfg)
        rec.update(fit.to_json(criterion.beta))
        rec["criterion"] = criterion.name
        rec["score"] = fit.log_marginal
    elif kind == "proposed-mcmc":
        hyper = Hyperparams.default(clustering, criterion.beta)
        sol = solve_map(stats, clustering, hyper, admm_cfg)
        est = chib_log_marginal(stats, clustering, hyper, sol, mcmc_cfg or McmcConfig())
        rec.update(
            beta=criterion.beta,
            log_marginal=est.log_marginal,
            std_error=est.std_error,
            acceptance_rates=list(est.acceptance_rates),
            converged=bool(sol.converged),
            score=est.log_marginal,
        )
    elif kind == "basic-iw":
        rec["score"] = analytic_log_marginal_basic(stats, clustering, Hyperparams.default(clustering, 0.0))
    elif kind == "ebic":
        rec["score"] = ebic_score(stats, clustering, criterion.gamma)
    elif kind == "aic":
        rec["score"] = aic_score(stats, clustering)
    else:
        rec["score"] = chi_score(stats, clustering, embedding)
    rec["score"] = float(rec["score"])
    return rec


def score(stats, clustering, criterion: Criterion, admm_cfg=None, mcmc_cfg=None, embedding=None) -> float:
    """Score of one candidate; higher is better for every criterion."""
    if clustering.p != stats.p:
        raise ValueError(f"clustering has {clustering.p} variables, stats has {stats.p}")
    return score_record(stats, clustering, criterion, admm_cfg, mcmc_cfg, embedding)["score"]


def posterior_over_k(scores, candidates, criterion: Criterion | None = None) -> dict:
    """``P(k | X)`` proportional to the summed marginal likelihoods of candidates with ``k`` clusters.

    Passing a non-likelihood `criterion` raises ``ValueError``.
    """
    if criterion is not None and not criterion.is_likelihood:
        raise ValueError(f"posterior over k is undefined for criterion {criterion.name}")
    scores = np.asarray(scores, dtype=float)
    if len(scores) != len(candidates) or len(scores) == 0:
        raise ValueError("need one score per candidate and at least one candidate")
    ks = np.array([c.k for c in candidates])
    total = logsumexp(scores)
    if not np.isfinite(total):
        raise ValueError("all scores are -inf")
    return {int(k): float(np.exp(logsumexp(scores[ks == k]) - total)) for k in np.unique(ks)}


def _argmax(candidates, scores):
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], candidates[i].k, candidates[i].labels))
    return order[0]


def select(stats: SampleStats, candidates, criterion: Criterion, admm_cfg: AdmmConfig | None = None, mcmc_cfg=None, embedding=None) -> SelectionResult:
    """Score all candidates and return the maximizer.

    Ties go to fewer clusters, then to the lexicographically smaller
    canonical labels. The posterior over ``k`` is computed for likelihood
    criteria only.
    """
    cands = [c for c in candidates if not (criterion.exclude_one_cluster and c.k == 1)]
    if not cands:
        raise ValueError("no candidates left to select from")
    if embedding is None and criterion.kind == "chi":
        embedding = correlation_embedding(stats)
    records = [score_record(stats, c, criterion, admm_cfg, mcmc_cfg, embedding) for c in cands]
    scores = np.array([r["score"] for r in records])
    best = cands[_argmax(cands, scores)]
    post = posterior_over_k(scores, cands, criterion) if criterion.is_likelihood else None
    return SelectionResult(criterion, best, cands, scores, post, records)

