"""Seeded synthetic data with block-structured covariance plus optional noise.

Samples follow ``x ~ N(0, (Sigma^{-1} + eta Sigma_eps^{-1})^{-1})`` where
``Sigma`` is block diagonal over the true clusters and ``Sigma_eps`` is a
full noise covariance. Only the sample covariance is accumulated, so very
large ``n`` streams in fixed-size chunks.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import Clustering, SampleStats
from .linalg import inv_spd
from .wishart import sample_invwishart

__all__ = ["SynthSpec", "SynthDataset", "sample_invw_cov", "sample_uniform_cov", "generate_dataset", "dataset_rng"]

CHUNK = 50_000
UNIFORM_FLOOR = 0.001
_DISTS = ("invw", "uniform")


@dataclass(frozen=True)
class SynthSpec:
    """One simulated regime.

    `seed` and `rep` (repetition index) together determine the dataset.
    """

    cluster_sizes: tuple = (10, 10, 10, 10)
    n: int = 400
    block_dist: str = "invw"
    noise_dist: str = "none"
    eta: float = 0.0
    seed: int = 0
    rep: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cluster_sizes", tuple(int(s) for s in self.cluster_sizes))
        if not self.cluster_sizes or any(s < 1 for s in self.cluster_sizes):
            raise ValueError("cluster sizes must be positive")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.block_dist not in _DISTS:
            raise ValueError(f"block_dist must be one of {_DISTS}")
        if self.noise_dist not in _DISTS + ("none",):
            raise ValueError("noise_dist must be 'invw', 'uniform' or 'none'")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if (self.eta == 0) != (self.noise_dist == "none"):
            raise ValueError("eta must be 0 exactly when noise_dist is 'none'")

    @property
    def p(self) -> int:
        return sum(self.cluster_sizes)

    def truth(self) -> Clustering:
        return Clustering(tuple(np.repeat(np.arange(len(self.cluster_sizes)), self.cluster_sizes).tolist()))

    def to_json(self) -> dict:
        d = asdict(self)
        d["cluster_sizes"] = list(self.cluster_sizes)
        return d


@dataclass(eq=False)
class SynthDataset:
    stats: SampleStats
    truth: Clustering
    sigma: np.ndarray
    sigma_eps: np.ndarray | None
    data: np.ndarray | None = None


def dataset_rng(seed: int, rep: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(rep)]))


def sample_invw_cov(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Covariance drawn from InvW(dim + 1, I)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return sample_invwishart(dim + 1.0, np.eye(dim), rng)


def sample_uniform_cov(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric Uniform(-1, 1) off-diagonals, shifted so the smallest eigenvalue is 0.001."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    A = np.zeros((dim, dim))
    iu = np.triu_indices(dim, 1)
    A[iu] = rng.uniform(-1.0, 1.0, size=len(iu[0]))
    A = A + A.T
    lam_min = np.linalg.eigvalsh(A)[0]
    return A + (UNIFORM_FLOOR - lam_min) * np.eye(dim)


def _draw_cov(dist, dim, rng):
    return sample_invw_cov(dim, rng) if dist == "invw" else sample_uniform_cov(dim, rng)


def generate_dataset(spec: SynthSpec, keep_data: bool = False) -> SynthDataset:
    """Draw the generating covariances and ``n`` samples for `spec`.

    The sample covariance ``X^T X / n`` is accumulated over chunks of at
    most 50000 rows. Set `keep_data` to also return the ``n x p`` samples.
    """
    rng = dataset_rng(spec.seed, spec.rep)
    cov_rng, sample_rng = rng.spawn(2)
    p = spec.p
    truth = spec.truth()
    sigma = np.zeros((p, p))
    for idx, size in zip(truth.blocks(), spec.cluster_sizes):
        sigma[np.ix_(idx, idx)] = _draw_cov(spec.block_dist, size, cov_rng)
    precision = inv_spd(sigma)
    sigma_eps = None
    if spec.noise_dist != "none":
        sigma_eps = _draw_cov(spec.noise_dist, p, cov_rng)
        precision = precision + spec.eta * inv_spd(sigma_eps)
    L = np.linalg.cholesky(inv_spd(precision))

    acc = np.zeros((p, p))
    chunks = []
    remaining = spec.n
    while remaining > 0:
        m = min(CHUNK, remaining)
        X = sample_rng.standard_normal((m, p)) @ L.T
        acc += X.T @ X
        if keep_data:
            chunks.append(X)
        remaining -= m
    S = acc / spec.n
    stats = SampleStats(spec.n, 0.5 * (S + S.T))
    data = np.vstack(chunks) if keep_data else None
    return SynthDataset(stats=stats, truth=truth, sigma=sigma, sigma_eps=sigma_eps, data=data)


def truth_json(spec: SynthSpec) -> str:
    return json.dumps({"labels": list(spec.truth().labels), "eta": spec.eta, "seed": spec.seed, "rep": spec.rep}, sort_keys=True)
