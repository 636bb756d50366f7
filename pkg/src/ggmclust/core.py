"""Domain types: clusterings, sample statistics and prior hyperparameters."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "Clustering",
    "SampleStats",
    "Hyperparams",
    "NotPositiveDefiniteError",
    "canonicalize",
    "extract_block_cov",
    "as_spd",
    "read_csv_matrix",
    "standardize",
]


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix that must be SPD fails its Cholesky factorization."""


def as_spd(M, name="matrix"):
    """Return `M` as a float array after checking it is symmetric positive definite.

    Validation is a Cholesky attempt on the symmetrized matrix.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    scale = max(np.abs(M).max(), 1.0)
    if np.abs(M - M.T).max() > 1e-8 * scale:
        raise ValueError(f"{name} is not symmetric")
    M = 0.5 * (M + M.T)
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from exc
    return M


def _canonical_labels(labels):
    mapping = {}
    out = []
    for lab in labels:
        lab = int(lab)
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out.append(mapping[lab])
    return tuple(out)


@dataclass(frozen=True)
class Clustering:
    """A partition of ``p`` variables into ``k`` non-empty groups.

    Labels are stored in canonical form (clusters numbered by first
    appearance), so two clusterings compare equal iff they describe the same
    partition.
    """

    labels: tuple

    def __post_init__(self):
        if len(self.labels) == 0:
            raise ValueError("a clustering needs at least one variable")
        if any(int(lab) < 0 for lab in self.labels):
            raise ValueError("labels must be non-negative integers")
        object.__setattr__(self, "labels", _canonical_labels(self.labels))

    @property
    def p(self) -> int:
        return len(self.labels)

    @property
    def k(self) -> int:
        return max(self.labels) + 1

    @property
    def sizes(self) -> tuple:
        return tuple(np.bincount(self.labels, minlength=self.k).tolist())

    def members(self, j: int) -> np.ndarray:
        """Indices of the variables in cluster `j`, in increasing order."""
        if not 0 <= j < self.k:
            raise IndexError(f"cluster index {j} out of range for k={self.k}")
        return np.flatnonzero(np.asarray(self.labels) == j)

    def blocks(self) -> list:
        return [self.members(j) for j in range(self.k)]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=int)

    def to_json(self) -> dict:
        return {"labels": list(self.labels)}

    @classmethod
    def from_json(cls, obj) -> "Clustering":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(tuple(obj["labels"]))

    def __len__(self):
        return self.p


def canonicalize(labels: Sequence[int]) -> Clustering:
    """Relabel `labels` by order of first appearance.

    >>> canonicalize([2, 2, 0, 0]).labels
    (0, 0, 1, 1)
    """
    labels = list(np.asarray(labels).ravel().tolist())
    if not labels:
        raise ValueError("empty label sequence")
    return Clustering(tuple(labels))


@dataclass(frozen=True, eq=False)
class SampleStats:
    """Sample size and maximum-likelihood sample covariance ``S = X^T X / n``.

    Observations are assumed to have mean zero; no centering is applied.
    """

    n: int
    S: np.ndarray

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError(f"S must be square, got shape {S.shape}")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        norm = max(np.abs(S).max(), np.finfo(float).tiny)
        if np.abs(S - S.T).max() > 1e-12 * norm:
            raise ValueError("S is not symmetric")
        S = 0.5 * (S + S.T)
        lam_min = np.linalg.eigvalsh(S)[0]
        if lam_min < -1e-8 * np.linalg.norm(S, 2):
            raise ValueError(f"S is not positive semi-definite (min eigenvalue {lam_min:.3g})")
        S.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "n", int(self.n))

    @property
    def p(self) -> int:
        return self.S.shape[0]

    @classmethod
    def from_data(cls, X) -> "SampleStats":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("data must be a non-empty 2-D array (samples x variables)")
        n = X.shape[0]
        return cls(n, X.T @ X / n)

    def to_json(self) -> dict:
        return {"n": self.n, "p": self.p, "S": self.S.tolist()}

    @classmethod
    def from_json(cls, obj) -> "SampleStats":
        if isinstance(obj, str):
            obj = json.loads(obj)
        stats = cls(obj["n"], np.asarray(obj["S"], dtype=float))
        if "p" in obj and obj["p"] != stats.p:
            raise ValueError("stats JSON: p does not match S")
        return stats


def extract_block_cov(stats: SampleStats, clustering: Clustering, j: int) -> np.ndarray:
    """Submatrix of the sample covariance on the variables of cluster `j`."""
    if clustering.p != stats.p:
        raise ValueError(f"clustering has {clustering.p} variables, stats has {stats.p}")
    idx = clustering.members(j)
    return stats.S[np.ix_(idx, idx)].copy()


@dataclass(frozen=True, eq=False)
class Hyperparams:
    """Noise weight and inverse-Wishart prior parameters.

    ``nu_blocks`` and ``scale_blocks`` are indexed by cluster. Use
    :meth:`default` for the non-informative setting
    (``nu_j = p_j + 1``, identity scales, ``nu_eps = p + 1``).
    """

    beta: float
    nu_eps: float
    scale_eps: np.ndarray
    nu_blocks: tuple
    scale_blocks: tuple = field(repr=False)

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        scale_eps = as_spd(self.scale_eps, "scale_eps")
        p = scale_eps.shape[0]
        if self.nu_eps <= p - 1:
            raise ValueError(f"nu_eps must exceed p - 1 = {p - 1}")
        if len(self.nu_blocks) != len(self.scale_blocks):
            raise ValueError("nu_blocks and scale_blocks differ in length")
        scales = []
        for j, (nu, sc) in enumerate(zip(self.nu_blocks, self.scale_blocks)):
            sc = as_spd(np.atleast_2d(sc), f"scale_blocks[{j}]")
            if nu <= sc.shape[0] - 1:
                raise ValueError(f"nu_blocks[{j}] must exceed p_j - 1 = {sc.shape[0] - 1}")
            scales.append(sc)
        object.__setattr__(self, "scale_eps", scale_eps)
        object.__setattr__(self, "scale_blocks", tuple(scales))
        object.__setattr__(self, "nu_blocks", tuple(float(v) for v in self.nu_blocks))
        object.__setattr__(self, "nu_eps", float(self.nu_eps))
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def default(cls, clustering: Clustering, beta: float = 0.0) -> "Hyperparams":
        p = clustering.p
        sizes = clustering.sizes
        return cls(
            beta=beta,
            nu_eps=p + 1.0,
            scale_eps=np.eye(p),
            nu_blocks=tuple(pj + 1.0 for pj in sizes),
            scale_blocks=tuple(np.eye(pj) for pj in sizes),
        )

    @property
    def p(self) -> int:
        return self.scale_eps.shape[0]

    @property
    def k(self) -> int:
        return len(self.nu_blocks)

    # Constants of the MAP program: A = prior scale, a = nu + dim + 1.
    @property
    def a_eps(self) -> float:
        return self.nu_eps + self.p + 1.0

    @property
    def a_blocks(self) -> tuple:
        return tuple(nu + sc.shape[0] + 1.0 for nu, sc in zip(self.nu_blocks, self.scale_blocks))

    def check_compatible(self, clustering: Clustering):
        if self.p != clustering.p or self.k != clustering.k:
            raise ValueError("hyperparameters do not match the clustering")
        if tuple(sc.shape[0] for sc in self.scale_blocks) != clustering.sizes:
            raise ValueError("block prior scales do not match cluster sizes")


def read_csv_matrix(path, skip_header=False) -> np.ndarray:
    """Read a rectangular numeric CSV (one sample per row) into an array.

    Raises ``ValueError`` on ragged rows, non-numeric cells or an empty file.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if skip_header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"{path}: ragged row {i + 1} has {len(row)} columns, expected {width}")
    return np.asarray(rows, dtype=float)


def standardize(X, names=None) -> np.ndarray:
    """Center each column and scale it to unit (population) variance."""
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    Xc = X - mu
    sd = np.sqrt((Xc ** 2).mean(axis=0))
    bad = np.flatnonzero(sd <= 1e-12 * np.maximum(np.abs(mu), 1.0))
    if bad.size:
        col = bad[0]
        label = names[col] if names is not None else f"column {col}"
        raise ValueError(f"{label} has zero variance")
    return Xc / sd
