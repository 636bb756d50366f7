"""Clustering agreement and aggregation over repetitions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.metrics import adjusted_mutual_info_score

from .core import Clustering

__all__ = ["Contingency", "contingency", "anmi", "aggregate", "format_cell"]


@dataclass(frozen=True, eq=False)
class Contingency:
    counts: np.ndarray

    @property
    def rows(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def cols(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _labels(c):
    return np.asarray(c.labels if isinstance(c, Clustering) else c)


def contingency(a, b) -> Contingency:
    a, b = _labels(a), _labels(b)
    if a.shape != b.shape:
        raise ValueError(f"partitions have different lengths ({len(a)} vs {len(b)})")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    counts = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(counts, (ia, ib), 1)
    return Contingency(counts)


def anmi(a, b) -> float:
    """Adjusted-for-chance mutual information with the ``max(H(a), H(b))`` normalizer.

    Accepts :class:`Clustering` objects or label sequences.
    """
    a, b = _labels(a), _labels(b)
    if a.shape != b.shape:
        raise ValueError(f"partitions have different lengths ({len(a)} vs {len(b)})")
    return float(adjusted_mutual_info_score(a, b, average_method="max"))


def aggregate(values):
    """Sample mean and standard deviation (``ddof=1``; 0.0 for one value)."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise ValueError("nothing to aggregate")
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return float(np.mean(v)), sd


def format_cell(values, digits: int = 2) -> str:
    """``"mean (std)"`` as in a results table, e.g. ``"0.95 (0.06)"``."""
    m, s = aggregate(values)
    return f"{m:.{digits}f} ({s:.{digits}f})"
