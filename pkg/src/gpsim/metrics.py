"""Predictive-accuracy metrics and the six-number comparison summary."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy import linalg

SUMMARY_ROWS = ("Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max.")


def mahalanobis(y, mu, Sigma) -> float:
    """Squared Mahalanobis distance ``(y - mu)' Sigma^{-1} (y - mu)``."""
    r = np.atleast_1d(np.asarray(y, dtype=float) - np.asarray(mu, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if Sigma.shape != (r.size, r.size):
        raise ValueError("Sigma does not match the residual length")
    try:
        L = linalg.cholesky(Sigma, lower=True)
    except linalg.LinAlgError:
        raise ValueError("Sigma must be positive definite")
    z = linalg.solve_triangular(L, r, lower=True)
    return float(z @ z)


def sqrt_mahalanobis(y, mu, Sigma) -> float:
    return float(np.sqrt(mahalanobis(y, mu, Sigma)))


def rmse(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError("y and yhat differ in shape")
    if y.size == 0:
        raise ValueError("rmse of empty vectors")
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def six_number_summary(values) -> np.ndarray:
    """Min, lower quartile, median, mean, upper quartile and max."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.full(6, np.nan)
    q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
    return np.array([q[0], q[1], q[2], v.mean(), q[3], q[4]])


@dataclass
class ComparisonSummary:
    """Per-method square-root Mahalanobis distances.

    ``distances[m][r]`` is the distance for method ``m`` on replicate
    ``replicates[m][r]``; failed replicates are listed in ``failures``.
    """

    distances: Dict[str, List[float]] = field(default_factory=dict)
    replicates: Dict[str, List[int]] = field(default_factory=dict)
    failures: Dict[str, List[int]] = field(default_factory=dict)

    @property
    def methods(self) -> List[str]:
        return list(self.distances)

    def add(self, method: str, replicate: int, value: float) -> None:
        self.distances.setdefault(method, []).append(float(value))
        self.replicates.setdefault(method, []).append(int(replicate))
        self.failures.setdefault(method, [])

    def fail(self, method: str, replicate: int) -> None:
        self.distances.setdefault(method, [])
        self.replicates.setdefault(method, [])
        self.failures.setdefault(method, []).append(int(replicate))

    def table(self) -> Dict[str, np.ndarray]:
        return {m: six_number_summary(d) for m, d in self.distances.items()}

    def median(self, method: str) -> float:
        return float(np.median(self.distances[method]))

    def paired(self, a: str, b: str):
        """Distances of ``a`` and ``b`` on replicates where both succeeded."""
        da = dict(zip(self.replicates[a], self.distances[a]))
        db = dict(zip(self.replicates[b], self.distances[b]))
        common = sorted(set(da) & set(db))
        return np.array([da[r] for r in common]), np.array([db[r] for r in common])

    def win_rate(self, a: str, b: str) -> float:
        """Fraction of shared replicates where ``a`` has the smaller distance."""
        xa, xb = self.paired(a, b)
        return float(np.mean(xa < xb)) if xa.size else float("nan")
