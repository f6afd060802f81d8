"""Gaussian correlation functions and nugget-augmented correlation matrices.

Three families share one container, :class:`KernelSpec`:

* ``sim``        rank-1 Gaussian, ``exp{-((xi - xj)' beta)^2}``
* ``separable``  ``exp{-sum_k (xik - xjk)^2 / theta_k}``
* ``isotropic``  the separable form with a single shared ``theta``

Every family is augmented with a nugget ``eta`` on the diagonal.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

ETA_FLOOR = 1e-8
JITTER_START = 1e-10
JITTER_MAX = 1e-6

FAMILIES = ("sim", "separable", "isotropic")


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a correlation matrix cannot be Cholesky factorised."""


@dataclass(frozen=True)
class KernelSpec:
    """Correlation family plus its parameters.

    Parameters
    ----------
    family : {"sim", "separable", "isotropic"}
    params : array_like
        ``beta`` (length p) for ``sim``, length-scales ``theta`` (length p)
        for ``separable``, a single ``theta`` for ``isotropic``.
    eta : float
        Nugget, at least :data:`ETA_FLOOR`.
    """

    family: str
    params: np.ndarray
    eta: float = ETA_FLOOR

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        params = np.atleast_1d(np.asarray(self.params, dtype=float)).copy()
        params.setflags(write=False)
        object.__setattr__(self, "params", params)
        if params.ndim != 1:
            raise ValueError("kernel parameters must be a vector")
        if not np.all(np.isfinite(params)):
            raise ValueError(f"non-finite kernel parameters {params}")
        if self.family == "isotropic" and params.size != 1:
            raise ValueError("isotropic kernel takes a single length-scale")
        if self.family != "sim" and np.any(params <= 0):
            raise ValueError(f"length-scales must be positive, got {params}")
        if not np.isfinite(self.eta) or self.eta < ETA_FLOOR:
            raise ValueError(f"nugget {self.eta} below floor {ETA_FLOOR}")

    @classmethod
    def sim(cls, beta, eta=ETA_FLOOR):
        return cls("sim", beta, eta)

    @classmethod
    def separable(cls, theta, eta=ETA_FLOOR):
        return cls("separable", theta, eta)

    @classmethod
    def isotropic(cls, theta, eta=ETA_FLOOR):
        return cls("isotropic", np.atleast_1d(theta)[:1], eta)

    @property
    def beta(self) -> np.ndarray:
        if self.family != "sim":
            raise AttributeError("only sim kernels carry an index vector")
        return self.params

    @property
    def theta(self) -> np.ndarray:
        if self.family == "sim":
            raise AttributeError("sim kernels carry no length-scales")
        return self.params

    def check_dim(self, p: int) -> None:
        if self.family != "isotropic" and self.params.size != p:
            raise ValueError(
                f"{self.family} kernel has {self.params.size} parameters "
                f"but inputs have dimension {p}"
            )

    def with_params(self, params=None, eta=None) -> "KernelSpec":
        return KernelSpec(
            self.family,
            self.params if params is None else params,
            self.eta if eta is None else eta,
        )


def sim_corr(xi, xj, beta) -> float:
    """Rank-1 Gaussian correlation between two points."""
    xi, xj, beta = (np.asarray(a, dtype=float) for a in (xi, xj, beta))
    if not (xi.shape == xj.shape == beta.shape) or xi.ndim != 1:
        raise ValueError(
            f"dimension mismatch: {xi.shape}, {xj.shape}, {beta.shape}"
        )
    t = float(np.dot(xi - xj, beta))
    return float(np.exp(-t * t))


def anisotropic_corr(xi, xj, theta) -> float:
    """Separable Gaussian correlation; pass equal ``theta`` for isotropy."""
    xi, xj = np.asarray(xi, dtype=float), np.asarray(xj, dtype=float)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), xi.shape)
    if xi.shape != xj.shape or xi.ndim != 1:
        raise ValueError(f"dimension mismatch: {xi.shape}, {xj.shape}")
    if np.any(theta <= 0):
        raise ValueError(f"length-scales must be positive, got {theta}")
    return float(np.exp(-np.sum((xi - xj) ** 2 / theta)))


def _as_design(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array")
    return X


def corr(A, B, spec: KernelSpec) -> np.ndarray:
    """Family correlation between rows of ``A`` and ``B``, no nugget."""
    A, B = _as_design(A, "A"), _as_design(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    spec.check_dim(A.shape[1])
    if spec.family == "sim":
        za, zb = A @ spec.params, B @ spec.params
        d2 = (za[:, None] - zb[None, :]) ** 2
    else:
        s = 1.0 / np.sqrt(np.broadcast_to(spec.params, (A.shape[1],)))
        diff = (A * s)[:, None, :] - (B * s)[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
    return np.exp(-d2)


@dataclass(frozen=True)
class CorrMatrix:
    """Nugget-augmented correlation matrix with its Cholesky factor.

    ``jitter`` records any extra diagonal inflation needed for the
    factorisation to succeed; ``entries`` include it.
    """

    entries: np.ndarray
    chol: np.ndarray
    logdet: float
    jitter: float = 0.0
    spec: Optional[KernelSpec] = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def solve(self, b) -> np.ndarray:
        return linalg.cho_solve((self.chol, True), b, check_finite=False)

    def half_solve(self, b) -> np.ndarray:
        """``L^{-1} b`` for the lower factor ``L``."""
        return linalg.solve_triangular(
            self.chol, b, lower=True, check_finite=False
        )


def cholesky_with_jitter(M, what="matrix"):
    """Lower Cholesky factor of ``M``, escalating diagonal jitter on failure.

    Returns ``(L, jitter)``. Jitter starts at 1e-10 and grows tenfold up to
    1e-6 before giving up with :class:`SingularMatrixError`.
    """
    jitter = 0.0
    n = M.shape[0]
    while True:
        try:
            A = M if jitter == 0.0 else M + jitter * np.eye(n)
            L = linalg.cholesky(A, lower=True, check_finite=False)
            if np.all(np.isfinite(L)) and np.all(np.diag(L) > 0):
                return L, jitter
        except linalg.LinAlgError:
            pass
        jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_MAX * (1 + 1e-9):
            raise SingularMatrixError(f"{what} is not positive definite")


def build_corr_matrix(X, spec: KernelSpec) -> CorrMatrix:
    """Correlation matrix ``K_n`` of the design under ``spec``."""
    X = _as_design(X)
    if X.shape[0] < 1:
        raise ValueError("need at least one design point")
    if np.any(X < -1e-12) or np.any(X > 1 + 1e-12):
        warnings.warn("design rows lie outside the unit cube", stacklevel=2)
    K = corr(X, X, spec)
    # exact symmetry regardless of floating-point path
    K = 0.5 * (K + K.T)
    K[np.diag_indices_from(K)] = 1.0 + spec.eta
    try:
        L, jitter = cholesky_with_jitter(K, "correlation matrix")
    except SingularMatrixError as err:
        raise SingularMatrixError(
            f"correlation matrix singular for {spec.family} kernel with "
            f"params={spec.params.tolist()}, eta={spec.eta:g}"
        ) from err
    if jitter:
        K[np.diag_indices_from(K)] += jitter
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return CorrMatrix(K, L, logdet, jitter, spec)


def cross_corr_matrix(Xstar, X, spec: KernelSpec, nugget=True) -> np.ndarray:
    """``N x n`` correlations between prediction points and the design.

    With ``nugget=True`` the nugget is added where a prediction point is
    bitwise identical to a design row.
    """
    Xstar, X = _as_design(Xstar, "Xstar"), _as_design(X)
    k = corr(Xstar, X, spec)
    if nugget:
        same = np.all(Xstar[:, None, :] == X[None, :, :], axis=2)
        if same.any():
            k = k + spec.eta * same
    return k


def cross_corr(xstar, X, spec: KernelSpec) -> np.ndarray:
    """Correlation vector ``k_n(x*)`` between one point and the design."""
    xstar = np.asarray(xstar, dtype=float)
    X = _as_design(X)
    if xstar.ndim != 1 or xstar.size != X.shape[1]:
        raise ValueError(
            f"point of shape {xstar.shape} does not match dimension {X.shape[1]}"
        )
    return cross_corr_matrix(xstar[None, :], X, spec)[0]
