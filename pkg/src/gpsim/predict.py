"""Student-t kriging prediction under a fixed kernel or a posterior chain."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .kernels import (
    CorrMatrix,
    KernelSpec,
    _as_design,
    build_corr_matrix,
    corr,
    cross_corr_matrix,
)
from .mcmc import Chain
from .posterior import PriorSpec


@dataclass(frozen=True)
class PredictiveT:
    """Multivariate Student-t law ``t_dof(mean, scale)``."""

    mean: np.ndarray
    scale: np.ndarray
    dof: float

    @property
    def N(self) -> int:
        return self.mean.size

    def cov(self) -> np.ndarray:
        """Covariance ``scale * dof / (dof - 2)``; needs ``dof > 2``."""
        if self.dof <= 2:
            raise ValueError("Student-t covariance undefined for dof <= 2")
        return self.scale * (self.dof / (self.dof - 2.0))

    def variance(self) -> np.ndarray:
        return np.diag(self.cov()).copy()


def predictive_dof(n: int, priors: PriorSpec) -> float:
    return priors.a_sigma + n - 1.0


def joint_predictive(
    Xstar,
    Y,
    X,
    spec: KernelSpec,
    priors: PriorSpec,
    *,
    latent: bool = False,
    Kmat: Optional[CorrMatrix] = None,
) -> PredictiveT:
    """Joint Student-t predictive at the rows of ``Xstar``.

    By default the target is the noisy response: the nugget sits on the
    diagonal of ``K(X*, X*)`` and on cross-correlations to design rows the
    point coincides with. ``latent=True`` predicts the noise-free process
    instead, dropping the nugget from both.
    """
    Xstar, X = _as_design(Xstar, "Xstar"), _as_design(X)
    Y = np.asarray(Y, dtype=float)
    n = Y.size
    if X.shape[0] != n:
        raise ValueError("X and Y disagree on the number of runs")
    if Xstar.shape[1] != X.shape[1]:
        raise ValueError(
            f"prediction points have dimension {Xstar.shape[1]}, design {X.shape[1]}"
        )
    if n < 2:
        raise ValueError("prediction needs at least two runs")
    if Kmat is None:
        Kmat = build_corr_matrix(X, spec)
    k = cross_corr_matrix(Xstar, X, spec, nugget=not latent)
    Kss = corr(Xstar, Xstar, spec)
    Kss = 0.5 * (Kss + Kss.T)
    if not latent:
        Kss[np.diag_indices_from(Kss)] += spec.eta
    alpha = Kmat.solve(Y)
    mean = k @ alpha
    V = Kmat.half_solve(k.T)
    dof = predictive_dof(n, priors)
    quad = float(Y @ alpha)
    c = (priors.b_sigma + quad) / (priors.a_sigma + n - 1.0)
    scale = c * (Kss - V.T @ V)
    return PredictiveT(mean, 0.5 * (scale + scale.T), dof)


def predictive(xstar, Y, X, spec: KernelSpec, priors: PriorSpec, **kw) -> PredictiveT:
    """Pointwise Student-t predictive at a single location."""
    xstar = np.asarray(xstar, dtype=float)
    if xstar.ndim != 1:
        raise ValueError("xstar must be a single point")
    return joint_predictive(xstar[None, :], Y, X, spec, priors, **kw)


def pointwise_predictive(Xstar, Y, X, spec, priors, *, latent=False, Kmat=None):
    """Means, scales and dof at many points without forming the joint matrix."""
    Xstar, X = _as_design(Xstar, "Xstar"), _as_design(X)
    Y = np.asarray(Y, dtype=float)
    n = Y.size
    if Kmat is None:
        Kmat = build_corr_matrix(X, spec)
    k = cross_corr_matrix(Xstar, X, spec, nugget=not latent)
    alpha = Kmat.solve(Y)
    V = Kmat.half_solve(k.T)
    kss = 1.0 if latent else 1.0 + spec.eta
    c = (priors.b_sigma + float(Y @ alpha)) / (priors.a_sigma + n - 1.0)
    return k @ alpha, c * (kss - np.sum(V * V, axis=0)), predictive_dof(n, priors)


def sample_paths(pred: PredictiveT, n_draws: int, rng) -> np.ndarray:
    """Draws from the multivariate t via ``mean + Z / sqrt(W / dof)``.

    ``Z ~ N(0, scale)`` and ``W ~ chi^2_dof``. The scale is factorised by
    eigen-decomposition with negative round-off eigenvalues clipped, so
    near-singular scales (duplicate points, training locations) still sample.
    """
    if pred.dof <= 2:
        warnings.warn("dof <= 2: predictive covariance is undefined", stacklevel=2)
    S = np.atleast_2d(pred.scale)
    w, V = np.linalg.eigh(S)
    A = V * np.sqrt(np.clip(w, 0.0, None))
    Z = rng.standard_normal((n_draws, pred.N)) @ A.T
    W = rng.chisquare(pred.dof, size=n_draws) / pred.dof
    return pred.mean + Z / np.sqrt(W)[:, None]


@dataclass(frozen=True)
class MixturePrediction:
    """Per-point summaries of the equal-weight mixture over a chain."""

    mean: np.ndarray
    variance: np.ndarray
    quantile_levels: tuple
    quantiles: Optional[np.ndarray]
    sample_means: np.ndarray
    sample_scales: np.ndarray
    dof: float

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(self.variance)


def mixture_predict(
    Xstar,
    Y,
    X,
    chain: Chain,
    priors: PriorSpec,
    quantiles: Optional[Sequence[float]] = (0.05, 0.95),
    *,
    draws_per_sample: int = 100,
    seed: int = 0,
    latent: bool = False,
) -> MixturePrediction:
    """Average the pointwise predictives of every stored sample.

    Means and variances are exact mixture moments. Quantiles come from
    ``draws_per_sample`` Student-t draws per chain sample; the draws for
    prediction point ``j`` use a sub-stream keyed on ``(seed, j)`` so any
    point's summary does not depend on which other points are requested.
    """
    if len(chain) == 0:
        raise ValueError("empty chain")
    Xstar = _as_design(Xstar, "Xstar")
    T, N = len(chain), Xstar.shape[0]
    M = np.empty((T, N))
    S = np.empty((T, N))
    dof = None
    for t, spec in enumerate(chain.specs()):
        M[t], S[t], dof = pointwise_predictive(Xstar, Y, X, spec, priors, latent=latent)
    np.maximum(S, 0.0, out=S)
    mean = M.mean(axis=0)
    within = S.mean(axis=0) * (dof / (dof - 2.0)) if dof > 2 else np.full(N, np.inf)
    variance = within + M.var(axis=0)
    qs = None
    levels = tuple(quantiles) if quantiles else ()
    if levels:
        qs = np.empty((N, len(levels)))
        sd = np.sqrt(S)
        for j in range(N):
            rng = np.random.default_rng([seed, j])
            Z = rng.standard_t(dof, size=(T, draws_per_sample))
            draws = M[:, j, None] + sd[:, j, None] * Z
            qs[j] = np.quantile(draws, levels)
    return MixturePrediction(mean, variance, levels, qs, M, S, dof)


def mixture_moments(
    Xstar, Y, X, chain: Chain, priors: PriorSpec, *, latent=False, scale_fallback=False
):
    """Mean vector and covariance matrix of the chain's predictive mixture.

    The covariance follows the law of total covariance: the average of the
    per-sample Student-t covariances plus the covariance of the per-sample
    means. With ``dof <= 2`` the t covariance does not exist; this raises
    unless ``scale_fallback`` is set, in which case the scale matrix stands
    in for it.
    """
    Xstar = _as_design(Xstar, "Xstar")
    N = Xstar.shape[0]
    T = len(chain)
    if T == 0:
        raise ValueError("empty chain")
    if scale_fallback and predictive_dof(np.size(Y), priors) <= 2:
        warnings.warn("dof <= 2: using the predictive scale as covariance", stacklevel=2)
        second = lambda pred: pred.scale  # noqa: E731
    else:
        second = PredictiveT.cov
    means = np.empty((T, N))
    c_sum = np.zeros((N, N))
    for t, spec in enumerate(chain.specs()):
        pred = joint_predictive(Xstar, Y, X, spec, priors, latent=latent)
        means[t] = pred.mean
        c_sum += second(pred)
    mean = means.mean(axis=0)
    D = means - mean
    cov = c_sum / T + D.T @ D / T
    return mean, 0.5 * (cov + cov.T)


def posterior_indices(Xstar, chain: Chain):
    """Sampled indices ``x' beta_t`` and their average over the chain.

    Returns ``(mean_index, index_matrix)`` with the matrix of shape ``T x N``.
    """
    Xstar = _as_design(Xstar, "Xstar")
    idx = chain.beta @ Xstar.T
    return idx.mean(axis=0), idx
