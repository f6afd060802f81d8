"""Hyperpriors and the sigma^2-marginalised log posterior of a kernel."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import lgamma, log, pi
from typing import Optional

import numpy as np
from scipy import stats

from .kernels import CorrMatrix, KernelSpec, SingularMatrixError, build_corr_matrix


def gamma_logpdf(x, shape, rate):
    """Gamma log density in the shape/rate parameterisation."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = shape * log(rate) - lgamma(shape) + (shape - 1.0) * np.log(x) - rate * x
    return np.where(x > 0, out, -np.inf)


@dataclass(frozen=True)
class SymmetricGamma:
    """Independent ``|beta_j| ~ Gamma(shape, rate)`` with a random sign."""

    shape: float = 1.5
    rate: float = 1.5

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("symmetric gamma prior needs positive constants")

    def logpdf(self, beta) -> float:
        a = np.abs(np.asarray(beta, dtype=float))
        lp = gamma_logpdf(a, self.shape, self.rate)
        return float(np.sum(lp) - a.size * log(2.0))


@dataclass(frozen=True)
class MVNPrior:
    """Multivariate normal prior on the index vector."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("MVN prior covariance does not match its mean")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("MVN prior covariance must be positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def logpdf(self, beta) -> float:
        return float(stats.multivariate_normal.logpdf(beta, self.mean, self.cov))


@dataclass(frozen=True)
class GammaMixture:
    """Mixture of gamma densities used for positive length-scales.

    Components are ``(shape, rate)`` pairs with equal weights unless
    ``weights`` is given. The default puts half its mass near 0.05 and half
    near 1, which covers both wiggly and flat fits on the unit cube.
    """

    components: tuple = ((1.0, 20.0), (10.0, 10.0))
    weights: Optional[tuple] = None

    def __post_init__(self):
        comps = tuple(tuple(float(v) for v in c) for c in self.components)
        if not comps or any(len(c) != 2 or min(c) <= 0 for c in comps):
            raise ValueError("gamma mixture components must be positive pairs")
        w = self.weights
        w = tuple([1.0 / len(comps)] * len(comps)) if w is None else tuple(w)
        if len(w) != len(comps) or min(w) < 0 or abs(sum(w) - 1) > 1e-12:
            raise ValueError("gamma mixture weights must sum to one")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", w)

    def logpdf(self, theta) -> float:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if np.any(theta <= 0):
            return -np.inf
        terms = [
            log(w) + gamma_logpdf(theta, a, b)
            for w, (a, b) in zip(self.weights, self.components)
            if w > 0
        ]
        return float(np.sum(np.logaddexp.reduce(terms, axis=0)))


@dataclass(frozen=True)
class PriorSpec:
    """Hyperprior constants.

    ``a_sigma = b_sigma = 0`` selects the Jeffreys scale prior. Gamma
    densities use the shape/rate parameterisation.
    """

    a_sigma: float = 0.0
    b_sigma: float = 0.0
    a_eta: float = 1.5
    b_eta: float = 30.0
    beta_prior: object = field(default_factory=SymmetricGamma)
    theta_prior: GammaMixture = field(default_factory=GammaMixture)

    def __post_init__(self):
        if self.a_sigma < 0 or self.b_sigma < 0:
            raise ValueError("a_sigma and b_sigma must be nonnegative")
        if (self.a_sigma == 0) != (self.b_sigma == 0):
            raise ValueError(
                "a_sigma and b_sigma must both be zero (Jeffreys) or both positive"
            )
        if not (self.a_eta > 0 and self.b_eta > 0):
            raise ValueError("a_eta and b_eta must be positive")
        if not isinstance(self.beta_prior, (SymmetricGamma, MVNPrior)):
            raise TypeError("beta_prior must be SymmetricGamma or MVNPrior")

    @property
    def jeffreys(self) -> bool:
        return self.a_sigma == 0 and self.b_sigma == 0


@dataclass(frozen=True)
class LogPosteriorValue:
    log_prior: float
    log_marginal_lik: float

    @property
    def total(self) -> float:
        return self.log_prior + self.log_marginal_lik


def log_marginal_likelihood(Y, Kmat: CorrMatrix, a_sigma=0.0, b_sigma=0.0) -> float:
    """Log density of ``Y`` with the scale ``sigma^2`` integrated out.

    Uses ``Gamma[0] = 1`` and ``0^0 = 1`` so that ``a_sigma = b_sigma = 0``
    gives the Jeffreys-prior marginal.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.size
    if Kmat.n != n:
        raise ValueError(f"Y has {n} entries but K is {Kmat.n} x {Kmat.n}")
    if a_sigma == 0 and b_sigma == 0 and n <= 1:
        raise ValueError("Jeffreys scale prior needs n > 1")
    z = Kmat.half_solve(Y)
    quad = float(z @ z)
    a, b = float(a_sigma), float(b_sigma)
    out = lgamma((a + n) / 2.0) - 0.5 * Kmat.logdet - 0.5 * n * log(2 * pi)
    if a > 0:
        out += 0.5 * a * log(b / 2.0) - lgamma(a / 2.0)
    out -= 0.5 * (a + n) * log((b + quad) / 2.0)
    return out


def log_prior(spec: KernelSpec, priors: PriorSpec) -> float:
    """Log prior density of the kernel parameters and nugget."""
    lp = float(gamma_logpdf(spec.eta, priors.a_eta, priors.b_eta))
    if spec.family == "sim":
        bp = priors.beta_prior
        if isinstance(bp, MVNPrior) and bp.mean.size != spec.params.size:
            raise ValueError("MVN prior dimension does not match the index vector")
        lp += priors.beta_prior.logpdf(spec.params)
    else:
        lp += priors.theta_prior.logpdf(spec.params)
    return lp


def log_posterior(Y, X, spec: KernelSpec, priors: PriorSpec) -> LogPosteriorValue:
    """Unnormalised log posterior of ``spec``, decomposed into its parts."""
    lp = log_prior(spec, priors)
    Kmat = build_corr_matrix(X, spec)
    ll = log_marginal_likelihood(Y, Kmat, priors.a_sigma, priors.b_sigma)
    return LogPosteriorValue(lp, ll)


def safe_log_posterior(Y, X, spec: KernelSpec, priors: PriorSpec) -> float:
    """Total log posterior, ``-inf`` when the prior vanishes or K is singular."""
    lp = log_prior(spec, priors)
    if not np.isfinite(lp):
        return -np.inf
    try:
        Kmat = build_corr_matrix(X, spec)
    except SingularMatrixError:
        return -np.inf
    return lp + log_marginal_likelihood(Y, Kmat, priors.a_sigma, priors.b_sigma)
