"""Metropolis-within-Gibbs sampling of kernel hyperparameters.

Each sweep updates the nugget with ``beta`` (or ``theta``) fixed, then the
kernel parameters with the nugget fixed. The scale ``sigma^2`` never
appears: it is integrated out of the posterior analytically.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .kernels import ETA_FLOOR, KernelSpec
from .posterior import PriorSpec, safe_log_posterior

log = logging.getLogger(__name__)

DEFAULT_PROPOSAL_VAR = 0.2
ADAPT_INFLATION = 1.2
ORTHANT_MC_DRAWS = 100_000
MAX_SIGN_FLIP_DIM = 12


# --------------------------------------------------------------------------
# proposals
# --------------------------------------------------------------------------


def propose_eta(eta: float, rng) -> tuple[float, float]:
    """Uniform sliding window on ``[3 eta / 4, 4 eta / 3]``.

    Returns the proposal and ``log q(eta | eta') - log q(eta' | eta)``. The
    window width is proportional to its centre, so the ratio is
    ``log(eta / eta')``.
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    new = float(rng.uniform(0.75 * eta, 4.0 * eta / 3.0))
    return new, float(np.log(eta / new))


def propose_positive(theta, rng) -> tuple[np.ndarray, float]:
    """Independent sliding windows on every component of a positive vector."""
    theta = np.asarray(theta, dtype=float)
    new = rng.uniform(0.75 * theta, 4.0 * theta / 3.0)
    return new, float(np.sum(np.log(theta / new)))


def _sign_patterns(p: int) -> np.ndarray:
    return np.array(list(itertools.product((1.0, -1.0), repeat=p)))


def _pattern_index(signs) -> int:
    bits = (np.asarray(signs) < 0).astype(int)
    return int(bits @ (1 << np.arange(bits.size)[::-1]))


def _substream_seed(Sigma: np.ndarray) -> int:
    digest = hashlib.sha256(np.ascontiguousarray(Sigma, dtype=float).tobytes())
    return int.from_bytes(digest.digest()[:8], "little")


def orthant_table_mc(Sigma, n_draws: int = ORTHANT_MC_DRAWS, seed=None) -> np.ndarray:
    """Monte Carlo estimate of every orthant probability of ``N_p(0, Sigma)``.

    Uses ``seed`` or, by default, a sub-stream keyed on ``Sigma``. Mirrored
    patterns have equal probability, so their counts are averaged.
    """
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    p = Sigma.shape[0]
    rng = np.random.default_rng(_substream_seed(Sigma) if seed is None else seed)
    L = np.linalg.cholesky(Sigma)
    Z = rng.standard_normal((n_draws, p)) @ L.T
    idx = (Z < 0).astype(np.int64) @ (1 << np.arange(p)[::-1])
    counts = np.bincount(idx, minlength=2**p).astype(float)
    counts = 0.5 * (counts + counts[::-1])
    return counts / n_draws


@lru_cache(maxsize=64)
def _orthant_table_cached(key: bytes, p: int, n_draws: int) -> np.ndarray:
    Sigma = np.frombuffer(key, dtype=float).reshape(p, p)
    if p == 1:
        return np.array([0.5, 0.5])
    if p == 2:
        rho = Sigma[0, 1] / np.sqrt(Sigma[0, 0] * Sigma[1, 1])
        same = 0.25 + np.arcsin(rho) / (2 * np.pi)
        diff = 0.25 - np.arcsin(rho) / (2 * np.pi)
        # pattern order: (+,+), (+,-), (-,+), (-,-)
        return np.array([same, diff, diff, same])
    return orthant_table_mc(Sigma, n_draws)


def orthant_table(Sigma, n_draws: int = ORTHANT_MC_DRAWS) -> np.ndarray:
    """Probabilities of every sign pattern of ``N_p(0, Sigma)``.

    Entry ``k`` belongs to the pattern whose binary expansion (most
    significant bit first) marks negative components. Exact for ``p <= 2``;
    plain Monte Carlo from a sub-stream keyed on ``Sigma`` otherwise, so
    repeated calls agree.
    """
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    p = Sigma.shape[0]
    if Sigma.shape != (p, p) or p < 1:
        raise ValueError("Sigma must be a square matrix")
    if not np.allclose(Sigma, Sigma.T):
        raise ValueError("Sigma must be symmetric")
    try:
        np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise ValueError("Sigma must be positive definite")
    return _orthant_table_cached(Sigma.tobytes(), p, int(n_draws))


def orthant_probability(Sigma, signs, n_draws: int = ORTHANT_MC_DRAWS) -> float:
    """``P(sign(Z) = signs)`` for ``Z ~ N_p(0, Sigma)``."""
    signs = np.atleast_1d(np.asarray(signs, dtype=float))
    table = orthant_table(Sigma, n_draws)
    if signs.size != int(np.log2(table.size)) or not np.all(np.abs(signs) == 1):
        raise ValueError(f"invalid sign pattern {signs.tolist()}")
    return float(table[_pattern_index(signs)])


def _compound_log_density(target, centre, patterns, log_w, L) -> float:
    """``log sum_s P(s) N(s * target; centre, Sigma)`` up to a constant."""
    diffs = patterns * target - centre
    z = linalg.solve_triangular(L, diffs.T, lower=True, check_finite=False)
    return float(logsumexp(log_w - 0.5 * np.sum(z * z, axis=0)))


def propose_beta(
    beta, Sigma_beta, sign_flips: bool, rng, *, orthants=None
) -> tuple[np.ndarray, float]:
    """Random-walk MVN proposal for the index vector.

    With ``sign_flips`` the proposal is ``s * b`` where ``b ~ N(beta, Sigma)``
    and ``s`` is a sign pattern drawn with the orthant probabilities of
    ``N(0, Sigma)``. Several ``(s, b)`` pairs reach the same point, so the
    proposal density is the orthant-weighted mixture over all ``2^p``
    patterns; the returned log ratio uses that mixture in both directions.
    """
    beta = np.asarray(beta, dtype=float)
    Sigma_beta = np.atleast_2d(np.asarray(Sigma_beta, dtype=float))
    p = beta.size
    L = np.linalg.cholesky(Sigma_beta)
    b = beta + L @ rng.standard_normal(p)
    if not sign_flips:
        return b, 0.0
    if p > MAX_SIGN_FLIP_DIM:
        raise ValueError(f"sign-flip proposals support p <= {MAX_SIGN_FLIP_DIM}")
    table = orthant_table(Sigma_beta) if orthants is None else orthants
    patterns = _sign_patterns(p)
    k = int(rng.choice(table.size, p=table))
    new = patterns[k] * b
    keep = table > 0
    log_w, pats = np.log(table[keep]), patterns[keep]
    fwd = _compound_log_density(new, beta, pats, log_w, L)
    rev = _compound_log_density(beta, new, pats, log_w, L)
    return new, rev - fwd


# --------------------------------------------------------------------------
# sampler
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MCMCConfig:
    """Settings for one chain.

    ``family`` picks the kernel whose parameters are sampled. ``beta_init``
    defaults to ``1/2`` in every component and ``Sigma_beta`` to
    ``diag(0.2)``; ``theta_init`` seeds the separable or isotropic
    length-scales.
    """

    n_iter: int = 5000
    burn_in: int = 1000
    thin: int = 2
    Sigma_beta: Optional[np.ndarray] = None
    sign_flips: bool = False
    seed: int = 0
    beta_init: Optional[np.ndarray] = None
    eta_init: float = 0.1
    theta_init: float = 0.5
    family: str = "sim"
    update_eta: bool = True
    update_params: bool = True

    def __post_init__(self):
        if self.n_iter < 1 or self.thin < 1:
            raise ValueError("n_iter and thin must be positive")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if not self.eta_init >= ETA_FLOOR:
            raise ValueError("eta_init must be at least the nugget floor")
        if self.Sigma_beta is not None:
            S = np.atleast_2d(np.asarray(self.Sigma_beta, dtype=float))
            if not np.allclose(S, S.T):
                raise ValueError("Sigma_beta must be symmetric")
            try:
                np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                raise ValueError("Sigma_beta must be positive definite")
            object.__setattr__(self, "Sigma_beta", S)

    def proposal_cov(self, p: int) -> np.ndarray:
        if self.Sigma_beta is None:
            return DEFAULT_PROPOSAL_VAR * np.eye(p)
        if self.Sigma_beta.shape != (p, p):
            raise ValueError(f"Sigma_beta must be {p} x {p}")
        return self.Sigma_beta

    def initial_spec(self, p: int) -> KernelSpec:
        if self.family == "sim":
            b = np.full(p, 0.5) if self.beta_init is None else self.beta_init
            return KernelSpec("sim", b, self.eta_init)
        if self.family == "separable":
            return KernelSpec("separable", np.full(p, self.theta_init), self.eta_init)
        return KernelSpec("isotropic", [self.theta_init], self.eta_init)


@dataclass(frozen=True)
class MHState:
    spec: KernelSpec
    log_post: float
    n_accept_eta: int = 0
    n_accept_params: int = 0
    n_singular: int = 0


def metropolis_accept(log_ratio: float, rng) -> bool:
    """Accept with probability ``min(1, exp(log_ratio))``.

    A uniform is consumed on every call so the random stream does not depend
    on the outcome.
    """
    u = rng.random()
    if np.isnan(log_ratio):
        return False
    return bool(log_ratio >= 0 or np.log(u) < log_ratio)


@dataclass
class _StepContext:
    Y: np.ndarray
    X: np.ndarray
    priors: PriorSpec
    config: MCMCConfig
    Sigma: Optional[np.ndarray] = None
    orthants: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.config.family == "sim":
            self.Sigma = self.config.proposal_cov(self.X.shape[1])
            if self.config.sign_flips:
                self.orthants = orthant_table(self.Sigma)


def _try(state: MHState, new_spec: KernelSpec, log_q: float, ctx, rng, which):
    try:
        lp = safe_log_posterior(ctx.Y, ctx.X, new_spec, ctx.priors)
    except ValueError:
        lp = -np.inf
    singular = not np.isfinite(lp)
    if singular:
        log.debug("rejecting proposal %s with zero posterior density", new_spec)
    accepted = metropolis_accept(lp - state.log_post + log_q, rng)
    counts = {"n_singular": state.n_singular + singular}
    if accepted:
        key = "n_accept_eta" if which == "eta" else "n_accept_params"
        counts[key] = getattr(state, key) + 1
        return replace(state, spec=new_spec, log_post=lp, **counts)
    return replace(state, **counts)


def mh_step(state: MHState, Y, X, priors: PriorSpec, config: MCMCConfig, rng, _ctx=None) -> MHState:
    """One Metropolis-within-Gibbs sweep: nugget first, then kernel parameters.

    Proposals with zero posterior density (singular correlation matrices,
    parameters outside the prior support) are rejected, never fatal.
    """
    ctx = _ctx or _StepContext(np.asarray(Y, float), np.asarray(X, float), priors, config)
    if config.update_eta:
        eta_new, log_q = propose_eta(state.spec.eta, rng)
        if eta_new < ETA_FLOOR:
            rng.random()
            state = replace(state, n_singular=state.n_singular + 1)
        else:
            state = _try(state, state.spec.with_params(eta=eta_new), log_q, ctx, rng, "eta")
    if config.update_params:
        spec = state.spec
        if spec.family == "sim":
            new, log_q = propose_beta(
                spec.params, ctx.Sigma, config.sign_flips, rng, orthants=ctx.orthants
            )
        else:
            new, log_q = propose_positive(spec.params, rng)
        state = _try(state, spec.with_params(params=new), log_q, ctx, rng, "params")
    return state


@dataclass(frozen=True)
class Chain:
    """Stored posterior samples of one run.

    ``params`` holds ``beta`` rows for the sim family and length-scale rows
    otherwise; ``iters`` the 1-based iteration each row was taken at.
    """

    family: str
    params: np.ndarray
    eta: np.ndarray
    log_post: np.ndarray
    iters: np.ndarray
    accept_eta: float = float("nan")
    accept_beta: float = float("nan")
    n_singular: int = 0

    def __len__(self) -> int:
        return self.eta.size

    @property
    def beta(self) -> np.ndarray:
        if self.family != "sim":
            raise AttributeError(f"{self.family} chains carry no index vectors")
        return self.params

    @property
    def p(self) -> int:
        return self.params.shape[1]

    def specs(self):
        for row, eta in zip(self.params, self.eta):
            yield KernelSpec(self.family, row, float(eta))

    def subsample(self, max_samples: Optional[int]) -> "Chain":
        """Evenly spaced subset of at most ``max_samples`` rows."""
        T = len(self)
        if max_samples is None or T <= max_samples:
            return self
        idx = np.unique(np.linspace(0, T - 1, max_samples).round().astype(int))
        return replace(
            self,
            params=self.params[idx],
            eta=self.eta[idx],
            log_post=self.log_post[idx],
            iters=self.iters[idx],
        )

    def with_params(self, params) -> "Chain":
        return replace(self, params=np.asarray(params, dtype=float))


def run_chain(Y, X, priors: PriorSpec, config: MCMCConfig) -> Chain:
    """Run one chain; deterministic given ``config.seed``."""
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != Y.size:
        raise ValueError("X must be n x p with one row per response")
    p = X.shape[1]
    rng = np.random.default_rng(config.seed)
    ctx = _StepContext(Y, X, priors, config)
    spec = config.initial_spec(p)
    lp = safe_log_posterior(Y, X, spec, priors)
    if not np.isfinite(lp):
        raise ValueError(f"initial state {spec} has zero posterior density")
    state = MHState(spec, lp)

    n_keep = (config.n_iter - config.burn_in) // config.thin
    q = spec.params.size
    params = np.empty((n_keep, q))
    eta = np.empty(n_keep)
    lps = np.empty(n_keep)
    iters = np.empty(n_keep, dtype=np.int64)
    k = 0
    for it in range(1, config.n_iter + 1):
        state = mh_step(state, Y, X, priors, config, rng, _ctx=ctx)
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            params[k] = state.spec.params
            eta[k] = state.spec.eta
            lps[k] = state.log_post
            iters[k] = it
            k += 1
    n = config.n_iter
    return Chain(
        family=spec.family,
        params=params,
        eta=eta,
        log_post=lps,
        iters=iters,
        accept_eta=state.n_accept_eta / n if config.update_eta else float("nan"),
        accept_beta=state.n_accept_params / n if config.update_params else float("nan"),
        n_singular=state.n_singular,
    )


# --------------------------------------------------------------------------
# adaptation and diagnostics
# --------------------------------------------------------------------------


def adapt_proposal(chain: Chain, reference=None, inflation: float = ADAPT_INFLATION) -> np.ndarray:
    """Proposal covariance for a follow-up run, estimated from a pilot chain.

    Signs are reconciled with the mean-index heuristic first, so the two
    label modes do not inflate the estimate. Falls back to ``diag(0.2)``
    with a warning when the sample covariance is degenerate.
    """
    from .postprocess import reconcile_by_index

    B = chain.beta
    T, p = B.shape
    if T < p + 1:
        raise ValueError(f"need at least {p + 1} samples, chain has {T}")
    if reference is None:
        reference = np.random.default_rng(0).uniform(size=(200, p))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        B = reconcile_by_index(chain, reference).chain.beta
    S = inflation * np.atleast_2d(np.cov(B, rowvar=False))
    w, V = np.linalg.eigh(S)
    if not np.all(np.isfinite(w)) or w.max() <= 1e-12:
        warnings.warn("degenerate pilot covariance; using diag(0.2)", stacklevel=2)
        return DEFAULT_PROPOSAL_VAR * np.eye(p)
    w = np.maximum(w, 1e-6 * w.max())
    S = (V * w) @ V.T
    return 0.5 * (S + S.T)


def _autocorr(x: np.ndarray) -> np.ndarray:
    T = x.size
    m = 1 << int(np.ceil(np.log2(2 * T)))
    f = np.fft.rfft(x - x.mean(), n=m)
    ac = np.fft.irfft(f * np.conj(f), n=m)[:T]
    return ac / ac[0]


def effective_sample_size(series) -> float:
    """Effective sample size ``T / (1 + 2 sum_k rho_k)``.

    The autocorrelation sum is truncated with Geyer's initial positive
    sequence: lags are paired and summed until a pair turns nonpositive.
    The result is clamped to ``[1, T]``.
    """
    x = np.asarray(series, dtype=float).ravel()
    T = x.size
    if T < 10:
        raise ValueError("effective sample size needs at least 10 values")
    if np.ptp(x) == 0:
        return 1.0
    rho = _autocorr(x)
    tau = -1.0
    for m in range(T // 2):
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(np.clip(T / tau, 1.0, T)) if tau > 0 else float(T)
