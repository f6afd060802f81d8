"""Sequential-design criteria computed from a fitted chain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .kernels import _as_design
from .mcmc import Chain
from .posterior import PriorSpec
from .predict import pointwise_predictive

CRITERIA = ("alm", "ei")


@dataclass(frozen=True)
class CandidateScores:
    candidates: np.ndarray
    scores: np.ndarray
    criterion: str
    order: np.ndarray

    @property
    def best(self) -> np.ndarray:
        return self.candidates[0]


def student_t_ei(mu, sigma, dof, f_min):
    """Expected improvement ``E[max(f_min - Y, 0)]`` for ``Y ~ t_dof(mu, sigma)``.

    ``sigma`` is the scale, not the standard deviation. Defined for
    ``dof > 1``; a zero scale gives the plain improvement.
    """
    if dof <= 1:
        raise ValueError("expected improvement needs dof > 1")
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    gap = f_min - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        z = gap / sigma
        ei = gap * stats.t.cdf(z, dof) + sigma * (dof + z * z) / (dof - 1) * stats.t.pdf(z, dof)
    ei = np.where(sigma > 0, ei, np.maximum(gap, 0.0))
    return np.maximum(ei, 0.0)


def _per_sample(Xstar, Y, X, chain, priors):
    T, N = len(chain), Xstar.shape[0]
    M = np.empty((T, N))
    S = np.empty((T, N))
    dof = None
    for t, spec in enumerate(chain.specs()):
        M[t], S[t], dof = pointwise_predictive(Xstar, Y, X, spec, priors)
    return M, np.maximum(S, 0.0), dof


def alm_scores(Xstar, Y, X, chain: Chain, priors: PriorSpec) -> np.ndarray:
    """Mixture predictive variance at each candidate."""
    Xstar = _as_design(Xstar, "Xstar")
    M, S, dof = _per_sample(Xstar, Y, X, chain, priors)
    if dof <= 2:
        raise ValueError("predictive variance undefined for dof <= 2")
    return S.mean(axis=0) * dof / (dof - 2.0) + M.var(axis=0)


def alm_score(xstar, Y, X, chain: Chain, priors: PriorSpec) -> float:
    return float(alm_scores(np.atleast_2d(xstar), Y, X, chain, priors)[0])


def ei_scores(Xstar, f_min, Y, X, chain: Chain, priors: PriorSpec) -> np.ndarray:
    """Chain-averaged Student-t expected improvement below ``f_min``."""
    Xstar = _as_design(Xstar, "Xstar")
    M, S, dof = _per_sample(Xstar, Y, X, chain, priors)
    return student_t_ei(M, np.sqrt(S), dof, f_min).mean(axis=0)


def expected_improvement(xstar, f_min, Y, X, chain: Chain, priors: PriorSpec) -> float:
    return float(ei_scores(np.atleast_2d(xstar), f_min, Y, X, chain, priors)[0])


def rank_candidates(candidates, scores, criterion: str) -> CandidateScores:
    """Sort candidates by descending score; ties keep their input order."""
    candidates = _as_design(candidates, "candidates")
    scores = np.asarray(scores, dtype=float)
    if candidates.shape[0] == 0:
        raise ValueError("no candidates to rank")
    if scores.shape != (candidates.shape[0],):
        raise ValueError("need one score per candidate")
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    order = np.argsort(-scores, kind="stable")
    return CandidateScores(candidates[order], scores[order], criterion, order)


def score_candidates(candidates, criterion, Y, X, chain, priors, f_min=None) -> CandidateScores:
    if criterion == "alm":
        scores = alm_scores(candidates, Y, X, chain, priors)
    elif criterion == "ei":
        f_min = float(np.min(Y)) if f_min is None else f_min
        scores = ei_scores(candidates, f_min, Y, X, chain, priors)
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    return rank_candidates(candidates, scores, criterion)
