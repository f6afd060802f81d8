"""Resolving the sign indeterminacy of sampled index vectors.

``beta`` and ``-beta`` give the same likelihood, so a chain may hold
samples from both modes. The three reconcilers below each decide which
samples to negate; :func:`point_estimate` sidesteps the issue entirely.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .mcmc import Chain

CLUSTER_TOL = 1e-3
CORR_TOL = 0.05
METHODS = ("index", "anchor", "covariance")


class ReconciliationError(ValueError):
    """A heuristic could not settle the signs of a chain."""


@dataclass(frozen=True)
class ReconciledChain:
    chain: Chain
    flips: np.ndarray
    method: str
    ambiguous: np.ndarray = None

    @property
    def n_flips(self) -> int:
        return int(self.flips.sum())


def apply_flips(chain: Chain, flips) -> Chain:
    flips = np.asarray(flips, dtype=bool)
    if flips.shape != (len(chain),):
        raise ValueError("need one flip flag per sample")
    s = np.where(flips, -1.0, 1.0)
    return chain.with_params(chain.beta * s[:, None])


def _finish(chain, flips, method, ambiguous=None):
    flips = np.asarray(flips, dtype=bool)
    return ReconciledChain(apply_flips(chain, flips), flips, method, ambiguous)


def mean_indices(chain: Chain, Xtilde) -> np.ndarray:
    """Average index over the reference rows, one value per sample."""
    Xtilde = np.atleast_2d(np.asarray(Xtilde, dtype=float))
    if Xtilde.shape[0] < 1 or Xtilde.shape[1] != chain.p:
        raise ValueError("reference points must be m x p with m >= 1")
    return chain.beta @ Xtilde.mean(axis=0)


def reconcile_by_index(chain: Chain, Xtilde, cluster_tol: float = CLUSTER_TOL) -> ReconciledChain:
    """Negate samples whose mean reference index has the minority sign.

    Samples with ``|mean index| < cluster_tol`` cannot be assigned to a
    cluster; they are left alone and reported with a warning. Ties in the
    vote go to the positive sign.
    """
    if len(chain) == 0:
        raise ValueError("empty chain")
    m = mean_indices(chain, Xtilde)
    ambiguous = np.abs(m) < cluster_tol
    if ambiguous.any():
        warnings.warn(
            f"{int(ambiguous.sum())} samples have mean index within "
            f"{cluster_tol:g} of zero and were left unflipped",
            stacklevel=2,
        )
    n_pos = int(np.sum((m > 0) & ~ambiguous))
    n_neg = int(np.sum((m < 0) & ~ambiguous))
    majority = 1.0 if n_pos >= n_neg else -1.0
    flips = ~ambiguous & (np.sign(m) == -majority)
    return _finish(chain, flips, "index", ambiguous)


def anchor_component(chain: Chain) -> int:
    """Component whose magnitude sits furthest from zero relative to its spread."""
    A = np.abs(chain.beta)
    mu = A.mean(axis=0)
    sd = A.std(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sd > 0, mu / sd, np.where(mu > 0, np.inf, 0.0))
    if np.all(ratio < 1):
        raise ReconciliationError(
            "every component straddles zero; use the index heuristic"
        )
    return int(np.argmax(ratio))


def reconcile_by_anchor(chain: Chain, component=None) -> ReconciledChain:
    """Make one well-separated component positive in every sample."""
    if len(chain) == 0:
        raise ValueError("empty chain")
    j = anchor_component(chain) if component is None else int(component)
    flips = chain.beta[:, j] < 0
    return _finish(chain, flips, "anchor")


def sign_groups(cov, corr_tol: float = CORR_TOL):
    """Split components into two groups by the sign of their covariances.

    The anchor row is the component with the largest variance. Entries
    whose correlation magnitude is below ``corr_tol`` carry no sign
    information and join the anchor's group. Raises
    :class:`ReconciliationError` if the informative entries are not
    consistent with any two-group split.

    Returns ``(group_a, group_b)`` as sorted lists of 0-based indices,
    the anchor's group first.
    """
    C = np.atleast_2d(np.asarray(cov, dtype=float))
    d = np.sqrt(np.diag(C))
    if np.any(d <= 0):
        raise ReconciliationError("a component has zero variance")
    R = C / np.outer(d, d)
    a = int(np.argmax(np.diag(C)))
    s = np.where(R[a] <= -corr_tol, -1.0, 1.0)
    informative = np.abs(R) >= corr_tol
    clash = informative & (np.sign(R) != np.outer(s, s))
    if clash.any():
        i, j = np.argwhere(clash)[0]
        raise ReconciliationError(
            f"covariance signs of components {i + 1} and {j + 1} contradict "
            "the two-group split; use the index heuristic"
        )
    ga = sorted(np.flatnonzero(s > 0).tolist())
    gb = sorted(np.flatnonzero(s < 0).tolist())
    return ga, gb


def reconcile_by_covariance(chain: Chain, corr_tol: float = CORR_TOL) -> ReconciledChain:
    """Use the sign structure of the sample moments to pick an anchor.

    The moment matrix is taken about zero, ``mean_t beta beta'``. On a
    chain that visits both modes it matches the covariance, and unlike the
    covariance it is unchanged by negating samples, which keeps the method
    idempotent. The anchor is the member of the larger sign group with the
    largest second moment, i.e. the one furthest from zero.
    """
    B = chain.beta
    T, p = B.shape
    if T < p + 1:
        raise ValueError(f"need at least {p + 1} samples, chain has {T}")
    ga, gb = sign_groups(B.T @ B / T, corr_tol)
    group = ga if len(ga) >= len(gb) else gb
    second = np.mean(B[:, group] ** 2, axis=0)
    j = group[int(np.argmax(second))]
    flips = B[:, j] < 0
    return _finish(chain, flips, "covariance")


def reconcile(chain: Chain, method: str, Xtilde=None) -> ReconciledChain:
    if method == "index":
        if Xtilde is None:
            raise ValueError("the index heuristic needs reference points")
        return reconcile_by_index(chain, Xtilde)
    if method == "anchor":
        return reconcile_by_anchor(chain)
    if method == "covariance":
        return reconcile_by_covariance(chain)
    raise ValueError(f"unknown reconciliation method {method!r}")


def normalized_samples(chain: Chain) -> np.ndarray:
    B = chain.beta
    norms = np.linalg.norm(B, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("chain contains an all-zero index vector")
    return B / norms[:, None]


def point_estimate(chain: Chain) -> np.ndarray:
    """Unit vector minimising the summed squared sines to all samples.

    This is the leading eigenvector of ``sum_t u_t u_t'`` over the
    normalised samples ``u_t``. Its sign is chosen so that most samples
    point the same way; on a tie the largest-magnitude entry is positive.
    """
    if len(chain) == 0:
        raise ValueError("empty chain")
    U = normalized_samples(chain)
    w, V = np.linalg.eigh(U.T @ U)
    if w.size > 1 and w[-1] - w[-2] <= 1e-10 * max(w[-1], 1.0):
        raise ValueError("leading eigenvalue is tied; direction undefined")
    v = V[:, -1]
    votes = np.sign(U @ v)
    balance = votes.sum()
    if balance < 0 or (balance == 0 and v[np.argmax(np.abs(v))] < 0):
        v = -v
    return v


def implied_theta(chain: Chain) -> np.ndarray:
    """Length-scale implied by each sample's norm, ``||beta||^-2``."""
    norms = np.linalg.norm(chain.beta, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("chain contains an all-zero index vector")
    return norms**-2.0


def angle_between(u, v, up_to_sign: bool = True) -> float:
    u = np.asarray(u, dtype=float) / np.linalg.norm(u)
    v = np.asarray(v, dtype=float) / np.linalg.norm(v)
    c = float(u @ v)
    if up_to_sign:
        c = abs(c)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def straddle_fractions(chain: Chain) -> np.ndarray:
    """Fraction of samples below and above zero for each component.

    Returns an array of shape ``(p, 2)``.
    """
    B = chain.params
    return np.column_stack([np.mean(B < 0, axis=0), np.mean(B > 0, axis=0)])
