"""Synthetic data, designs and the model-comparison protocols.

Two protocols are provided. :func:`monte_carlo_compare` draws a fresh
training and testing set per replicate and scores every method on the
test set. :func:`inverted_cv` trains on one small fold of a fixed data set
and scores on the large remainder, fold by fold.
"""

from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .kernels import SingularMatrixError
from .mcmc import MCMCConfig, adapt_proposal, run_chain
from .metrics import ComparisonSummary, sqrt_mahalanobis
from .posterior import PriorSpec
from .predict import mixture_moments

log = logging.getLogger(__name__)

SINUSOID_BETA = np.array([2.85, 0.70, 0.99, -0.78])
SINUSOID_NOISE_SD = 0.1

BOREHOLE_NAMES = ("r_w", "r", "T_u", "T_l", "H_u", "H_l", "L", "K_w")
BOREHOLE_BOUNDS = np.array(
    [
        [0.05, 0.15],
        [100.0, 5000.0],
        [63070.0, 115600.0],
        [63.1, 116.0],
        [990.0, 1110.0],
        [700.0, 820.0],
        [1120.0, 1680.0],
        [9855.0, 12045.0],
    ]
)
BOREHOLE_DROPPED = ("r", "T_u", "T_l")

METHOD_FAMILIES = {"iso": "isotropic", "sep": "separable", "sim": "sim"}
GENERATORS = ("sinusoid", "borehole", "csv")


# --------------------------------------------------------------------------
# scaling and data containers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class UnitCubeTransform:
    """Affine map from a box ``[lo, hi]`` onto the unit cube."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be matching vectors")
        if not np.all(np.isfinite(lo) & np.isfinite(hi)) or np.any(hi <= lo):
            raise ValueError("each column needs finite bounds with hi > lo")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def forward(self, X_raw) -> np.ndarray:
        return (np.asarray(X_raw, dtype=float) - self.lo) / (self.hi - self.lo)

    def inverse(self, X) -> np.ndarray:
        return self.lo + np.asarray(X, dtype=float) * (self.hi - self.lo)

    def subset(self, cols) -> "UnitCubeTransform":
        return UnitCubeTransform(self.lo[list(cols)], self.hi[list(cols)])


def scale_to_unit_cube(X_raw, bounds=None):
    """Scale columns onto ``[0, 1]``.

    ``bounds`` is a sequence of ``(lo, hi)`` pairs; when omitted the
    column minima and maxima are used. Returns ``(X, transform)``.
    """
    X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
    if bounds is None:
        lo, hi = X_raw.min(axis=0), X_raw.max(axis=0)
    else:
        b = np.asarray(bounds, dtype=float)
        if b.shape != (X_raw.shape[1], 2):
            raise ValueError("need one (lo, hi) pair per column")
        lo, hi = b[:, 0], b[:, 1]
    tr = UnitCubeTransform(lo, hi)
    return tr.forward(X_raw), tr


@dataclass(frozen=True)
class Dataset:
    """Unit-cube design ``X`` with responses ``Y``.

    ``f_true`` holds noise-free responses when the generator knows them.
    """

    X: np.ndarray
    Y: np.ndarray
    transform: Optional[UnitCubeTransform] = None
    f_true: Optional[np.ndarray] = None
    names: tuple = ()

    @property
    def n(self) -> int:
        return self.Y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(
            self,
            X=self.X[idx],
            Y=self.Y[idx],
            f_true=None if self.f_true is None else self.f_true[idx],
        )

    def drop(self, names: Sequence[str]) -> "Dataset":
        if not names:
            return self
        unknown = set(names) - set(self.names)
        if unknown:
            raise ValueError(f"cannot drop unknown columns {sorted(unknown)}")
        keep = [i for i, nm in enumerate(self.names) if nm not in set(names)]
        tr = None if self.transform is None else self.transform.subset(keep)
        return replace(
            self,
            X=self.X[:, keep],
            transform=tr,
            names=tuple(self.names[i] for i in keep),
        )

    @property
    def truth(self) -> np.ndarray:
        return self.Y if self.f_true is None else self.f_true


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------


def sinusoid_link(t):
    """Periodic link ``sin(pi t / 5) + cos(4 pi t / 5) / 5``."""
    t = np.asarray(t, dtype=float)
    out = np.sin(np.pi * t / 5.0) + 0.2 * np.cos(4.0 * np.pi * t / 5.0)
    return float(out) if out.ndim == 0 else out


def gen_sinusoid(n: int, rng, noise_sd: float = SINUSOID_NOISE_SD) -> Dataset:
    """Uniform design on ``[0, 1]^4`` with responses from the sinusoid link."""
    if n < 1:
        raise ValueError("n must be positive")
    X = rng.uniform(size=(n, 4))
    f = sinusoid_link(X @ SINUSOID_BETA)
    Y = f + noise_sd * rng.standard_normal(n) if noise_sd > 0 else f.copy()
    names = tuple(f"x{j + 1}" for j in range(4))
    return Dataset(X, Y, UnitCubeTransform(np.zeros(4), np.ones(4)), f, names)


def borehole(x, strict: bool = True) -> float:
    """Water flow rate through a borehole, inputs in physical units.

    ``x`` is ``(r_w, r, T_u, T_l, H_u, H_l, L, K_w)``. Inputs outside the
    standard box raise (``strict``) or warn.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 8:
        raise ValueError("borehole takes 8 inputs")
    out = (x < BOREHOLE_BOUNDS[:, 0]) | (x > BOREHOLE_BOUNDS[:, 1])
    if np.any(out):
        bad = sorted({BOREHOLE_NAMES[j] for j in np.argwhere(out)[:, -1]})
        msg = f"borehole inputs out of range: {bad}"
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, stacklevel=2)
    rw, r, Tu, Tl, Hu, Hl, L, Kw = np.moveaxis(x, -1, 0)
    if np.any(r <= rw):
        raise ValueError("borehole needs r > r_w")
    lg = np.log(r / rw)
    y = 2 * np.pi * Tu * (Hu - Hl) / (lg * (1 + 2 * L * Tu / (lg * rw**2 * Kw) + Tu / Tl))
    return float(y) if np.ndim(y) == 0 else y


def latin_hypercube(n: int, p: int, rng) -> np.ndarray:
    """Random Latin hypercube: one point per stratum ``[(k-1)/n, k/n)`` per column."""
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    u = rng.uniform(size=(n, p))
    perms = np.argsort(rng.uniform(size=(n, p)), axis=0)
    return (perms + u) / n


def gen_borehole(n: int, rng, drop_columns: Sequence[str] = ()) -> Dataset:
    """Latin hypercube over the borehole box with exact responses."""
    U = latin_hypercube(n, 8, rng)
    tr = UnitCubeTransform(BOREHOLE_BOUNDS[:, 0], BOREHOLE_BOUNDS[:, 1])
    y = borehole(np.clip(tr.inverse(U), BOREHOLE_BOUNDS[:, 0], BOREHOLE_BOUNDS[:, 1]))
    return Dataset(U, y, tr, y.copy(), BOREHOLE_NAMES).drop(drop_columns)


def read_csv_dataset(path, bounds=None, drop_columns: Sequence[str] = ()) -> Dataset:
    """Load ``x1..xp,y`` from a CSV with a header and scale to the unit cube."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[-1] != "y":
        raise ValueError(f"{path}: header must be x1..xp,y")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as err:
        raise ValueError(f"{path}: non-numeric entry ({err})") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite entries")
    X, tr = scale_to_unit_cube(data[:, :-1], bounds)
    return Dataset(X, data[:, -1], tr, None, tuple(header[:-1])).drop(drop_columns)


# --------------------------------------------------------------------------
# fitting and scoring
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for a comparison run.

    ``pilot_iter > 0`` runs a pilot sim chain of that length and reuses its
    adapted proposal covariance. ``max_predict_samples`` evenly thins each
    chain before the predictive mixture is formed. ``center_response``
    subtracts the training mean before fitting and adds it back afterwards.
    """

    generator: str = "sinusoid"
    n_train: int = 45
    n_test: int = 200
    n_reps: int = 20
    methods: tuple = ("iso", "sep", "sim")
    mcmc: MCMCConfig = field(default_factory=MCMCConfig)
    priors: PriorSpec = field(default_factory=PriorSpec)
    seed: int = 0
    drop_columns: tuple = ()
    csv_path: Optional[str] = None
    csv_bounds: Optional[tuple] = None
    pilot_iter: int = 0
    max_predict_samples: Optional[int] = 500
    center_response: bool = True

    def __post_init__(self):
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        bad = set(self.methods) - set(METHOD_FAMILIES)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.generator == "csv" and not self.csv_path:
            raise ValueError("the csv generator needs csv_path")
        if self.n_train < 2 or self.n_test < 1:
            raise ValueError("need n_train >= 2 and n_test >= 1")
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "drop_columns", tuple(self.drop_columns))


def fit_method(method: str, X, Y, priors: PriorSpec, mcmc: MCMCConfig, pilot_iter: int = 0):
    """Run the chain for one comparator; returns a :class:`~gpsim.mcmc.Chain`."""
    family = METHOD_FAMILIES[method]
    cfg = replace(mcmc, family=family)
    if family == "sim" and pilot_iter > 0:
        pilot = replace(
            cfg,
            n_iter=pilot_iter,
            burn_in=min(cfg.burn_in, pilot_iter // 2),
            thin=1,
            seed=cfg.seed + 7919,
        )
        cfg = replace(cfg, Sigma_beta=adapt_proposal(run_chain(Y, X, priors, pilot)))
    return run_chain(Y, X, priors, cfg)


def score_chain(chain, train: Dataset, test_X, test_y, config: ExperimentConfig) -> float:
    """Square-root Mahalanobis distance of ``test_y`` under the chain's mixture.

    Tiny training sets (two runs under the Jeffreys prior) leave the
    Student-t covariance undefined; the scale matrix is used instead.
    """
    offset = float(train.Y.mean()) if config.center_response else 0.0
    thinned = chain.subsample(config.max_predict_samples)
    mean, cov = mixture_moments(
        test_X, train.Y - offset, train.X, thinned, config.priors, scale_fallback=True
    )
    return sqrt_mahalanobis(test_y, mean + offset, cov)


def _dataset_for(config: ExperimentConfig, n: int, rng) -> Dataset:
    if config.generator == "sinusoid":
        return gen_sinusoid(n, rng).drop(config.drop_columns)
    if config.generator == "borehole":
        return gen_borehole(n, rng, config.drop_columns)
    raise ValueError("external data has no generator")


def _method_seed(ss: np.random.SeedSequence, i: int) -> int:
    return int(ss.spawn(i + 1)[i].generate_state(1, dtype=np.uint64)[0] >> 1)


def _fit_and_score(method, k, train, test_X, test_y, config, ss):
    mcmc = replace(config.mcmc, seed=_method_seed(ss, k))
    offset = float(train.Y.mean()) if config.center_response else 0.0
    chain = fit_method(method, train.X, train.Y - offset, config.priors, mcmc, config.pilot_iter)
    return score_chain(chain, train, test_X, test_y, config)


def _replicate(args):
    r, config, ss = args
    data_ss, methods_ss = ss.spawn(2)
    rng = np.random.default_rng(data_ss)
    if config.generator == "csv":
        full = read_csv_dataset(config.csv_path, config.csv_bounds, config.drop_columns)
        if config.n_train + config.n_test > full.n:
            raise ValueError("csv data too small for n_train + n_test")
        perm = rng.permutation(full.n)
        train = full.take(perm[: config.n_train])
        test = full.take(perm[config.n_train : config.n_train + config.n_test])
    else:
        train = _dataset_for(config, config.n_train, rng)
        test = _dataset_for(config, config.n_test, rng)
    out = []
    for k, method in enumerate(config.methods):
        try:
            d = _fit_and_score(method, k, train, test.X, test.truth, config, methods_ss)
        except (SingularMatrixError, ValueError, np.linalg.LinAlgError) as err:
            log.warning("replicate %d, method %s failed: %s", r, method, err)
            d = None
        out.append((method, d))
    return r, out


def _map(fn, jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, jobs))


def _collect(results, methods) -> ComparisonSummary:
    summary = ComparisonSummary()
    for m in methods:
        summary.distances[m], summary.replicates[m], summary.failures[m] = [], [], []
    for r, out in sorted(results, key=lambda t: t[0]):
        for method, d in out:
            if d is None or not np.isfinite(d):
                summary.fail(method, r)
            else:
                summary.add(method, r, d)
    return summary


def monte_carlo_compare(config: ExperimentConfig, threads: int = 1) -> ComparisonSummary:
    """Repeat draw-fit-predict-score ``n_reps`` times for each method.

    Replicate ``r`` derives all its randomness from the master seed and
    ``r`` alone, so results do not depend on ``threads``.
    """
    children = np.random.SeedSequence(config.seed).spawn(config.n_reps)
    jobs = [(r, config, ss) for r, ss in enumerate(children)]
    results = _map(_replicate, jobs, threads)
    return _collect(results, config.methods)


def kfold_partition(n: int, k: int, rng) -> list:
    """Random split of ``range(n)`` into ``k`` nearly equal folds."""
    if k < 2 or n < 2 * k:
        raise ValueError("need k >= 2 and at least two runs per fold")
    return [np.sort(f) for f in np.array_split(rng.permutation(n), k)]


def _fold(args):
    idx, data, fold, config, ss = args
    train = data.take(fold)
    mask = np.ones(data.n, dtype=bool)
    mask[fold] = False
    test = data.take(np.flatnonzero(mask))
    out = []
    for k, method in enumerate(config.methods):
        try:
            d = _fit_and_score(method, k, train, test.X, test.truth, config, ss)
        except (SingularMatrixError, ValueError, np.linalg.LinAlgError) as err:
            log.warning("fold %d, method %s failed: %s", idx, method, err)
            d = None
        out.append((method, d))
    return idx, out


def inverted_cv(
    data: Dataset, k: int, config: ExperimentConfig, n_partitions: int = 1, threads: int = 1
) -> ComparisonSummary:
    """Train on each fold of a random ``k``-partition and score on the rest.

    Repeats with ``n_partitions`` independent partitions; fold ``f`` of
    partition ``j`` is reported as replicate ``j * k + f``.
    """
    if k < 2 or data.n < 2 * k:
        raise ValueError("need k >= 2 and n >= 2k")
    part_ss, fit_ss = np.random.SeedSequence(config.seed).spawn(2)
    fit_seeds = fit_ss.spawn(n_partitions * k)
    jobs = []
    for j, pss in enumerate(part_ss.spawn(n_partitions)):
        folds = kfold_partition(data.n, k, np.random.default_rng(pss))
        for f, fold in enumerate(folds):
            i = j * k + f
            jobs.append((i, data, fold, config, fit_seeds[i]))
    results = _map(_fold, jobs, threads)
    return _collect(results, config.methods)
