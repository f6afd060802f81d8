"""Command-line interface: ``gpsim {fit,predict,benchmark,reconcile,design}``.

Every command writes its tables into ``--out`` along with a
``manifest.json`` listing the files, the resolved config, the seed and
timings. Apart from the manifest, outputs depend only on the inputs and
the seed.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .config import (
    ConfigError,
    build_experiment,
    build_mcmc,
    build_priors,
    load_config,
    pilot_iter,
    resolve_seed,
)
from .design import CRITERIA, score_candidates
from .experiments import (
    METHOD_FAMILIES,
    fit_method,
    gen_borehole,
    gen_sinusoid,
    inverted_cv,
    monte_carlo_compare,
    read_csv_dataset,
)
from .kernels import SingularMatrixError
from .postprocess import (
    METHODS as RECONCILE_METHODS,
    ReconciliationError,
    implied_theta,
    normalized_samples,
    point_estimate,
    reconcile,
    straddle_fractions,
)
from .predict import mixture_predict, posterior_indices

log = logging.getLogger("gpsim")

EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _load(fn, *args):
    """Run an input-reading step; malformed files become usage errors."""
    try:
        return fn(*args)
    except (OSError, ValueError) as err:
        raise UsageError(str(err)) from None


def _offset(cfg: dict, Y) -> float:
    return float(np.mean(Y)) if cfg.get("data", {}).get("center_response", True) else 0.0


def _quantiles(cfg: dict):
    return tuple(cfg.get("output", {}).get("quantiles", (0.05, 0.95)))


def _training_data(cfg: dict, seed: int, data_path=None):
    sec = cfg.get("data", {})
    path = data_path or sec.get("path")
    drop = tuple(sec.get("drop_columns", ()))
    if path is not None:
        bounds = sec.get("bounds")
        return _load(read_csv_dataset, path, None if bounds is None else np.array(bounds), drop)
    gen = sec.get("generator", "sinusoid")
    if gen == "csv":
        raise UsageError("data.generator is csv but no data.path or --data given")
    n = int(sec.get("n", 45))
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    if gen == "borehole":
        return _load(gen_borehole, n, rng, drop)
    return _load(lambda: gen_sinusoid(n, rng).drop(drop))


class Run:
    """Collects outputs and timings for the manifest."""

    def __init__(self, command: str, out: Path, cfg: dict, seed: int):
        self.command = command
        self.out = Path(out)
        self.cfg = cfg
        self.seed = seed
        self.outputs = []
        self.timings = {}
        self._t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(name)
        return p

    def tick(self, label: str, since: float) -> None:
        self.timings[label] = round(time.perf_counter() - since, 6)

    def finish(self, extra=None) -> Path:
        self.timings["total"] = round(time.perf_counter() - self._t0, 6)
        manifest = {
            "command": self.command,
            "version": __version__,
            "seed": self.seed,
            "config": self.cfg,
            "outputs": sorted(self.outputs) + ["manifest.json"],
            "seconds": self.timings,
        }
        if extra:
            manifest.update(extra)
        return io.write_json(self.out / "manifest.json", manifest)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_fit(args, cfg: dict) -> int:
    seed = resolve_seed(cfg, args.seed)
    priors = build_priors(cfg)
    mcmc = build_mcmc(cfg, seed)
    data = _training_data(cfg, seed, args.data)
    offset = _offset(cfg, data.Y)
    run = Run("fit", args.out, cfg, seed)

    t0 = time.perf_counter()
    method = {v: k for k, v in METHOD_FAMILIES.items()}[mcmc.family]
    chain = fit_method(method, data.X, data.Y - offset, priors, mcmc, pilot_iter(cfg))
    run.tick("mcmc", t0)

    io.write_dataset(run.path("data.csv"), data.X, data.Y)
    io.write_chain(run.path("chain.csv"), chain)
    io.write_json(
        run.path("acceptance.json"),
        {
            "family": chain.family,
            "n_samples": len(chain),
            "accept_eta": chain.accept_eta,
            "accept_params": chain.accept_beta,
            "n_singular": chain.n_singular,
        },
    )
    frac = straddle_fractions(chain)
    names = io.chain_param_names(chain.family, chain.p)
    io.write_rows(
        run.path("straddle.csv"),
        ["param", "frac_below_zero", "frac_above_zero"],
        [[nm, lo, hi] for nm, (lo, hi) in zip(names, frac)],
    )
    run.finish({"n": data.n, "p": data.p, "response_offset": offset})
    log.info("fit: %d samples written to %s", len(chain), run.out)
    return 0


def _chain_and_data(args):
    chain = _load(io.read_chain, args.chain)
    X, Y = _load(io.read_dataset, args.data)
    if chain.family != "isotropic" and chain.p != X.shape[1]:
        raise UsageError(
            f"chain has {chain.p} parameters per sample but data have {X.shape[1]} inputs"
        )
    return chain, X, Y


def cmd_predict(args, cfg: dict) -> int:
    seed = resolve_seed(cfg, args.seed)
    chain, X, Y = _chain_and_data(args)
    pts = _load(io.read_points, args.points, X.shape[1])
    out_cfg = cfg.get("output", {})
    priors = build_priors(cfg)
    offset = _offset(cfg, Y)
    run = Run("predict", args.out, cfg, seed)

    t0 = time.perf_counter()
    levels = _quantiles(cfg)
    pred = mixture_predict(
        pts,
        Y - offset,
        X,
        chain.subsample(args.max_samples),
        priors,
        levels,
        draws_per_sample=int(out_cfg.get("draws_per_sample", 100)),
        seed=seed,
        latent=bool(out_cfg.get("latent", False)),
    )
    run.tick("predict", t0)

    p = pts.shape[1]
    header = [f"x_{j + 1}" for j in range(p)] + ["mean", "sd", "q_lo", "q_hi"]
    cols = [pts, pred.mean + offset, pred.sd, pred.quantiles[:, 0] + offset, pred.quantiles[:, 1] + offset]
    order = np.arange(pts.shape[0])
    if chain.family == "sim":
        mean_index, _ = posterior_indices(pts, chain)
        header.append("mean_index")
        cols.append(mean_index)
        if args.sort_by_index or out_cfg.get("sort_by_index", False):
            order = np.argsort(mean_index, kind="stable")
    table = np.column_stack(cols)[order]
    io.write_rows(run.path("predictions.csv"), header, table)
    run.finish({"quantile_levels": list(levels), "dof": pred.dof})
    return 0


def cmd_benchmark(args, cfg: dict) -> int:
    exp = build_experiment(cfg, args.seed)
    sec = cfg.get("experiment", {})
    protocol = sec.get("protocol", "monte_carlo")
    run = Run("benchmark", args.out, cfg, exp.seed)

    t0 = time.perf_counter()
    if protocol == "inverted_cv":
        if exp.csv_path:
            data = _load(read_csv_dataset, exp.csv_path, exp.csv_bounds, exp.drop_columns)
        else:
            rng = np.random.default_rng(np.random.SeedSequence(exp.seed).spawn(1)[0])
            if exp.generator == "borehole":
                data = gen_borehole(exp.n_train, rng, exp.drop_columns)
            else:
                data = gen_sinusoid(exp.n_train, rng).drop(exp.drop_columns)
        summary = inverted_cv(
            data,
            int(sec.get("folds", 10)),
            exp,
            n_partitions=int(sec.get("partitions", 1)),
            threads=args.threads,
        )
    else:
        summary = monte_carlo_compare(exp, threads=args.threads)
    run.tick("benchmark", t0)

    io.write_results(run.path("results.csv"), summary)
    io.write_summary(run.path("summary.csv"), summary)
    failures = {m: f for m, f in summary.failures.items() if f}
    run.finish({"protocol": protocol, "failures": failures})
    for m in summary.methods:
        log.info("%s: median sqrt(Mah) %.4g over %d runs", m, summary.median(m), len(summary.distances[m]))
    return 0


def cmd_reconcile(args, cfg: dict) -> int:
    seed = resolve_seed(cfg, args.seed)
    chain = _load(io.read_chain, args.chain)
    if chain.family != "sim":
        raise UsageError("sign reconciliation applies to sim chains only")
    Xtilde = None
    if args.method == "index":
        if not args.reference:
            raise UsageError("--method index needs --reference POINTS.csv")
        Xtilde = _load(io.read_points, args.reference, chain.p)
    run = Run("reconcile", args.out, cfg, seed)

    t0 = time.perf_counter()
    rec = reconcile(chain, args.method, Xtilde)
    U = normalized_samples(rec.chain)
    theta = implied_theta(rec.chain)
    v = point_estimate(chain)
    run.tick("reconcile", t0)

    io.write_chain(run.path("reconciled_chain.csv"), rec.chain, rec.flips)
    io.write_rows(run.path("flips.csv"), ["iter", "flipped"], zip(chain.iters, rec.flips))
    p = chain.p
    io.write_rows(
        run.path("normalized_beta.csv"),
        ["iter"] + [f"u_{j + 1}" for j in range(p)],
        np.column_stack([chain.iters, U]).tolist(),
    )
    q = np.quantile(U, [0.0, 0.25, 0.5, 0.75, 1.0], axis=0)
    io.write_rows(
        run.path("beta_boxplot.csv"),
        ["component", "min", "q1", "median", "q3", "max"],
        [[f"beta_{j + 1}", *q[:, j]] for j in range(p)],
    )
    io.write_rows(run.path("implied_theta.csv"), ["iter", "theta"], zip(chain.iters, theta))
    io.write_rows(
        run.path("point_estimate.csv"),
        ["component", "value"],
        [[f"beta_{j + 1}", v[j]] for j in range(p)],
    )
    run.finish({"method": args.method, "n_flips": rec.n_flips})
    return 0


def cmd_design(args, cfg: dict) -> int:
    seed = resolve_seed(cfg, args.seed)
    chain, X, Y = _chain_and_data(args)
    cand = _load(io.read_points, args.candidates, X.shape[1])
    priors = build_priors(cfg)
    offset = _offset(cfg, Y)
    run = Run("design", args.out, cfg, seed)

    t0 = time.perf_counter()
    f_min = None if args.f_min is None else args.f_min - offset
    res = score_candidates(cand, args.criterion, Y - offset, X, chain.subsample(args.max_samples), priors, f_min)
    run.tick("design", t0)

    header = [f"x_{j + 1}" for j in range(cand.shape[1])] + ["score", "rank"]
    rows = [[*x, s, int(r + 1)] for r, (x, s) in enumerate(zip(res.candidates, res.scores))]
    io.write_rows(run.path("design.csv"), header, rows)
    run.finish({"criterion": args.criterion})
    return 0


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON config file")
    shared.add_argument("--seed", type=int, help="override the config seed")
    shared.add_argument("--out", default="out", help="output directory (default: out)")
    shared.add_argument("--threads", type=int, default=1, help="worker processes")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gpsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gpsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[shared], help="run MCMC on one data set")
    p.add_argument("--data", help="x1..xp,y CSV (overrides the config's data section)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[shared], help="mixture prediction from a chain")
    p.add_argument("--chain", required=True)
    p.add_argument("--data", required=True, help="training data written by fit")
    p.add_argument("--points", required=True, help="prediction locations CSV")
    p.add_argument("--sort-by-index", action="store_true")
    p.add_argument("--max-samples", type=int, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", parents=[shared], help="compare iso/sep/sim")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("reconcile", parents=[shared], help="fix index-vector signs")
    p.add_argument("--chain", required=True)
    p.add_argument("--method", choices=RECONCILE_METHODS, default="index")
    p.add_argument("--reference", help="reference points CSV for --method index")
    p.set_defaults(func=cmd_reconcile)

    p = sub.add_parser("design", parents=[shared], help="score candidate runs")
    p.add_argument("--chain", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--criterion", choices=CRITERIA, default="alm")
    p.add_argument("--f-min", type=float, default=None)
    p.add_argument("--max-samples", type=int, default=None)
    p.set_defaults(func=cmd_design)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (ConfigError, UsageError) as err:
        print(f"gpsim: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ReconciliationError, SingularMatrixError, np.linalg.LinAlgError, ArithmeticError) as err:
        print(f"gpsim: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as err:
        print(f"gpsim: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
