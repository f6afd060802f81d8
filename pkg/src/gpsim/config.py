"""Validating loader for JSON run configurations.

A config has up to five sections (``data``, ``prior``, ``mcmc``,
``experiment``, ``output``) plus a top-level ``seed``. Every key is
optional; missing ones take the library defaults.
"""

from __future__ import annotations

import json
from dataclasses import replace
from importlib import resources

import jsonschema
import numpy as np

from .experiments import ExperimentConfig
from .mcmc import MCMCConfig
from .posterior import GammaMixture, MVNPrior, PriorSpec, SymmetricGamma


class ConfigError(ValueError):
    """The configuration file is missing, malformed or invalid."""


def schema() -> dict:
    text = resources.files("gpsim").joinpath("config_schema.json").read_text()
    return json.loads(text)


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {err.message}") from None
    return cfg


def load_config(path=None) -> dict:
    """Read and validate a config file; ``None`` gives the empty config."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from None
    return validate(cfg)


def build_priors(cfg: dict) -> PriorSpec:
    sec = dict(cfg.get("prior", {}))
    kw = {k: float(sec[k]) for k in ("a_sigma", "b_sigma", "a_eta", "b_eta") if k in sec}
    bp = sec.get("beta_prior")
    if bp is not None:
        if bp["type"] == "mvn":
            kw["beta_prior"] = MVNPrior(np.array(bp["mean"]), np.array(bp["cov"]))
        else:
            kw["beta_prior"] = SymmetricGamma(bp.get("shape", 1.5), bp.get("rate", 1.5))
    tp = sec.get("theta_prior")
    if tp is not None:
        w = tp.get("weights")
        kw["theta_prior"] = GammaMixture(
            tuple(tuple(c) for c in tp["components"]), None if w is None else tuple(w)
        )
    try:
        return PriorSpec(**kw)
    except ValueError as err:
        raise ConfigError(f"prior: {err}") from None


def build_mcmc(cfg: dict, seed=None) -> MCMCConfig:
    sec = dict(cfg.get("mcmc", {}))
    sec.pop("pilot_iter", None)
    for key in ("Sigma_beta", "beta_init"):
        if key in sec:
            sec[key] = np.array(sec[key], dtype=float)
    if seed is not None:
        sec["seed"] = int(seed)
    try:
        return MCMCConfig(**sec)
    except ValueError as err:
        raise ConfigError(f"mcmc: {err}") from None


def pilot_iter(cfg: dict) -> int:
    return int(cfg.get("mcmc", {}).get("pilot_iter", 0))


def resolve_seed(cfg: dict, override=None) -> int:
    return int(override) if override is not None else int(cfg.get("seed", 0))


def build_experiment(cfg: dict, seed=None) -> ExperimentConfig:
    sec = dict(cfg.get("experiment", {}))
    for key in ("protocol", "folds", "partitions"):
        sec.pop(key, None)
    if "csv_bounds" in sec:
        sec["csv_bounds"] = tuple(tuple(b) for b in sec["csv_bounds"])
    for key in ("methods", "drop_columns"):
        if key in sec:
            sec[key] = tuple(sec[key])
    mcmc = build_mcmc(cfg)
    try:
        exp = ExperimentConfig(
            mcmc=mcmc,
            priors=build_priors(cfg),
            pilot_iter=pilot_iter(cfg),
            seed=resolve_seed(cfg, seed),
            **sec,
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"experiment: {err}") from None
    return replace(exp, mcmc=replace(mcmc, seed=exp.seed))
