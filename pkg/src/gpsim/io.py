"""CSV and JSON artifacts: chains, data sets, predictions, summaries.

Floats are written with 17 significant digits so that identical runs give
byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .mcmc import Chain
from .metrics import SUMMARY_ROWS, ComparisonSummary


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def read_table(path):
    """Header and float matrix from a CSV file."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as err:
        raise ValueError(f"{path}: non-numeric entry ({err})") from None
    if data.size == 0:
        data = np.empty((0, len(header)))
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: rows do not match the header")
    return header, data


# --------------------------------------------------------------------------
# chains
# --------------------------------------------------------------------------


def chain_param_names(family: str, q: int) -> list:
    if family == "sim":
        return [f"beta_{j + 1}" for j in range(q)]
    if family == "isotropic":
        return ["theta"]
    return [f"theta_{j + 1}" for j in range(q)]


def write_chain(path, chain: Chain, flips=None) -> Path:
    """``iter, <params>, eta, log_post`` with an optional ``flips`` column."""
    header = ["iter", *chain_param_names(chain.family, chain.params.shape[1]), "eta", "log_post"]
    if flips is not None:
        header.append("flips")
    rows = []
    for t in range(len(chain)):
        row = [int(chain.iters[t]), *chain.params[t], chain.eta[t], chain.log_post[t]]
        if flips is not None:
            row.append(bool(flips[t]))
        rows.append(row)
    return write_rows(path, header, rows)


def read_chain(path) -> Chain:
    header, data = read_table(path)
    if len(header) < 4 or header[0] != "iter" or "eta" not in header:
        raise ValueError(f"{path}: not a chain file")
    if header[-1] == "flips":
        header, data = header[:-1], data[:, :-1]
    if header[-2:] != ["eta", "log_post"]:
        raise ValueError(f"{path}: chain must end with eta, log_post")
    names = header[1:-2]
    if names == ["theta"]:
        family = "isotropic"
    elif all(n == f"beta_{j + 1}" for j, n in enumerate(names)):
        family = "sim"
    elif all(n == f"theta_{j + 1}" for j, n in enumerate(names)):
        family = "separable"
    else:
        raise ValueError(f"{path}: unrecognised parameter columns {names}")
    if data.shape[0] == 0:
        raise ValueError(f"{path}: chain has no samples")
    return Chain(
        family=family,
        params=data[:, 1:-2].copy(),
        eta=data[:, -2].copy(),
        log_post=data[:, -1].copy(),
        iters=data[:, 0].astype(np.int64),
    )


# --------------------------------------------------------------------------
# data sets and points
# --------------------------------------------------------------------------


def write_dataset(path, X, Y) -> Path:
    X = np.atleast_2d(X)
    header = [f"x{j + 1}" for j in range(X.shape[1])] + ["y"]
    return write_rows(path, header, [[*x, y] for x, y in zip(X, Y)])


def read_dataset(path):
    """``(X, Y)`` from an ``x1..xp,y`` file, taken as already unit-scaled."""
    header, data = read_table(path)
    if len(header) < 2 or header[-1] != "y":
        raise ValueError(f"{path}: header must be x1..xp,y")
    if data.shape[0] < 2:
        raise ValueError(f"{path}: need at least two runs")
    return data[:, :-1].copy(), data[:, -1].copy()


def read_points(path, p=None) -> np.ndarray:
    """Prediction or candidate locations; a trailing ``y`` column is ignored."""
    header, data = read_table(path)
    if header and header[-1] == "y":
        data = data[:, :-1]
    if data.shape[0] == 0:
        raise ValueError(f"{path}: no points")
    if p is not None and data.shape[1] != p:
        raise ValueError(f"{path}: points have {data.shape[1]} columns, expected {p}")
    return data


# --------------------------------------------------------------------------
# comparison results
# --------------------------------------------------------------------------


def write_results(path, summary: ComparisonSummary) -> Path:
    rows = []
    for m in summary.methods:
        for r, d in zip(summary.replicates[m], summary.distances[m]):
            rows.append([m, int(r), d])
    return write_rows(path, ["method", "replicate", "sqrt_mah"], rows)


def write_summary(path, summary: ComparisonSummary) -> Path:
    table = summary.table()
    methods = summary.methods
    rows = [[label, *(table[m][i] for m in methods)] for i, label in enumerate(SUMMARY_ROWS)]
    return write_rows(path, ["stat", *methods], rows)
