"""File formats: trajectory CSV, versioned EIM/RB model archives, certificate CSV.

Model archives are ``.npz`` files holding raw float64 arrays, so a reload
reproduces every online result bit for bit.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .eim import EimModel
from .offline import RbModel, ReducedOperators, RieszData

FORMAT_VERSION = 2
FLOAT_FMT = "%.17e"


class FormatError(ValueError):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.10e" % float(x)


# -- trajectories -------------------------------------------------------------

def save_trajectory_csv(path, states, meta: dict):
    """Rows are time levels, columns are degrees of freedom."""
    header = "\n".join(f"{k}={v}" for k, v in meta.items())
    np.savetxt(path, np.asarray(states), delimiter=",", fmt=FLOAT_FMT, header=header,
               comments="# ")


def load_trajectory_csv(path):
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
    states = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return states, meta


# -- EIM ----------------------------------------------------------------------

def save_eim(path, eim: EimModel, meta: dict | None = None):
    log = np.array(eim.training_log, dtype=float).reshape(-1, 3)
    np.savez(path, kind="eim", format_version=FORMAT_VERSION, M=eim.M, n_elem=eim.n_elem,
             interp_indices=eim.interp_indices.astype(np.int64), B=eim.B, basis=eim.basis,
             training_log=log, degenerate=eim.degenerate, meta=json.dumps(meta or {}))


def _open(path, kind):
    data = np.load(path, allow_pickle=False)
    if str(data["kind"]) != kind:
        raise FormatError(f"{path} is not a {kind} archive")
    if int(data["format_version"]) != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {int(data['format_version'])}")
    return data


def load_eim(path) -> EimModel:
    data = _open(path, "eim")
    log = [(float(mu), int(k), float(d)) for mu, k, d in data["training_log"]]
    eim = EimModel(data["basis"], data["interp_indices"].astype(int), data["B"], log,
                   bool(data["degenerate"]))
    if eim.M != int(data["M"]) or eim.n_elem != int(data["n_elem"]):
        raise FormatError("inconsistent EIM archive")
    return eim


def archive_meta(path) -> dict:
    with np.load(path, allow_pickle=False) as data:
        return json.loads(str(data["meta"]))


# -- RB model -----------------------------------------------------------------

_OPS_FIELDS = ("M_N", "K_N", "A_m", "B_inv", "g_N", "interp_grad", "b0", "u0_N",
               "grad_basis", "eim_basis")


def save_rb(path, model: RbModel, meta: dict | None = None):
    arrays = {f"ops_{name}": getattr(model.ops, name) for name in _OPS_FIELDS}
    if model.riesz is not None:
        r = model.riesz
        arrays.update(riesz_reps=r.reps, riesz_G_R=r.G_R, riesz_R=r.R,
                      riesz_dims=np.array([r.Q_g, r.N, r.M], dtype=np.int64))
    np.savez(path, kind="rb", format_version=FORMAT_VERSION, Xi=model.Xi,
             eim_digest=model.eim_digest, greedy_log=json.dumps(model.greedy_log),
             meta=json.dumps(meta or {}), **arrays)


def load_rb(path, eim: EimModel, problem) -> RbModel:
    """Reload an RB archive; ``eim`` must be the model it was built with."""
    data = _open(path, "rb")
    if str(data["eim_digest"]) != eim.digest():
        raise FormatError("EIM model does not match the one used to build this RB model")
    ops = ReducedOperators(**{name: data[f"ops_{name}"] for name in _OPS_FIELDS})
    riesz = None
    if "riesz_G_R" in data:
        Q_g, N, M = (int(x) for x in data["riesz_dims"])
        riesz = RieszData(data["riesz_reps"], data["riesz_G_R"], data["riesz_R"],
                          Q_g, N, M)
    log = [tuple(entry) for entry in json.loads(str(data["greedy_log"]))]
    return RbModel(data["Xi"], ops, riesz, eim, problem, log)


# -- CSV tables ---------------------------------------------------------------

def write_rows(path, rows, columns, meta: dict | None = None):
    """CSV with '#'-prefixed metadata lines; numbers in scientific notation."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={v}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) if not isinstance(row[c], str) else row[c]
                             for c in columns])


def read_rows(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return [dict(r) for r in reader]
