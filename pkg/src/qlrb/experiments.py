"""Experiment drivers behind the command-line interface.

Every written file carries the config hash and the seed in '#' header lines.
Apart from the timing table, identical inputs give byte-identical outputs.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import storage
from .config import ExperimentConfig
from .eim import build_bank, eim_build
from .greedy import n_at_tolerance, pod_greedy
from .offline import RbModel
from .online import certify, rb_solve, reduced_gradients, true_error_and_effectivity
from .parallel import pmap, truth_sweep
from .truth import NewtonConvergenceError, TruthTrajectory, truth_solve

log = logging.getLogger(__name__)

EIM_FILE = "eim.npz"
RB_FILE = "rb.npz"
# config keys that define the discrete problem; stored models are tied to them
PROBLEM_KEYS = ("n_elem", "K", "T", "nonlinearity", "nonlinearity_const",
                "source_amplitude", "param_min", "param_max")

STUDY_COLUMNS = ["N", "M", "max_delta", "max_delta_rb", "max_delta_ei", "max_true_error",
                 "mean_effectivity", "min_effectivity", "violations", "failures"]
CURVE_COLUMNS = ["N", "max_delta", "max_delta_rb", "max_delta_ei", "max_true_error"]
CERT_COLUMNS = ["mu", "N", "M", "delta", "delta_rb", "delta_ei", "m_a", "residual_dual_norm",
                "delta_M", "u_norm_L2V", "true_error", "effectivity", "newton_iters"]


def file_meta(cfg: ExperimentConfig, **extra) -> dict:
    return {"config_hash": cfg.digest(), "seed": cfg.seed, **extra}


def _out(cfg: ExperimentConfig) -> Path:
    path = cfg.out_path
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- truth --------------------------------------------------------------------

def run_truth(cfg: ExperimentConfig, mu: float) -> Path:
    problem = cfg.problem()
    problem.check_param(mu)
    traj = truth_solve(problem, mu, cfg.newton())
    path = _out(cfg) / f"truth_mu{mu:.6g}.csv"
    meta = {"n_elem": cfg.n_elem, "K": cfg.K, "dt": repr(cfg.T / cfg.K), "mu": repr(float(mu)),
            **file_meta(cfg)}
    storage.save_trajectory_csv(path, traj.states, meta)
    return path


# -- offline ------------------------------------------------------------------

def run_offline(cfg: ExperimentConfig):
    """Snapshot bank, EIM, POD-Greedy; writes both model archives and the logs."""
    problem = cfg.problem()
    settings = cfg.newton()
    t0 = time.perf_counter()
    bank = build_bank(problem, cfg.eim_train_set(), settings, cfg.workers)
    eim = eim_build(bank, cfg.eps_eim, cfg.M_max)
    log.info("EIM: M=%d after %.1fs", eim.M, time.perf_counter() - t0)
    model = pod_greedy(problem, eim, cfg.greedy_train_set(), cfg.eps_rb, cfg.N_max, settings,
                       cfg.jacobian, cfg.m_a_mode, cfg.workers, cfg.extend_to_N_max)
    log.info("greedy: N=%d after %.1fs", model.N, time.perf_counter() - t0)

    out = _out(cfg)
    meta = {"config": cfg.to_dict(), "config_hash": cfg.digest()}
    storage.save_eim(out / EIM_FILE, eim, meta)
    storage.save_rb(out / RB_FILE, model, meta)
    eim_rows = [{"M": m + 1, "mu": mu, "k": k, "delta": d}
                for m, (mu, k, d) in enumerate(eim.training_log)]
    storage.write_rows(out / "eim_log.csv", eim_rows, ["M", "mu", "k", "delta"], file_meta(cfg))
    greedy_rows = [{"N": n, "mu": mu, "max_delta": eps}
                   for n, mu, eps in model.greedy_log if n != "init"]
    storage.write_rows(out / "greedy_log.csv", greedy_rows, ["N", "mu", "max_delta"],
                       file_meta(cfg, N_at_eps_rb=n_at_tolerance(model.greedy_log, cfg.eps_rb)))
    return eim, model


def load_models(cfg: ExperimentConfig):
    """Load both archives; the discrete problem is rebuilt from the stored config."""
    out = cfg.out_path
    eim_path, rb_path = out / EIM_FILE, out / RB_FILE
    for p in (eim_path, rb_path):
        if not p.exists():
            raise FileNotFoundError(f"missing model file {p}; run 'offline' first")
    stored = ExperimentConfig.from_dict(storage.archive_meta(rb_path)["config"])
    diff = [k for k in PROBLEM_KEYS if getattr(stored, k) != getattr(cfg, k)]
    if diff:
        raise ValueError(f"stored models were built for a different problem ({', '.join(diff)})")
    eim = storage.load_eim(eim_path)
    return eim, storage.load_rb(rb_path, eim, stored.problem())


# -- online sweeps ------------------------------------------------------------

@dataclass
class StudyResult:
    rows: list                                  # one dict per (N, M)
    curves: dict = field(default_factory=dict)  # M -> list of per-N dicts
    certificates: list = field(default_factory=list)


def _certify_one(model: RbModel, mu, truth_states, settings, jacobian, m_a_mode):
    try:
        traj = rb_solve(model, mu, settings, jacobian)
    except NewtonConvergenceError:
        return None
    truth = TruthTrajectory(truth_states, np.zeros(0, dtype=int), mu)
    cert = certify(model, traj, mu, m_a_mode, truth=truth)
    return cert, int(traj.newton_iters.sum())


def evaluate(model: RbModel, mus, truths, cfg: ExperimentConfig):
    """Certificates of ``model`` at every test parameter (None on solver failure)."""
    func = partial(_sweep_item, model, settings=cfg.newton(), jacobian=cfg.jacobian,
                   m_a_mode=cfg.m_a_mode)
    return pmap(func, list(zip(mus, truths)), cfg.workers)


def _sweep_item(model, item, settings, jacobian, m_a_mode):
    mu, states = item
    return _certify_one(model, mu, states, settings, jacobian, m_a_mode)


def summarize(N: int, M: int, results) -> dict:
    ok = [c for c, _ in (r for r in results if r is not None)]
    fails = sum(r is None for r in results)
    if not ok:
        nan = float("nan")
        return {"N": N, "M": M, "max_delta": nan, "max_delta_rb": nan, "max_delta_ei": nan,
                "max_true_error": nan, "mean_effectivity": nan, "min_effectivity": nan,
                "violations": 0, "failures": fails}
    delta = np.array([c.delta_total for c in ok])
    err = np.array([c.true_error for c in ok])
    eta = np.array([c.effectivity for c in ok])
    return {
        "N": N, "M": M,
        "max_delta": float(delta.max()),
        "max_delta_rb": float(max(c.delta_rb for c in ok)),
        "max_delta_ei": float(max(c.delta_ei for c in ok)),
        "max_true_error": float(err.max()),
        "mean_effectivity": float(np.mean(eta[np.isfinite(eta)])) if np.any(np.isfinite(eta))
        else float("inf"),
        "min_effectivity": float(eta.min()),
        "violations": int(np.sum(delta < err - 1e-9)),
        "failures": fails,
    }


def run_study(cfg: ExperimentConfig, model: RbModel, truths=None) -> StudyResult:
    """Convergence curves, tabulated pairs and per-parameter certificates.

    Only loads, truncates and evaluates; nothing is re-trained.
    """
    problem = model.problem
    mus = cfg.test_set()
    if truths is None:
        truths = [t.states for t in truth_sweep(problem, mus, cfg.newton(), cfg.workers)]
    cache: dict = {}

    def results_for(N, M):
        if (N, M) not in cache:
            cache[(N, M)] = evaluate(model.truncate(N, M), mus, truths, cfg)
        return cache[(N, M)]

    rows = []
    for N, M in cfg.study_pairs:
        if N > model.N or M > model.M:
            log.warning("skipping (N, M)=(%d, %d): model has (%d, %d)", N, M, model.N, model.M)
            continue
        rows.append(summarize(N, M, results_for(N, M)))
    curves = {}
    for M in cfg.study_M_values:
        if M > model.M:
            continue
        curves[M] = [{k: v for k, v in summarize(N, M, results_for(N, M)).items()
                      if k in CURVE_COLUMNS} for N in range(1, model.N + 1)]

    certs = []
    for mu, res in zip(mus, results_for(model.N, model.M)):
        if res is None:
            continue
        c, iters = res
        certs.append({"mu": float(mu), "N": model.N, "M": model.M, "delta": c.delta_total,
                      "delta_rb": c.delta_rb, "delta_ei": c.delta_ei, "m_a": c.m_a_used,
                      "residual_dual_norm": c.residual_dual_norm, "delta_M": c.delta_M_value,
                      "u_norm_L2V": c.u_norm_L2V, "true_error": c.true_error,
                      "effectivity": c.effectivity, "newton_iters": iters})
    certs.sort(key=lambda r: r["mu"])
    result = StudyResult(rows, curves, certs)
    write_study(cfg, model, result)
    return result


def reluctivity_profile(model: RbModel, mu: float):
    """nu and its EIM surrogate at the final time along the reduced solution."""
    traj = rb_solve(model, mu)
    grad = reduced_gradients(model, traj)[-1]
    nl = model.problem.nonlinearity
    exact = nl.weights(grad, mu)
    approx = (exact[model.eim.interp_indices] @ model.ops.B_inv.T) @ model.ops.eim_basis
    return model.problem.mesh.elem_midpoints, exact, approx


def write_study(cfg: ExperimentConfig, model: RbModel, result: StudyResult):
    out = _out(cfg)
    meta = file_meta(cfg, test_size=cfg.test_size, m_a_mode=cfg.m_a_mode)
    storage.write_rows(out / "study.csv", result.rows, STUDY_COLUMNS, meta)
    for M, rows in result.curves.items():
        storage.write_rows(out / f"curves_M{M}.csv", rows, CURVE_COLUMNS, meta)
    storage.write_rows(out / "certificates.csv", result.certificates, CERT_COLUMNS, meta)
    x, exact, approx = reluctivity_profile(model, cfg.fig_mu)
    rows = [{"x": a, "nu": b, "nu_M": c} for a, b, c in zip(x, exact, approx)]
    storage.write_rows(out / "reluctivity_profile.csv", rows, ["x", "nu", "nu_M"],
                       file_meta(cfg, mu=cfg.fig_mu, t=cfg.T, N=model.N, M=model.M))


# -- timing -------------------------------------------------------------------

BENCH_COLUMNS = ["N", "M", "repeats", "truth_time", "rb_time", "rb_certified_time",
                 "speedup", "speedup_certified"]


def _clock(func, repeats):
    times = []
    for r in range(repeats):
        t0 = time.perf_counter()
        func(r)
        times.append(time.perf_counter() - t0)
    return float(np.mean(times))


def run_bench(cfg: ExperimentConfig, model: RbModel, N=None, M=None, write=True) -> dict:
    """Average wall times of truth solve, reduced solve, and reduced solve + certificate."""
    model = model.truncate(N, M)
    problem = model.problem
    settings = cfg.newton()
    mus = cfg.test_set()
    n = cfg.bench_repeats

    def mu_at(r):
        return float(mus[r % len(mus)])

    rb_solve(model, mu_at(0), settings, cfg.jacobian)  # warm caches
    t_truth = _clock(lambda r: truth_solve(problem, mu_at(r), settings), n)
    trajs = {}

    def solve(r):
        trajs[r] = rb_solve(model, mu_at(r), settings, cfg.jacobian)

    t_rb = _clock(solve, n)
    # the certificate is timed on its own and added, so run-to-run noise in the
    # solve cannot hide its cost
    t_cert = t_rb + _clock(lambda r: certify(model, trajs[r], mu_at(r), cfg.m_a_mode), n)
    row = {"N": model.N, "M": model.M, "repeats": n, "truth_time": t_truth, "rb_time": t_rb,
           "rb_certified_time": t_cert, "speedup": t_truth / t_rb,
           "speedup_certified": t_truth / t_cert}
    if write:
        storage.write_rows(_out(cfg) / "bench.csv", [row], BENCH_COLUMNS, file_meta(cfg))
    return row


# -- single certificate -------------------------------------------------------

def run_certify(cfg: ExperimentConfig, model: RbModel, mu: float, with_truth: bool = False):
    model.problem.check_param(mu)
    settings = cfg.newton()
    t0 = time.perf_counter()
    traj = rb_solve(model, mu, settings, cfg.jacobian)
    t1 = time.perf_counter()
    c = certify(model, traj, mu, cfg.m_a_mode)
    t2 = time.perf_counter()
    if with_truth:
        truth = truth_solve(model.problem, mu, settings)
        c.true_error, c.effectivity = true_error_and_effectivity(model, mu, truth, traj,
                                                                 c.delta_total)
    row = {"mu": float(mu), "N": model.N, "M": model.M, "delta": c.delta_total,
           "delta_rb": c.delta_rb, "delta_ei": c.delta_ei, "m_a": c.m_a_used,
           "residual_dual_norm": c.residual_dual_norm, "delta_M": c.delta_M_value,
           "u_norm_L2V": c.u_norm_L2V, "true_error": c.true_error,
           "effectivity": c.effectivity, "newton_iters": int(traj.newton_iters.sum()),
           "solve_time": t1 - t0, "certify_time": t2 - t1}
    path = _out(cfg) / f"certificate_mu{mu:.6g}.csv"
    storage.write_rows(path, [row], CERT_COLUMNS + ["solve_time", "certify_time"],
                       file_meta(cfg))
    return c, path
