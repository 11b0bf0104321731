"""POD-Greedy construction of the reduced space."""
from __future__ import annotations

import logging
import warnings
from functools import partial

import numpy as np

from .eim import EimModel
from .offline import DegenerateModeError, RbModel, assemble_model, orthonormalize, pod1
from .online import estimate
from .parallel import pmap
from .truth import NewtonSettings, TruthProblem, truth_solve

log = logging.getLogger(__name__)

# projection errors this far below the trajectory norm are round-off, not a new mode
_RESOLVED_REL = 1e-10


def _v_norms(rows, v_gram):
    return np.sqrt(np.abs(np.einsum("ki,ik->k", rows, v_gram @ rows.T)))


def _initial_mode(problem: TruthProblem, train_set, settings, truth_cache):
    u0 = problem.initial_state
    norm = np.sqrt(u0 @ (problem.v_gram @ u0))
    if norm > 0:
        return u0 / norm, ("init", None, float(norm))
    # zero initial data: seed with the dominant mode at the middle training parameter
    mu = float(train_set[len(train_set) // 2])
    truth = truth_cache.setdefault(mu, truth_solve(problem, mu, settings))
    return pod1(truth.states[1:], problem.v_gram), ("init", mu, None)


def pod_greedy(problem: TruthProblem, eim: EimModel, train_set, eps_rb: float = 1e-5,
               N_max: int = 5, settings=NewtonSettings(), jacobian: str = "exact",
               m_a_mode: str = "analytic", workers: int = 1,
               extend_to_N_max: bool = False) -> RbModel:
    """Estimator-driven greedy over ``train_set`` with one POD mode per step.

    Each iteration evaluates the certified bound on the current space, records
    ``(n, mu_n, eps_n)`` in ``greedy_log``, stops if ``eps_n <= eps_rb`` or
    ``n == N_max``, and otherwise enriches with the dominant POD mode of the
    V-projection error of the truth trajectory at the worst parameter.  With
    ``extend_to_N_max`` the tolerance is only logged and enrichment continues,
    which yields a nested model for convergence studies beyond the tolerance.
    """
    train_set = np.asarray(train_set, dtype=float)
    if train_set.size == 0:
        raise ValueError("empty training set")
    if N_max < 1:
        raise ValueError("N_max must be >= 1")
    v_gram = problem.v_gram
    truth_cache: dict = {}
    xi, entry = _initial_mode(problem, train_set, settings, truth_cache)
    Xi = xi[:, None]
    greedy_log = [entry]
    skipped: set = set()
    while True:
        model = assemble_model(Xi, problem, eim, greedy_log)
        n = model.N
        est = np.array(pmap(partial(estimate, model, settings=settings, jacobian=jacobian,
                                    m_a_mode=m_a_mode), train_set, workers))
        est[list(skipped)] = -np.inf
        best = int(np.argmax(est))
        eps_n, mu_n = float(est[best]), float(train_set[best])
        greedy_log.append((n, mu_n, eps_n))
        log.info("greedy N=%d: max estimate %.3e at mu=%.4f", n, eps_n, mu_n)
        if n >= N_max or (eps_n <= eps_rb and not extend_to_N_max):
            break
        xi = None
        while est[best] > -np.inf:
            mu_n = float(train_set[best])
            if mu_n not in truth_cache:
                truth_cache[mu_n] = truth_solve(problem, mu_n, settings)
            U = truth_cache[mu_n].states[1:]
            errors = U - (U @ (v_gram @ Xi)) @ Xi.T
            try:
                if _v_norms(errors, v_gram).max() <= _RESOLVED_REL * _v_norms(U, v_gram).max():
                    raise DegenerateModeError("projection error at round-off level")
                xi = orthonormalize(Xi, pod1(errors, v_gram), v_gram)
                break
            except DegenerateModeError:
                warnings.warn(f"degenerate POD mode at mu={mu_n}; skipping", RuntimeWarning)
                skipped.add(best)
                est[best] = -np.inf
                best = int(np.argmax(est))
        if xi is None:
            break
        Xi = np.column_stack([Xi, xi])
    model.greedy_log = greedy_log
    return model


def n_at_tolerance(greedy_log, eps_rb: float):
    """Smallest basis size whose logged estimate is within ``eps_rb`` (None if never)."""
    for n, _, eps in greedy_log:
        if n != "init" and eps <= eps_rb:
            return n
    return None
