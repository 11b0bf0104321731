"""Greedy empirical interpolation of element-wise nonlinearity fields."""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular


@dataclass
class SnapshotBank:
    """Nonlinearity fields indexed by (parameter, time step).

    ``fields[p, j]`` is the element field at parameter ``mus[p]`` and time
    level ``steps[j]``.
    """

    mus: np.ndarray
    steps: np.ndarray
    fields: np.ndarray  # (P, len(steps), n_elem)

    def __post_init__(self):
        self.mus = np.asarray(self.mus, dtype=float)
        self.steps = np.asarray(self.steps, dtype=int)
        self.fields = np.asarray(self.fields, dtype=float)
        if self.fields.shape[:2] != (self.mus.size, self.steps.size):
            raise ValueError("fields must be shaped (n_mu, n_steps, n_elem)")

    @property
    def n_elem(self) -> int:
        return self.fields.shape[2]

    @classmethod
    def from_trajectories(cls, mesh, nonlinearity, trajectories, steps=None):
        """Bank of nu(|u'|; mu) over the given truth trajectories (default k = 1..K)."""
        from .fem import elem_gradient

        K = trajectories[0].states.shape[0] - 1
        steps = np.arange(1, K + 1) if steps is None else np.asarray(steps)
        fields = np.empty((len(trajectories), steps.size, mesh.n_elem))
        for p, tr in enumerate(trajectories):
            grads = elem_gradient(mesh, tr.states[steps].T).T
            fields[p] = nonlinearity.weights(grads, tr.mu)
        return cls(np.array([tr.mu for tr in trajectories]), steps, fields)


@dataclass
class EimModel:
    basis: np.ndarray          # (M, n_elem) functions q_m
    interp_indices: np.ndarray  # (M,) element indices
    B: np.ndarray              # (M, M), B[i, j] = q_j(x_i)
    training_log: list = field(default_factory=list)  # (mu_m, k_m, delta_m)
    degenerate: bool = False

    @property
    def M(self) -> int:
        return self.basis.shape[0]

    @property
    def n_elem(self) -> int:
        return self.basis.shape[1]

    def truncate(self, M: int) -> "EimModel":
        if not 1 <= M <= self.M:
            raise ValueError(f"cannot truncate EIM of size {self.M} to {M}")
        return EimModel(self.basis[:M].copy(), self.interp_indices[:M].copy(),
                        self.B[:M, :M].copy(), list(self.training_log[:M]), self.degenerate)

    @classmethod
    def identity(cls, n_elem: int) -> "EimModel":
        """Element indicators at every element: interpolation is exact."""
        eye = np.eye(n_elem)
        return cls(eye.copy(), np.arange(n_elem), eye.copy(), [])

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.basis, self.interp_indices.astype(np.int64), self.B):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


# residuals below this fraction of the bank's sup norm count as round-off
_ZERO_REL = 1e-13


def eim_coefficients(model: EimModel, point_values) -> np.ndarray:
    """Solve B phi = values by forward substitution (columns for 2-D input)."""
    return solve_triangular(model.B, np.asarray(point_values, dtype=float),
                            lower=True, unit_diagonal=True, check_finite=False)


def eim_interpolate(model: EimModel, source_field) -> np.ndarray:
    source_field = np.asarray(source_field, dtype=float)
    phi = eim_coefficients(model, source_field[..., model.interp_indices].T)
    return (model.basis.T @ phi).T


def delta_M(model: EimModel, nonlinearity, gradients, mu) -> float:
    """Largest interpolation error of nu along a sequence of gradient fields."""
    grads = np.atleast_2d(np.asarray(gradients, dtype=float))
    exact = nonlinearity.weights(grads, mu)
    return float(np.max(np.abs(eim_interpolate(model, exact) - exact)))


def eim_build(bank: SnapshotBank, eps_eim: float = 0.0, M_max: int = 8) -> EimModel:
    """Greedy EIM over all (mu, k) fields of the bank.

    The sup-norm over the domain is the max over elements.  Ties go to the
    lowest index, so a run with a smaller ``M_max`` is a prefix of a larger one.
    """
    if bank.fields.size == 0:
        raise ValueError("empty snapshot bank")
    if eps_eim < 0 or M_max < 1:
        raise ValueError("need eps_eim >= 0 and M_max >= 1")
    P, nk, n_elem = bank.fields.shape
    F = bank.fields.reshape(P * nk, n_elem)

    def label(flat):
        p, j = divmod(int(flat), nk)
        return float(bank.mus[p]), int(bank.steps[j])

    residual = F.copy()
    basis, indices, log = [], [], []
    degenerate = False
    scale = float(np.max(np.abs(F)))
    while len(basis) < M_max:
        sup = np.max(np.abs(residual), axis=1)
        best = int(np.argmax(sup))
        delta = float(sup[best])
        if delta <= _ZERO_REL * scale:
            if not basis:
                # nothing to interpolate; keep a harmless unit function
                basis.append(np.eye(n_elem)[0])
                indices.append(0)
                log.append((*label(best), 0.0))
            degenerate = True
            warnings.warn("EIM bank exhausted: remaining residual is zero", RuntimeWarning)
            break
        if basis and delta <= eps_eim:
            break
        r = residual[best].copy()
        r[indices] = 0.0  # exact zeros at earlier points keep B triangular
        x = int(np.argmax(np.abs(r)))
        q = r / r[x]
        q[x] = 1.0
        basis.append(q)
        indices.append(x)
        log.append((*label(best), delta))
        # update residuals of every field with the new basis function
        Q = np.array(basis)
        idx = np.array(indices)
        B = Q[:, idx].T
        phi = solve_triangular(B, F[:, idx].T, lower=True, unit_diagonal=True,
                               check_finite=False)
        residual = F - phi.T @ Q
    Q = np.array(basis)
    idx = np.array(indices, dtype=int)
    B = np.tril(Q[:, idx].T)
    np.fill_diagonal(B, 1.0)
    return EimModel(Q, idx, B, log, degenerate)


def build_bank(problem, mus: Sequence[float], settings=None, workers: int = 1) -> SnapshotBank:
    """Truth-solve every parameter and collect the nonlinearity fields."""
    from .parallel import truth_sweep

    trajectories = truth_sweep(problem, mus, settings, workers)
    return SnapshotBank.from_trajectories(problem.mesh, problem.nonlinearity, trajectories)
