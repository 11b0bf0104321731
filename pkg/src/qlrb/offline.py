"""Reduced-basis offline stage: POD mode extraction, Galerkin projections of
all parameter-independent operators, and Riesz representers of the residual
terms."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .eim import EimModel
from .fem import gradient_matrix, weighted_stiffness
from .truth import TruthProblem


class DegenerateModeError(ValueError):
    """All error snapshots vanish: the parameter is already resolved."""


def v_inner(v_gram, a, b):
    return a.T @ (v_gram @ b)


def pod1(error_snapshots, v_gram) -> np.ndarray:
    """Dominant POD mode of the snapshots in the V inner product (method of snapshots).

    ``error_snapshots`` holds one coefficient vector per row, like
    ``TruthTrajectory.states``.  The mode has unit V norm.
    """
    E = np.atleast_2d(np.asarray(error_snapshots, dtype=float)).T
    C = v_inner(v_gram, E, E)
    C = 0.5 * (C + C.T)
    if not np.any(np.abs(np.diag(C)) > 0.0):
        raise DegenerateModeError("all error snapshots are zero")
    lam, vec = np.linalg.eigh(C)
    mode = E @ vec[:, -1]
    norm = np.sqrt(mode @ (v_gram @ mode))
    if not norm > 0.0:
        raise DegenerateModeError("dominant POD mode vanishes")
    mode = mode / norm
    # fix the sign so runs are reproducible
    j = int(np.argmax(np.abs(mode)))
    return mode if mode[j] > 0 else -mode


def orthonormalize(basis, vec, v_gram, tol: float = 1e-12) -> np.ndarray:
    """Modified Gram-Schmidt of ``vec`` against the V-orthonormal columns of ``basis``."""
    v = np.array(vec, dtype=float)
    norm0 = np.sqrt(v @ (v_gram @ v))
    for _ in range(2):
        for i in range(basis.shape[1]):
            xi = basis[:, i]
            v -= (xi @ (v_gram @ v)) * xi
    norm = np.sqrt(v @ (v_gram @ v))
    if not norm > tol * max(norm0, 1e-300):
        raise DegenerateModeError("new mode lies in the current space")
    return v / norm


@dataclass
class ReducedOperators:
    M_N: np.ndarray         # (N, N) <xi_i, xi_j>_H
    K_N: np.ndarray         # (N, N) <xi_i, xi_j>_V
    A_m: np.ndarray         # (M, N, N) int q_m xi_j' xi_i'
    B_inv: np.ndarray       # (M, M) inverse EIM interpolation matrix
    g_N: np.ndarray         # (Q_g, N) reduced source terms
    interp_grad: np.ndarray  # (M, N) xi_j' on the interpolation elements
    b0: np.ndarray          # (N,) Xi^T M_h u_delta^0
    u0_N: np.ndarray        # (N,) reduced initial condition
    grad_basis: np.ndarray  # (n_elem, N); used only by the delta_M pass
    eim_basis: np.ndarray   # (M, n_elem); used only by the delta_M pass

    @property
    def N(self) -> int:
        return self.M_N.shape[0]

    @property
    def M(self) -> int:
        return self.A_m.shape[0]

    def truncate(self, N: int, M: int) -> "ReducedOperators":
        M_N = self.M_N[:N, :N].copy()
        b0 = self.b0[:N].copy()
        # leading block of a triangular inverse is the inverse of the leading block
        return ReducedOperators(
            M_N, self.K_N[:N, :N].copy(), self.A_m[:M, :N, :N].copy(),
            self.B_inv[:M, :M].copy(), self.g_N[:, :N].copy(),
            self.interp_grad[:M, :N].copy(), b0, np.linalg.solve(M_N, b0),
            self.grad_basis[:, :N].copy(), self.eim_basis[:M].copy())


def _unit_lower_inverse(B):
    from scipy.linalg import solve_triangular

    return solve_triangular(B, np.eye(B.shape[0]), lower=True, unit_diagonal=True)


def project_reduced_operators(Xi, problem: TruthProblem, eim: EimModel) -> ReducedOperators:
    mesh = problem.mesh
    Xi = np.asarray(Xi, dtype=float).reshape(mesh.n_dof, -1)
    G = gradient_matrix(mesh) @ Xi
    A_m = np.einsum("me,ei,ej->mij", eim.basis, G, G) * mesh.h
    M_N = Xi.T @ (problem.mass @ Xi)
    b0 = Xi.T @ (problem.mass @ problem.initial_state)
    return ReducedOperators(
        M_N=M_N,
        K_N=Xi.T @ (problem.v_gram @ Xi),
        A_m=A_m,
        B_inv=_unit_lower_inverse(eim.B),
        g_N=problem.source_vectors @ Xi,
        interp_grad=G[eim.interp_indices].copy(),
        b0=b0,
        u0_N=np.linalg.solve(M_N, b0),
        grad_basis=G,
        eim_basis=eim.basis.copy(),
    )


@dataclass
class RieszData:
    """Riesz representers of the affine residual terms and their V-Gram matrix.

    Term order: source terms (Q_g), time-derivative terms (N), then EIM form
    terms ordered m-major (m, j).  ``R`` is a square root of the Gram matrix,
    ``G_R = R^T R``, taken from a QR factorization of the V-weighted
    representers; evaluating ``||R theta||`` avoids the cancellation that
    limits ``theta^T G_R theta`` to about sqrt(machine epsilon) relative
    accuracy once the residual is small.
    """

    reps: np.ndarray  # (n_dof, Q_R)
    G_R: np.ndarray   # (Q_R, Q_R)
    R: np.ndarray     # (min(n_dof, Q_R), Q_R)
    Q_g: int
    N: int
    M: int

    @property
    def Q_R(self) -> int:
        return self.G_R.shape[0]

    @property
    def labels(self) -> list:
        return ([f"source[{q}]" for q in range(self.Q_g)]
                + [f"dt[{j}]" for j in range(self.N)]
                + [f"eim[{m},{j}]" for m in range(self.M) for j in range(self.N)])

    def term_indices(self, N: int, M: int) -> np.ndarray:
        src = np.arange(self.Q_g)
        dt = self.Q_g + np.arange(N)
        mm, jj = np.meshgrid(np.arange(M), np.arange(N), indexing="ij")
        ei = self.Q_g + self.N + (mm * self.N + jj).ravel()
        return np.concatenate([src, dt, ei])

    def truncate(self, N: int, M: int) -> "RieszData":
        idx = self.term_indices(N, M)
        # column selection keeps G_R[idx, idx] = R[:, idx]^T R[:, idx]
        return RieszData(self.reps[:, idx].copy(), self.G_R[np.ix_(idx, idx)].copy(),
                         self.R[:, idx].copy(), self.Q_g, N, M)


def build_riesz(Xi, problem: TruthProblem, eim: EimModel) -> RieszData:
    """One V-Gram solve per residual term, then the Gram matrix of the representers."""
    mesh = problem.mesh
    Xi = np.asarray(Xi, dtype=float).reshape(mesh.n_dof, -1)
    N = Xi.shape[1]
    cols = [problem.source_vectors.T, problem.mass @ Xi]
    for q in eim.basis:
        cols.append(weighted_stiffness(mesh, q) @ Xi)
    rhs = np.concatenate(cols, axis=1)
    reps = problem.v_gram.solve(rhs)
    G_R = reps.T @ (problem.v_gram @ reps)
    G_R = 0.5 * (G_R + G_R.T)
    R = np.linalg.qr(problem.v_gram.cholesky_apply(reps), mode="r")
    return RieszData(reps, G_R, R, problem.source.Q, N, eim.M)


@dataclass
class RbModel:
    Xi: np.ndarray  # (n_dof, N) V-orthonormal basis
    ops: ReducedOperators
    riesz: Optional[RieszData]
    eim: EimModel
    problem: TruthProblem
    greedy_log: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.Xi.shape[1]

    @property
    def M(self) -> int:
        return self.eim.M

    @property
    def eim_digest(self) -> str:
        return self.eim.digest()

    def truncate(self, N: Optional[int] = None, M: Optional[int] = None) -> "RbModel":
        """Sub-model on the first N basis vectors and first M EIM functions."""
        N = self.N if N is None else N
        M = self.M if M is None else M
        if not (1 <= N <= self.N and 1 <= M <= self.M):
            raise ValueError(f"cannot truncate (N={self.N}, M={self.M}) to ({N}, {M})")
        riesz = None if self.riesz is None else self.riesz.truncate(N, M)
        return replace(self, Xi=self.Xi[:, :N].copy(), ops=self.ops.truncate(N, M),
                       riesz=riesz, eim=self.eim.truncate(M))


def assemble_model(Xi, problem: TruthProblem, eim: EimModel, greedy_log=None,
                   with_riesz: bool = True) -> RbModel:
    Xi = np.asarray(Xi, dtype=float).reshape(problem.mesh.n_dof, -1)
    K_N = Xi.T @ (problem.v_gram @ Xi)
    if np.max(np.abs(K_N - np.eye(Xi.shape[1]))) > 1e-8:
        warnings.warn("reduced basis is not V-orthonormal", RuntimeWarning)
    riesz = build_riesz(Xi, problem, eim) if with_riesz else None
    return RbModel(Xi, project_reduced_operators(Xi, problem, eim), riesz, eim, problem,
                   list(greedy_log or []))
