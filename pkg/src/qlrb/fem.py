"""P1 finite elements on (0, 1) with homogeneous Dirichlet conditions.

Coefficient vectors live on the ``n_elem - 1`` interior nodes; element fields
(gradients, nonlinearity weights, EIM basis functions) hold one value per
element, which is exact for P1 since all gradients are element-wise constant.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cholesky_banded, solveh_banded

# 2-point Gauss rule on the reference interval [0, 1]
_GAUSS_X = 0.5 + np.array([-1.0, 1.0]) / (2.0 * np.sqrt(3.0))
_GAUSS_W = np.array([0.5, 0.5])


@dataclass(frozen=True)
class Mesh1D:
    n_elem: int

    def __post_init__(self):
        if int(self.n_elem) != self.n_elem or self.n_elem < 2:
            raise ValueError(f"need at least 2 elements, got {self.n_elem}")

    @property
    def h(self) -> float:
        return 1.0 / self.n_elem

    @property
    def n_dof(self) -> int:
        return self.n_elem - 1

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.n_elem) * self.h

    @property
    def elem_midpoints(self) -> np.ndarray:
        return (np.arange(self.n_elem) + 0.5) * self.h


def build_mesh(n_elem: int) -> Mesh1D:
    return Mesh1D(n_elem)


class SymTridiag:
    """Symmetric tridiagonal matrix stored as (diagonal, first off-diagonal)."""

    def __init__(self, diag, off):
        self.diag = np.asarray(diag, dtype=float)
        self.off = np.asarray(off, dtype=float)
        if self.off.shape[0] != max(self.diag.shape[0] - 1, 0):
            raise ValueError("off-diagonal must have length n - 1")

    @property
    def shape(self):
        n = self.diag.shape[0]
        return (n, n)

    def __matmul__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            y = self.diag * x
            y[:-1] += self.off * x[1:]
            y[1:] += self.off * x[:-1]
            return y
        y = self.diag[:, None] * x
        y[:-1] += self.off[:, None] * x[1:]
        y[1:] += self.off[:, None] * x[:-1]
        return y

    def __add__(self, other):
        if not isinstance(other, SymTridiag):
            return NotImplemented
        return SymTridiag(self.diag + other.diag, self.off + other.off)

    def __mul__(self, c):
        return SymTridiag(c * self.diag, c * self.off)

    __rmul__ = __mul__

    def toarray(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def banded(self) -> np.ndarray:
        """Upper banded storage as expected by ``scipy.linalg.solveh_banded``."""
        ab = np.zeros((2, self.diag.shape[0]))
        ab[0, 1:] = self.off
        ab[1] = self.diag
        return ab

    def solve(self, b):
        """Solve with a banded Cholesky factorization; the matrix must be SPD."""
        return solveh_banded(self.banded(), b, check_finite=False)

    def cholesky_apply(self, x):
        """U @ x for the upper bidiagonal Cholesky factor U (self = U^T U)."""
        u = cholesky_banded(self.banded(), lower=False, check_finite=False)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            y = u[1] * x
            y[:-1] += u[0, 1:] * x[1:]
            return y
        y = u[1][:, None] * x
        y[:-1] += u[0, 1:][:, None] * x[1:]
        return y


def assemble_mass(mesh: Mesh1D) -> SymTridiag:
    h = mesh.h
    n = mesh.n_dof
    return SymTridiag(np.full(n, 2.0 * h / 3.0), np.full(n - 1, h / 6.0))


def weighted_stiffness(mesh: Mesh1D, w) -> SymTridiag:
    """Matrix of int w u' v' for an element-wise constant weight ``w``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (mesh.n_elem,):
        raise ValueError(f"weight must have length {mesh.n_elem}, got {w.shape}")
    # node i touches elements i (left) and i + 1 (right)
    return SymTridiag((w[:-1] + w[1:]) / mesh.h, -w[1:-1] / mesh.h)


def assemble_v_gram(mesh: Mesh1D) -> SymTridiag:
    return weighted_stiffness(mesh, np.ones(mesh.n_elem))


def gradient_matrix(mesh: Mesh1D) -> np.ndarray:
    """Dense (n_elem x n_dof) map from nodal coefficients to element slopes."""
    n = mesh.n_dof
    D = np.zeros((mesh.n_elem, n))
    idx = np.arange(n)
    D[idx, idx] = 1.0 / mesh.h
    D[idx + 1, idx] = -1.0 / mesh.h
    return D


def elem_gradient(mesh: Mesh1D, u) -> np.ndarray:
    """Element slopes of a P1 function; works column-wise for 2-D input."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != mesh.n_dof:
        raise ValueError(f"expected {mesh.n_dof} coefficients, got {u.shape[0]}")
    pad = [(1, 1)] + [(0, 0)] * (u.ndim - 1)
    return np.diff(np.pad(u, pad), axis=0) / mesh.h


def apply_weighted_stiffness(mesh: Mesh1D, w, u) -> np.ndarray:
    """Matrix-free product ``weighted_stiffness(mesh, w) @ u``."""
    flux = w * elem_gradient(mesh, u)
    return -np.diff(flux, axis=0)


def load_vector(mesh: Mesh1D, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Entries int f phi_i, composite 2-point Gauss per element."""
    h = mesh.h
    left = np.arange(mesh.n_elem) * h
    xq = left[:, None] + h * _GAUSS_X[None, :]
    fq = np.asarray(f(xq), dtype=float) * np.ones_like(xq)
    wf = h * _GAUSS_W[None, :] * fq
    # hat rising on an element belongs to its right node, falling to its left node
    rising = (wf * _GAUSS_X[None, :]).sum(axis=1)
    falling = (wf * (1.0 - _GAUSS_X[None, :])).sum(axis=1)
    return rising[:-1] + falling[1:]


def h_project(mesh: Mesh1D, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """L2-orthogonal projection of ``f`` onto the P1 space."""
    return assemble_mass(mesh).solve(load_vector(mesh, f))
