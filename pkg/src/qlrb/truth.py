"""Crank-Nicolson finite-element solver for quasilinear parabolic problems.

The spatial operator is ``-(nu(|u'|; mu) u')'`` on (0, 1) with zero Dirichlet
data.  Each time step is a nonlinear algebraic system solved by Newton's
method with the exact (symmetric, tridiagonal) Jacobian.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from .fem import (
    Mesh1D,
    build_mesh,
    SymTridiag,
    apply_weighted_stiffness,
    assemble_mass,
    assemble_v_gram,
    elem_gradient,
    h_project,
    load_vector,
    weighted_stiffness,
)


class NewtonConvergenceError(RuntimeError):
    """Newton's method hit its iteration cap."""

    def __init__(self, residual_norm: float, step: Optional[int] = None, mu=None):
        self.residual_norm = residual_norm
        self.step = step
        self.mu = mu
        where = "" if step is None else f" at time step {step}"
        if mu is not None:
            where += f" (mu={mu})"
        super().__init__(f"Newton did not converge{where}; last residual {residual_norm:.3e}")


# -- nonlinearities -----------------------------------------------------------

def _exp_value(s, mu):
    return np.exp(mu * s * s) + 1.0


def _exp_derivative(s, mu):
    return 2.0 * mu * s * np.exp(mu * s * s)


def _const_value(c, s, mu):
    return np.full(np.shape(s), float(c))


def _const_derivative(s, mu):
    return np.zeros(np.shape(s))


def _rational_value(s, mu):
    return 1.0 / (1.0 + s * s)


def _rational_derivative(s, mu):
    return -2.0 * s / (1.0 + s * s) ** 2


@dataclass(frozen=True)
class Nonlinearity:
    """Reluctivity ``nu(s; mu)`` of the gradient magnitude ``s >= 0``.

    ``derivative`` is d nu / d s.  ``m_a`` is an analytic lower bound on the
    monotonicity constant if one is known.
    """

    value: Callable
    derivative: Callable
    m_a: Optional[float] = None
    name: str = "custom"

    def weights(self, grad, mu):
        return self.value(np.abs(grad), mu)

    def tangent_weights(self, grad, mu):
        # d/dp [nu(|p|) p] = nu(|p|) + nu'(|p|) |p|; vanishes cleanly at p = 0
        s = np.abs(grad)
        return self.value(s, mu) + self.derivative(s, mu) * s


def exp_reluctivity() -> Nonlinearity:
    """nu(s; mu) = exp(mu s^2) + 1, bounded below by 2 for every mu."""
    return Nonlinearity(_exp_value, _exp_derivative, m_a=2.0, name="exp")


def constant_reluctivity(c: float = 1.0) -> Nonlinearity:
    return Nonlinearity(functools.partial(_const_value, c), _const_derivative,
                        m_a=float(c), name=f"const({c})")


def rational_reluctivity() -> Nonlinearity:
    """nu(s) = 1 / (1 + s^2); s * nu(s) decreases for s > 1, so not monotone."""
    return Nonlinearity(_rational_value, _rational_derivative, m_a=None, name="rational")


@dataclass
class MonotonicityReport:
    passes: bool
    m_a: float
    L_a: float
    min_slope: float


def check_monotonicity(nonlinearity: Nonlinearity, mus: Sequence[float],
                       s_grid: Sequence[float]) -> MonotonicityReport:
    """Brute-force check that s -> nu(s) s is strictly increasing on a grid.

    Difference quotients of the flux over all grid pairs bound the
    monotonicity (from below) and Lipschitz (from above) constants of the
    form; ``m_a`` reports inf nu, the constant used in the certificate.
    """
    s = np.unique(np.asarray(s_grid, dtype=float))
    iu = np.triu_indices(s.size, k=1)
    ds = (s[:, None] - s[None, :])[iu]
    passes = True
    m_a = np.inf
    min_slope = np.inf
    L_a = 0.0
    for mu in mus:
        nu = nonlinearity.value(s, mu)
        flux = nu * s
        slopes = (flux[:, None] - flux[None, :])[iu] / ds
        passes &= bool(np.all(nu > 0) and np.all(slopes > 0))
        m_a = min(m_a, float(nu.min()))
        min_slope = min(min_slope, float(slopes.min()))
        L_a = max(L_a, float(slopes.max()))
    return MonotonicityReport(passes, m_a, L_a, min_slope)


# -- source and time grid -----------------------------------------------------

def _sin_time(t, mu):
    return np.sin(2.0 * np.pi * t)


def _scaled_sin_space(amplitude, x):
    return amplitude * np.sin(2.0 * np.pi * x)


@dataclass(frozen=True)
class SourceTerm:
    """Affine source g(x, t; mu) = sum_q theta_q(t, mu) g_q(x)."""

    terms: tuple = ()

    @property
    def Q(self) -> int:
        return len(self.terms)

    def __call__(self, x, t, mu):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for theta, g in self.terms:
            out = out + theta(t, mu) * g(x)
        return out

    def thetas(self, times, mu) -> np.ndarray:
        """(len(times), Q) table of time/parameter coefficients."""
        times = np.asarray(times, dtype=float)
        out = np.empty((times.size, self.Q))
        for q, (theta, _) in enumerate(self.terms):
            out[:, q] = theta(times, mu)
        return out


def sine_source(amplitude: float = 12.0) -> SourceTerm:
    """g(x, t) = amplitude * sin(2 pi x) sin(2 pi t)."""
    return SourceTerm(((_sin_time, functools.partial(_scaled_sin_space, amplitude)),))


@dataclass(frozen=True)
class TimeGrid:
    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("time grid must start at 0 and increase strictly")
        object.__setattr__(self, "t", t)

    @classmethod
    def uniform(cls, K: int, T: float) -> "TimeGrid":
        if K < 1 or T <= 0:
            raise ValueError("need K >= 1 and T > 0")
        return cls(np.linspace(0.0, T, K + 1))

    @property
    def K(self) -> int:
        return self.t.size - 1

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.t)


@dataclass(frozen=True)
class NewtonSettings:
    tol: float = 1e-8
    max_iter: int = 25

    def __post_init__(self):
        if not self.tol > 0 or self.max_iter < 1:
            raise ValueError("need tol > 0 and max_iter >= 1")


@dataclass(frozen=True, eq=False)
class TruthProblem:
    mesh: Mesh1D
    timegrid: TimeGrid
    nonlinearity: Nonlinearity
    source: SourceTerm
    u0: Optional[Callable] = None
    param_domain: tuple = (1.0, 5.5)

    def check_param(self, mu: float):
        lo, hi = self.param_domain
        if not lo <= mu <= hi:
            raise ValueError(f"mu={mu} outside parameter domain [{lo}, {hi}]")

    @cached_property
    def mass(self) -> SymTridiag:
        return assemble_mass(self.mesh)

    @cached_property
    def v_gram(self) -> SymTridiag:
        return assemble_v_gram(self.mesh)

    @cached_property
    def source_vectors(self) -> np.ndarray:
        """(Q_g, n_dof) load vectors of the spatial source terms."""
        rows = [load_vector(self.mesh, g) for _, g in self.source.terms]
        return np.array(rows).reshape(self.source.Q, self.mesh.n_dof)

    @cached_property
    def initial_state(self) -> np.ndarray:
        if self.u0 is None:
            return np.zeros(self.mesh.n_dof)
        return h_project(self.mesh, self.u0)

    def load(self, mu) -> np.ndarray:
        """(K + 1, n_dof) source vectors g_h^k at every time level."""
        return self.source.thetas(self.timegrid.t, mu) @ self.source_vectors


@dataclass
class TruthTrajectory:
    states: np.ndarray  # (K + 1, n_dof)
    newton_iters: np.ndarray
    mu: float


# -- Crank-Nicolson residual and Jacobian ------------------------------------

def apply_operator(problem: TruthProblem, u, mu) -> np.ndarray:
    """A_h(u; mu) u."""
    mesh = problem.mesh
    w = problem.nonlinearity.weights(elem_gradient(mesh, u), mu)
    return apply_weighted_stiffness(mesh, w, u)


def assemble_residual_G(problem: TruthProblem, u_k, u_km1, k: int, mu) -> np.ndarray:
    tg = problem.timegrid
    if not 1 <= k <= tg.K:
        raise ValueError(f"step index {k} outside 1..{tg.K}")
    dt = tg.dt[k - 1]
    thetas = problem.source.thetas(tg.t[[k - 1, k]], mu)
    g_avg = 0.5 * (thetas[0] + thetas[1]) @ problem.source_vectors
    return (problem.mass @ (u_k - u_km1)) / dt - g_avg + 0.5 * (
        apply_operator(problem, u_k, mu) + apply_operator(problem, u_km1, mu))


def tangent_stiffness(problem: TruthProblem, u, mu) -> SymTridiag:
    """A'_h(u; mu): Frechet derivative of u -> A_h(u; mu) u."""
    mesh = problem.mesh
    return weighted_stiffness(
        mesh, problem.nonlinearity.tangent_weights(elem_gradient(mesh, u), mu))


def assemble_jacobian(problem: TruthProblem, u_k, k: int, mu) -> SymTridiag:
    dt = problem.timegrid.dt[k - 1]
    return problem.mass * (1.0 / dt) + tangent_stiffness(problem, u_k, mu) * 0.5


def _newton(residual, jacobian, u, settings: NewtonSettings):
    r = residual(u)
    norm = float(np.linalg.norm(r))
    it = 0
    while not norm < settings.tol:  # also catches NaN
        if it == settings.max_iter:
            raise NewtonConvergenceError(norm)
        u = u - jacobian(u).solve(r)
        r = residual(u)
        norm = float(np.linalg.norm(r))
        it += 1
    return u, it


def newton_solve(problem: TruthProblem, u_init, k: int, mu, settings=NewtonSettings(),
                 u_prev=None):
    """Newton iteration for step ``k``; returns ``(u_k, iterations)``.

    ``u_prev`` is the state at ``t^{k-1}`` (defaults to ``u_init``, the usual
    warm start).
    """
    u_init = np.asarray(u_init, dtype=float)
    u_prev = u_init if u_prev is None else np.asarray(u_prev, dtype=float)
    tg = problem.timegrid
    dt = tg.dt[k - 1]
    mesh = problem.mesh
    nl = problem.nonlinearity
    M = problem.mass
    thetas = problem.source.thetas(tg.t[[k - 1, k]], mu)
    g_avg = 0.5 * (thetas[0] + thetas[1]) @ problem.source_vectors
    rhs = M @ u_prev / dt + g_avg - 0.5 * apply_operator(problem, u_prev, mu)
    Mdt = M * (1.0 / dt)

    def residual(u):
        return M @ u / dt + 0.5 * apply_operator(problem, u, mu) - rhs

    def jacobian(u):
        tw = nl.tangent_weights(elem_gradient(mesh, u), mu)
        return Mdt + weighted_stiffness(mesh, tw) * 0.5

    try:
        return _newton(residual, jacobian, u_init, settings)
    except NewtonConvergenceError as err:
        raise NewtonConvergenceError(err.residual_norm, step=k, mu=mu) from None


def truth_solve(problem: TruthProblem, mu: float, settings=NewtonSettings()) -> TruthTrajectory:
    problem.check_param(mu)
    K = problem.timegrid.K
    states = np.empty((K + 1, problem.mesh.n_dof))
    iters = np.zeros(K + 1, dtype=int)
    states[0] = problem.initial_state
    for k in range(1, K + 1):
        states[k], iters[k] = newton_solve(problem, states[k - 1], k, mu, settings)
    return TruthTrajectory(states, iters, float(mu))


def benchmark_problem(n_elem: int = 100, K: int = 200, T: float = 0.2,
                  param_domain=(1.0, 5.5)) -> TruthProblem:
    """The 1-D magnetoquasistatic benchmark: exp reluctivity, sine forcing, u0 = 0."""
    return TruthProblem(build_mesh(n_elem), TimeGrid.uniform(K, T), exp_reluctivity(),
                        sine_source(12.0), None, tuple(param_domain))
