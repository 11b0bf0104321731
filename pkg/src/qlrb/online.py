"""Reduced Crank-Nicolson solver and the a-posteriori error certificate.

Everything in ``rb_solve`` and ``residual_dual_norm`` works on arrays of size
N, M, Q_R and K.  The only full-dimensional pass is the element-wise
evaluation of the nonlinearity in ``delta_M_value`` (and the empirical
monotonicity constant, which reuses it).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg.lapack import dgesv

from .offline import RbModel
from .truth import NewtonConvergenceError, NewtonSettings, TruthTrajectory


@dataclass
class RbTrajectory:
    states: np.ndarray  # (K + 1, N)
    newton_iters: np.ndarray
    mu: float
    weight_violation: bool = False  # some interpolated nu_M <= 0 at a point

    def lift(self, model: RbModel) -> np.ndarray:
        """(K + 1, n_dof) high-dimensional coefficients."""
        return self.states @ model.Xi.T


@dataclass
class ErrorCertificate:
    delta_total: float
    delta_rb: float
    delta_ei: float
    m_a_used: float
    residual_dual_norm: float
    delta_M_value: float
    u_norm_L2V: float
    mesh_dependent: bool = True  # the delta_M pass touches every element
    true_error: Optional[float] = None
    effectivity: Optional[float] = None


def eim_coeffs(model: RbModel, u, mu) -> np.ndarray:
    """EIM coefficients phi(u; mu) for reduced state(s) ``u`` (rows for 2-D input)."""
    ops = model.ops
    p = np.asarray(u) @ ops.interp_grad.T
    return model.problem.nonlinearity.weights(p, mu) @ ops.B_inv.T


def reduced_operator(model: RbModel, phi) -> np.ndarray:
    """A_{N,M} = sum_m phi_m A_m."""
    return np.tensordot(phi, model.ops.A_m, axes=1)


def rb_jacobian(model: RbModel, u, mu, dt: float, mode: str = "inexact") -> np.ndarray:
    """(1/dt) M_N + 1/2 A'_{N,M}; ``inexact`` drops the EIM chain-rule term E."""
    ops = model.ops
    u = np.asarray(u, dtype=float)
    phi = eim_coeffs(model, u, mu)
    A = reduced_operator(model, phi)
    if mode == "exact":
        A = A + _chain_term(model, u, mu)
    elif mode != "inexact":
        raise ValueError(f"unknown Jacobian mode {mode!r}")
    return ops.M_N / dt + 0.5 * A


def _chain_term(model: RbModel, u, mu) -> np.ndarray:
    # E[i, j] = sum_m (A_m u)_i d phi_m / d u_j, phi = B^{-1} nu(|P u|)
    ops = model.ops
    nl = model.problem.nonlinearity
    p = ops.interp_grad @ u
    dnu = nl.derivative(np.abs(p), mu) * np.sign(p)
    dphi = ops.B_inv @ (dnu[:, None] * ops.interp_grad)
    C = ops.A_m @ u  # (M, N)
    return C.T @ dphi


def rb_residual(model: RbModel, u, u_prev, k: int, mu) -> np.ndarray:
    """Reduced Crank-Nicolson residual G_{N,M} of step ``k``."""
    problem = model.problem
    tg = problem.timegrid
    if not 1 <= k <= tg.K:
        raise ValueError(f"step index {k} outside 1..{tg.K}")
    u, u_prev = np.asarray(u, dtype=float), np.asarray(u_prev, dtype=float)
    thetas = problem.source.thetas(tg.t[[k - 1, k]], mu)
    g = 0.5 * (thetas[0] + thetas[1]) @ model.ops.g_N
    Au = reduced_operator(model, eim_coeffs(model, u, mu)) @ u
    Au_prev = reduced_operator(model, eim_coeffs(model, u_prev, mu)) @ u_prev
    return model.ops.M_N @ (u - u_prev) / tg.dt[k - 1] - g + 0.5 * (Au + Au_prev)


def rb_solve(model: RbModel, mu: float, settings=NewtonSettings(),
             jacobian: str = "exact") -> RbTrajectory:
    """Reduced CN time marching with an RB Newton iteration per step."""
    if jacobian not in ("inexact", "exact"):
        raise ValueError(f"unknown Jacobian mode {jacobian!r}")
    problem = model.problem
    problem.check_param(mu)
    ops = model.ops
    tg = problem.timegrid
    K, N = tg.K, model.N
    value = problem.nonlinearity.value
    derivative = problem.nonlinearity.derivative
    P, B_inv, M_N = ops.interp_grad, ops.B_inv, ops.M_N
    A_flat = ops.A_m.reshape(ops.M, N * N)
    exact = jacobian == "exact"
    tol, max_iter = settings.tol, settings.max_iter
    gN = problem.source.thetas(tg.t, mu) @ ops.g_N  # (K + 1, N)
    dts = tg.dt

    states = np.empty((K + 1, N))
    iters = np.zeros(K + 1, dtype=int)
    u = ops.u0_N.copy()
    states[0] = u
    phi = B_inv @ value(np.abs(P @ u), mu)
    Au_prev = (phi @ A_flat).reshape(N, N) @ u
    A_stack = ops.A_m
    Mdt, dt_cached = None, None
    for k in range(1, K + 1):
        dt = dts[k - 1]
        if dt != dt_cached:
            Mdt, dt_cached = M_N / dt, dt
        rhs = Mdt @ u + 0.5 * (gN[k] + gN[k - 1]) - 0.5 * Au_prev
        it = 0
        while True:
            p = P @ u
            s = np.abs(p)
            phi = B_inv @ value(s, mu)
            A = (phi @ A_flat).reshape(N, N)
            Au = A @ u
            r = Mdt @ u + 0.5 * Au - rhs
            norm = math.sqrt(r @ r)
            if norm < tol:
                break
            if it == max_iter:
                raise NewtonConvergenceError(float(norm), step=k, mu=mu)
            J = Mdt + 0.5 * A
            if exact:
                # E = (A_m u)^T B^{-1} diag(nu'(|p|) sign(p)) P
                dphi = B_inv @ ((derivative(s, mu) * np.sign(p))[:, None] * P)
                J += 0.5 * ((A_stack @ u).T @ dphi)
            _, _, du, info = dgesv(J, r)
            if info != 0:
                raise NewtonConvergenceError(float(norm), step=k, mu=mu)
            u = u - du
            it += 1
        states[k] = u
        iters[k] = it
        Au_prev = Au
    return RbTrajectory(states, iters, float(mu))


def reduced_gradients(model: RbModel, traj: RbTrajectory) -> np.ndarray:
    """(K + 1, n_elem) element slopes of the reduced states (mesh-dependent)."""
    return traj.states @ model.ops.grad_basis.T


def _certified_steps(traj: RbTrajectory) -> np.ndarray:
    # nu at k = 0 only enters multiplied by the initial gradient
    K = traj.states.shape[0] - 1
    start = 0 if np.any(traj.states[0] != 0) else 1
    return np.arange(start, K + 1)


def delta_M_value(model: RbModel, traj: RbTrajectory, mu) -> float:
    """max_k max_x |nu_M - nu| along the reduced trajectory.

    The same pass flags ``traj.weight_violation`` when the interpolated
    reluctivity fails to stay positive, i.e. when the surrogate form may have
    lost strong monotonicity.
    """
    ops = model.ops
    grads = reduced_gradients(model, traj)[_certified_steps(traj)]
    exact = model.problem.nonlinearity.weights(grads, mu)
    approx = (exact[:, model.eim.interp_indices] @ ops.B_inv.T) @ ops.eim_basis
    if np.any(approx <= 0):
        traj.weight_violation = True
        warnings.warn(f"interpolated reluctivity not positive (mu={mu})", RuntimeWarning)
    return float(np.max(np.abs(approx - exact)))


def residual_coefficients(model: RbModel, traj: RbTrajectory, mu) -> np.ndarray:
    """(K, Q_R) coefficients Theta_R^k of the affine residual at every step."""
    problem = model.problem
    tg = problem.timegrid
    U = traj.states
    thetas = problem.source.thetas(tg.t, mu)
    src = 0.5 * (thetas[1:] + thetas[:-1])
    dtime = -(U[1:] - U[:-1]) / tg.dt[:, None]
    phi = eim_coeffs(model, U, mu)  # (K + 1, M)
    pu = phi[:, :, None] * U[:, None, :]  # (K + 1, M, N)
    eim_terms = -0.5 * (pu[1:] + pu[:-1]).reshape(tg.K, -1)
    return np.concatenate([src, dtime, eim_terms], axis=1)


def residual_dual_norm(model: RbModel, traj: RbTrajectory, mu) -> float:
    """||R||_{Y'} = sqrt(sum_k dt_k Theta_k^T G_R Theta_k), via G_R = R^T R."""
    if model.riesz is None:
        raise ValueError("model was assembled without Riesz data")
    Theta = residual_coefficients(model, traj, mu)
    dt = model.problem.timegrid.dt
    W = Theta @ model.riesz.R.T
    return float(np.sqrt(dt @ np.einsum("kq,kq->k", W, W)))


def trajectory_norms(model: RbModel, traj: RbTrajectory, rule: str = "trapezoid"):
    """Space-time norms ``(y_norm, l2v_norm)`` of a reduced trajectory.

    ``trapezoid`` is the rule used in every certified quantity; ``simpson``
    integrates the quadratic-in-time integrand exactly and is for comparison.
    """
    U = traj.states
    K_N, M_N = model.ops.K_N, model.ops.M_N
    dt = model.problem.timegrid.dt
    vsq = np.einsum("ki,ij,kj->k", U, K_N, U)
    if rule == "trapezoid":
        l2v_sq = np.sum(0.5 * dt * (vsq[1:] + vsq[:-1]))
    elif rule == "simpson":
        mid = 0.5 * (U[1:] + U[:-1])
        msq = np.einsum("ki,ij,kj->k", mid, K_N, mid)
        l2v_sq = np.sum(dt / 6.0 * (vsq[1:] + 4.0 * msq + vsq[:-1]))
    else:
        raise ValueError(f"unknown rule {rule!r}")
    h0 = U[0] @ M_N @ U[0]
    return float(np.sqrt(l2v_sq + h0)), float(np.sqrt(l2v_sq))


def monotonicity_constant(model: RbModel, mu, traj: Optional[RbTrajectory] = None,
                          mode: str = "analytic") -> float:
    if mode == "analytic":
        m_a = model.problem.nonlinearity.m_a
        if m_a is None:
            raise ValueError("no analytic monotonicity constant stored; use mode='empirical'")
        return float(m_a)
    if mode == "empirical":
        if traj is None:
            raise ValueError("empirical monotonicity constant needs the reduced trajectory")
        grads = reduced_gradients(model, traj)[_certified_steps(traj)]
        return float(np.min(model.problem.nonlinearity.weights(grads, mu)))
    raise ValueError(f"unknown mode {mode!r}")


def space_time_error(problem, truth_states, rb_states_lifted) -> float:
    """||u_delta - u_N||_Y with the trapezoidal rule in time."""
    E = np.asarray(truth_states) - np.asarray(rb_states_lifted)
    vsq = np.einsum("ki,ik->k", E, problem.v_gram @ E.T)
    dt = problem.timegrid.dt
    e0 = E[0] @ (problem.mass @ E[0])
    return float(np.sqrt(np.sum(0.5 * dt * (vsq[1:] + vsq[:-1])) + e0))


def true_error_and_effectivity(model: RbModel, mu, truth: TruthTrajectory,
                               traj: RbTrajectory, delta: Optional[float] = None):
    if truth.states.shape[0] != traj.states.shape[0]:
        raise ValueError("truth and reduced trajectories live on different time grids")
    err = space_time_error(model.problem, truth.states, traj.lift(model))
    if delta is None:
        return err, None
    eta = delta / err if err > 0 else np.inf
    return err, eta


def certify(model: RbModel, traj: RbTrajectory, mu, m_a_mode: str = "analytic",
            truth: Optional[TruthTrajectory] = None) -> ErrorCertificate:
    """Delta = (||R||_{Y'} + delta_M ||u_N||_{L2(I;V)}) / m_a."""
    res = residual_dual_norm(model, traj, mu)
    dM = delta_M_value(model, traj, mu)
    _, l2v = trajectory_norms(model, traj)
    m_a = monotonicity_constant(model, mu, traj, m_a_mode)
    cert = ErrorCertificate(
        delta_total=(res + dM * l2v) / m_a,
        delta_rb=res / m_a,
        delta_ei=dM * l2v / m_a,
        m_a_used=m_a,
        residual_dual_norm=res,
        delta_M_value=dM,
        u_norm_L2V=l2v,
    )
    if truth is not None:
        cert.true_error, cert.effectivity = true_error_and_effectivity(
            model, mu, truth, traj, cert.delta_total)
    return cert


def estimate(model: RbModel, mu, settings=NewtonSettings(), jacobian: str = "exact",
             m_a_mode: str = "analytic") -> float:
    """Solve and certify; a failed reduced solve counts as an infinite bound."""
    try:
        traj = rb_solve(model, mu, settings, jacobian)
    except NewtonConvergenceError:
        return float("inf")
    return certify(model, traj, mu, m_a_mode).delta_total
