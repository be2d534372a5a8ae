"""Edge (relative-state) formulation and its decoupled Riccati solver.

Each edge ``m = (i, j)`` carries ``q^m = p^i - p^j - d^m`` and
``w^m = v^i - v^j``. Stacked edge states follow ``[q^1..q^M, w^1..w^M]``;
per-edge work is done on the reduced ``2n`` block ``[q^m, w^m]``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._pykernels import edge_blocks
from .errors import AvoidanceRegionError, ConvergenceError, IndefiniteInnovationError
from .numerics import (
    DEFAULT_EPSILON,
    smoothed_sq_norm,
    smoothed_sq_norm_grad,
)


@dataclass(frozen=True)
class EdgeDynamics:
    num_edges: int
    spatial_dim: int
    dt: float
    F: np.ndarray
    G: tuple
    f: np.ndarray
    g: np.ndarray

    @property
    def dim(self):
        return 2 * self.num_edges * self.spatial_dim

    def step(self, z, rel_inputs):
        out = self.F @ z
        for Gm, am in zip(self.G, np.asarray(rel_inputs, dtype=float)):
            out = out + Gm @ am
        return out


def build_edge_dynamics(M, n, dt):
    if not dt > 0:
        raise ValueError("sampling time must be positive")
    base = np.array([[1.0, dt], [0.0, 1.0]])
    F = np.kron(base, np.eye(M * n))
    G = []
    for m in range(M):
        gbar = np.kron(np.eye(M)[:, [m]], np.eye(n))
        G.append(np.vstack([0.5 * dt * dt * gbar, dt * gbar]))
    f = np.kron(base, np.eye(n))
    g = np.kron(np.array([[0.5 * dt * dt], [dt]]), np.eye(n))
    return EdgeDynamics(M, n, float(dt), F, tuple(G), f, g)


def edge_components(z, M, n):
    """Stacked ``[q^1..q^M, w^1..w^M]`` -> ``(M, 2n)`` rows ``[q^m, w^m]``."""
    z = np.asarray(z, dtype=float)
    q = z[:M * n].reshape(M, n)
    w = z[M * n:].reshape(M, n)
    return np.hstack([q, w])


def stack_edge_components(zm):
    zm = np.asarray(zm, dtype=float)
    n = zm.shape[1] // 2
    return np.concatenate([zm[:, :n].ravel(), zm[:, n:].ravel()])


def node_to_edge_state(x, topology, d):
    N, n = topology.num_nodes, topology.spatial_dim
    Nn = N * n
    x = np.asarray(x, dtype=float)
    Phi = topology.operators.Phi
    q = Phi @ x[:Nn] - np.asarray(d, dtype=float).ravel() * x[Nn]
    w = Phi @ x[Nn + 1:]
    return np.concatenate([q, w])


def relative_inputs(u, topology):
    """``a^m = u^source - u^sink`` for node inputs shaped ``(N, n)``."""
    u = np.asarray(u, dtype=float)
    src = [s for s, _ in topology.edges]
    dst = [t for _, t in topology.edges]
    return u[src] - u[dst]


@dataclass(frozen=True)
class EdgeCostWeights:
    dt: float
    alpha: np.ndarray
    beta: np.ndarray
    d: np.ndarray
    r: float
    R: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    terminal_alpha: np.ndarray = field(default=None)
    terminal_beta: np.ndarray = field(default=None)

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.d, dtype=float))
        M, n = d.shape
        alpha = np.broadcast_to(np.asarray(self.alpha, float), (M,)).copy()
        beta = np.broadcast_to(np.asarray(self.beta, float), (M,)).copy()
        R = np.asarray(self.R, dtype=float)
        if R.ndim == 0:
            R = R * np.eye(n)
        if R.ndim == 2:
            R = np.broadcast_to(R, (M, n, n)).copy()
        for Rm in R:
            if not np.allclose(Rm, Rm.T) or np.linalg.eigvalsh(Rm).min() <= 0:
                raise ValueError("input weights must be symmetric positive definite")
        if np.any(alpha < 0) or np.any(beta < 0):
            raise ValueError("edge weights must be nonnegative")
        ta = alpha.copy() if self.terminal_alpha is None else np.broadcast_to(
            np.asarray(self.terminal_alpha, float), (M,)).copy()
        tb = beta.copy() if self.terminal_beta is None else np.broadcast_to(
            np.asarray(self.terminal_beta, float), (M,)).copy()
        for name, val in (("d", d), ("alpha", alpha), ("beta", beta), ("R", R),
                          ("terminal_alpha", ta), ("terminal_beta", tb)):
            object.__setattr__(self, name, val)

    @property
    def num_edges(self):
        return self.d.shape[0]

    @property
    def spatial_dim(self):
        return self.d.shape[1]

    def without_avoidance(self):
        return EdgeCostWeights(self.dt, self.alpha, np.zeros_like(self.beta), self.d, self.r,
                               self.R, self.epsilon, self.terminal_alpha,
                               np.zeros_like(self.terminal_beta))


def edge_barrier_weight(weights, m, zm, terminal=False):
    """``beta^m / (smoothed |q^m + d^m|^2 - r^2)``; zero when ``beta^m = 0``."""
    b = weights.terminal_beta[m] if terminal else weights.beta[m]
    if b == 0:
        return 0.0
    n = weights.spatial_dim
    y = np.asarray(zm[:n], dtype=float) + weights.d[m]
    dist = float(np.linalg.norm(y))
    den = smoothed_sq_norm(y, weights.epsilon) - weights.r ** 2
    if dist <= weights.r or den <= 0:
        raise AvoidanceRegionError(
            f"edge {m + 1} inside avoidance region: distance {dist:.6g} (safety radius {weights.r})",
            edge=m, distance=dist,
        )
    return b / den


def _barrier_grad(weights, m, zm, terminal=False):
    b = weights.terminal_beta[m] if terminal else weights.beta[m]
    n = weights.spatial_dim
    out = np.zeros(2 * n)
    if b == 0:
        return out
    w = edge_barrier_weight(weights, m, zm, terminal)
    y = np.asarray(zm[:n], dtype=float) + weights.d[m]
    out[:n] = -(w * w / b) * smoothed_sq_norm_grad(y, weights.epsilon)
    return out


def edge_state_weight(weights, m, zm, terminal=False):
    """Reduced ``(Q^m(z^m), g)`` on the ``2n`` block; ``Q z + g`` is the gradient of ``0.5 z^T Q(z) z``."""
    zm = np.asarray(zm, dtype=float)
    a = weights.terminal_alpha[m] if terminal else weights.alpha[m]
    w = edge_barrier_weight(weights, m, zm, terminal)
    Q = weights.dt * (a + w) * np.eye(zm.size)
    g = 0.5 * weights.dt * float(zm @ zm) * _barrier_grad(weights, m, zm, terminal)
    return Q, g


def dQbar_beta(weights, m, zm, terminal=False):
    """Derivative of the reduced barrier weight matrix, shaped ``(2n, 2n, 2n)``; index 0 is the coordinate."""
    grad = _barrier_grad(weights, m, zm, terminal)
    k = grad.size
    return weights.dt * grad[:, None, None] * np.eye(k)[None, :, :]


def build_Qbar(weights, m, zm, terminal=False):
    """Full ``2Mn x 2Mn`` pair ``(Qbar_alpha, Qbar_beta(z^m))``."""
    M, n = weights.num_edges, weights.spatial_dim
    a = weights.terminal_alpha[m] if terminal else weights.alpha[m]
    sel = np.zeros((M, M))
    sel[m, m] = 1.0
    pattern = np.kron(np.eye(2), np.kron(sel, np.eye(n)))
    w = edge_barrier_weight(weights, m, zm, terminal)
    return weights.dt * a * pattern, weights.dt * w * pattern


def full_edge_correction(weights, m, z, terminal=False):
    """Gradient term of ``0.5 z^T Qbar^m z`` in stacked coordinates."""
    M, n = weights.num_edges, weights.spatial_dim
    zm = edge_components(z, M, n)[m]
    _, g = edge_state_weight(weights, m, zm, terminal)
    out = np.zeros(2 * M * n)
    out[m * n:(m + 1) * n] = g[:n]
    out[M * n + m * n:M * n + (m + 1) * n] = g[n:]
    return out


def dsdrde_backward_pass(f, g, R, Q_seq, g_seq):
    """Backward Riccati sweep with the gradient term, any state size.

    ``Q_seq[k]`` and ``g_seq[k]`` (gradient of the state-dependent part of
    the weight) are given for ``k = 0..T``; index ``T`` is the
    terminal weight. The cost-to-go is ``0.5 z^T P_k z + s_k^T z``. Returns
    ``(P, s, K, kappa)`` for the affine law ``a_k = K_k z_k + kappa_k``.
    """
    T = len(Q_seq) - 1
    n2 = f.shape[0]
    P = np.empty((T + 1, n2, n2))
    s = np.empty((T + 1, n2))
    K = np.empty((T, g.shape[1], n2))
    kappa = np.empty((T, g.shape[1]))
    P[T] = Q_seq[T]
    s[T] = g_seq[T]
    for k in range(T - 1, -1, -1):
        Pn = P[k + 1]
        S = R + g.T @ Pn @ g
        if np.linalg.eigvalsh(0.5 * (S + S.T)).min() <= 0:
            raise IndefiniteInnovationError(f"R + G^T P G not positive definite at step {k}")
        K[k] = -np.linalg.solve(S, g.T @ Pn @ f)
        kappa[k] = -np.linalg.solve(S, g.T @ s[k + 1])
        P[k] = f.T @ Pn @ f + f.T @ Pn @ g @ K[k] + Q_seq[k]
        s[k] = f.T @ (Pn @ g @ kappa[k] + s[k + 1]) + g_seq[k]
    return P, s, K, kappa


@dataclass
class EdgeGainSchedule:
    K: np.ndarray           # (M, T, n, 2n)
    kappa: np.ndarray       # (M, T, n) affine part of the law
    P: np.ndarray           # (M, T+1, 2n, 2n)
    s: np.ndarray           # (M, T+1, 2n) linear cost-to-go term
    z_pred: np.ndarray      # (M, T+1, 2n)
    iterations: np.ndarray  # (M,)
    delta: np.ndarray       # (M,)
    status: np.ndarray      # (M,)

    @property
    def horizon(self):
        return self.K.shape[1]

    @property
    def converged(self):
        return bool(np.all(self.status == kernels.STATUS_OK))


def zero_gains(M, n, T):
    return np.zeros((M, T, n, 2 * n)), np.zeros((M, T, n))


def algorithm1_receding_horizon(zm, warm_gains, weights, T=10, tol=1e-6, t_max=30,
                                strict=False, backend=None):
    """Iterate predict / backward sweep per edge; return first relative inputs and the schedule.

    ``zm`` is ``(M, 2n)``. ``warm_gains`` is ``None``, a ``(K, kappa)`` pair
    or a bare ``K`` array (zero affine part). Each edge stops on its own once
    the largest Frobenius change of its augmented gains over the horizon is
    at most ``tol``.
    """
    zm = np.asarray(zm, dtype=float)
    M, n2 = zm.shape
    n = n2 // 2
    if warm_gains is None:
        K0, k0 = zero_gains(M, n, T)
    elif isinstance(warm_gains, tuple):
        K0, k0 = (np.asarray(v, dtype=float) for v in warm_gains)
    else:
        K0 = np.asarray(warm_gains, dtype=float)
        k0 = np.zeros(K0.shape[:3])
    if K0.shape != (M, T, n, n2) or k0.shape != (M, T, n):
        raise ValueError(f"warm gains have shape {K0.shape}, expected {(M, T, n, n2)}")
    K, kap, P, sv, zp, iters, delta, status, fail = kernels.edge_solve(
        zm, K0, k0, weights.dt, weights.alpha, weights.beta, weights.terminal_alpha,
        weights.terminal_beta, weights.d, float(weights.r), float(weights.epsilon),
        weights.R, float(tol), int(t_max), backend=backend,
    )
    for m in range(M):
        if status[m] == kernels.STATUS_AVOIDANCE:
            step = int(fail[m])
            y = zp[m, step, :n] + weights.d[m]
            raise AvoidanceRegionError(
                f"predicted trajectory of edge {m + 1} enters the avoidance region at step {step} "
                f"(distance {np.linalg.norm(y):.6g})",
                edge=m, step=step, distance=float(np.linalg.norm(y)),
            )
        if status[m] == kernels.STATUS_INDEFINITE:
            raise IndefiniteInnovationError(f"R + G^T P G not positive definite for edge {m + 1}")
    schedule = EdgeGainSchedule(K, kap, P, sv, zp, iters, delta, status)
    if not schedule.converged:
        msg = (f"gain iteration hit t_max={t_max} on edges "
               f"{[m + 1 for m in range(M) if status[m] != kernels.STATUS_OK]}; "
               f"largest delta {np.max(delta):.3g}")
        if strict:
            raise ConvergenceError(msg, delta=float(np.max(delta)), iterations=int(np.max(iters)))
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    a = np.einsum("mab,mb->ma", K[:, 0], zm) + kap[:, 0]
    return a, schedule


def shift_edge_gains(schedule, weights):
    """Warm start for the next sampling instant.

    Drops the law just applied, reuses the remaining ones and appends a
    terminal law from one backward step on the predicted terminal
    cost-to-go. Returns a ``(K, kappa)`` pair.
    """
    K, kap, P, sv = schedule.K, schedule.kappa, schedule.P, schedule.s
    M, T, n, n2 = K.shape
    f, g = edge_blocks(weights.dt, n)
    tail = np.empty((M, n, n2))
    tail_k = np.empty((M, n))
    for m in range(M):
        PT = P[m, T]
        S = weights.R[m] + g.T @ PT @ g
        tail[m] = -np.linalg.solve(S, g.T @ PT @ f)
        tail_k[m] = -np.linalg.solve(S, g.T @ sv[m, T])
    return (np.concatenate([K[:, 1:], tail[:, None]], axis=1),
            np.concatenate([kap[:, 1:], tail_k[:, None]], axis=1))
