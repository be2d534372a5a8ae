"""Coupled node-based formation game.

State layout is ``x = [p^1..p^N, 1, v^1..v^N]``; the constant entry carries the
formation offsets into the quadratic cost. Open-loop Nash gains come from a
coupled state-dependent Riccati recursion solved by repeated
predict / backward-sweep passes until the gains settle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import AvoidanceRegionError, ConvergenceError, SingularLambdaError
from .graph import local_weight_matrix
from .numerics import (
    DEFAULT_EPSILON,
    gradient_correction_matrix,
    smoothed_sq_norm,
    smoothed_sq_norm_grad,
)

LAMBDA_COND_LIMIT = 1e12


@dataclass(frozen=True)
class NodeDynamics:
    num_nodes: int
    spatial_dim: int
    dt: float
    F: np.ndarray
    G: tuple

    @property
    def dim(self):
        return 2 * self.num_nodes * self.spatial_dim + 1

    @property
    def offset_index(self):
        return self.num_nodes * self.spatial_dim

    def pos_slice(self, i):
        n = self.spatial_dim
        return slice(i * n, (i + 1) * n)

    def vel_slice(self, i):
        n = self.spatial_dim
        base = self.offset_index + 1
        return slice(base + i * n, base + (i + 1) * n)

    def step(self, x, inputs):
        """``F x + sum_i G^i u^i`` with ``inputs`` shaped ``(N, n)``."""
        out = self.F @ x
        for Gi, ui in zip(self.G, np.asarray(inputs, dtype=float)):
            out = out + Gi @ ui
        return out


def build_node_dynamics(topology, dt):
    if not dt > 0:
        raise ValueError("sampling time must be positive")
    N, n = topology.num_nodes, topology.spatial_dim
    Nn = N * n
    dim = 2 * Nn + 1
    F = np.eye(dim)
    F[:Nn, Nn + 1:] = dt * np.eye(Nn)
    G = []
    for i in range(N):
        ghat = np.kron(np.eye(N)[:, [i]], np.eye(n))
        Gi = np.vstack([0.5 * dt * dt * ghat, np.zeros((1, n)), dt * ghat])
        G.append(Gi)
    return NodeDynamics(N, n, float(dt), F, tuple(G))


def node_state(positions, velocities):
    p = np.asarray(positions, dtype=float).ravel()
    v = np.asarray(velocities, dtype=float).ravel()
    return np.concatenate([p, [1.0], v])


def split_node_state(x, num_nodes, spatial_dim):
    Nn = num_nodes * spatial_dim
    x = np.asarray(x, dtype=float)
    return x[:Nn].reshape(num_nodes, spatial_dim), x[Nn + 1:].reshape(num_nodes, spatial_dim)


@dataclass(frozen=True)
class NodeCostWeights:
    """Formation and collision weights for every player of the node game.

    ``d[m]`` is the desired ``p^source - p^sink`` for edge ``m``. ``beta`` and
    ``terminal_beta`` are per node; ``terminal_alpha`` is per edge and
    defaults to the topology's edge weights.
    """

    topology: object
    dt: float
    d: np.ndarray
    r: float
    beta: np.ndarray
    R: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    terminal_alpha: np.ndarray = field(default=None)
    terminal_beta: np.ndarray = field(default=None)

    def __post_init__(self):
        topo = self.topology
        N, M, n = topo.num_nodes, topo.num_edges, topo.spatial_dim
        d = np.asarray(self.d, dtype=float).reshape(M, n)
        beta = np.broadcast_to(np.asarray(self.beta, dtype=float), (N,)).copy()
        R = np.asarray(self.R, dtype=float)
        if R.ndim == 0:
            R = R * np.eye(n)
        if R.ndim == 2:
            R = np.broadcast_to(R, (N, n, n)).copy()
        for Ri in R:
            if not np.allclose(Ri, Ri.T) or np.linalg.eigvalsh(Ri).min() <= 0:
                raise ValueError("input weights must be symmetric positive definite")
        ta = self.terminal_alpha
        ta = np.array(topo.edge_weights) if ta is None else np.broadcast_to(np.asarray(ta, float), (M,)).copy()
        tb = self.terminal_beta
        tb = beta.copy() if tb is None else np.broadcast_to(np.asarray(tb, float), (N,)).copy()
        for name, val in (("d", d), ("beta", beta), ("R", R), ("terminal_alpha", ta), ("terminal_beta", tb)):
            object.__setattr__(self, name, val)

    @property
    def alpha(self):
        return np.array(self.topology.edge_weights)

    @cached_property
    def d_stacked(self):
        return self.d.ravel()

    @cached_property
    def edge_forms(self):
        """Per-edge ``B_m`` with ``x^T B_m x = dt (|p_s - p_t - d_m|^2 + |v_s - v_t|^2)``."""
        topo = self.topology
        N, n = topo.num_nodes, topo.spatial_dim
        Nn = N * n
        dim = 2 * Nn + 1
        forms = []
        for m, (s, t) in enumerate(topo.edges):
            Eq = np.zeros((n, dim))
            Ew = np.zeros((n, dim))
            Eq[:, s * n:(s + 1) * n] = np.eye(n)
            Eq[:, t * n:(t + 1) * n] = -np.eye(n)
            Eq[:, Nn] = -self.d[m]
            Ew[:, Nn + 1 + s * n:Nn + 1 + (s + 1) * n] = np.eye(n)
            Ew[:, Nn + 1 + t * n:Nn + 1 + (t + 1) * n] = -np.eye(n)
            forms.append(self.dt * (Eq.T @ Eq + Ew.T @ Ew))
        return np.array(forms)


def _block_weight_matrix(weights, W):
    """``dt * [[L, -D W d, 0], [., d^T W d, 0], [0, 0, L]]`` for lifted diagonal ``W``."""
    topo = weights.topology
    n = topo.spatial_dim
    Dl = topo.operators.D_lift
    Wl = np.kron(W, np.eye(n))
    L = Dl @ Wl @ Dl.T
    off = -Dl @ Wl @ weights.d_stacked
    cst = weights.d_stacked @ Wl @ weights.d_stacked
    Nn = L.shape[0]
    Q = np.zeros((2 * Nn + 1, 2 * Nn + 1))
    Q[:Nn, :Nn] = L
    Q[:Nn, Nn] = off
    Q[Nn, :Nn] = off
    Q[Nn, Nn] = cst
    Q[Nn + 1:, Nn + 1:] = L
    return weights.dt * Q


def build_Q_alpha(weights, i, terminal=False):
    alpha = weights.terminal_alpha if terminal else weights.alpha
    return _block_weight_matrix(weights, local_weight_matrix(weights.topology, i, alpha))


def beta_edge_weights(weights, i, x, terminal=False):
    """Diagonal of ``W^i_beta(x)``: ``beta^i / (smoothed |p^i - p^j|^2 - r^2)`` on incident edges."""
    topo = weights.topology
    n = topo.spatial_dim
    b = weights.terminal_beta[i] if terminal else weights.beta[i]
    w = np.zeros(topo.num_edges)
    if b == 0:
        return w
    r2 = weights.r ** 2
    for m in topo.incident_edges(i):
        s, t = topo.edges[m]
        y = x[s * n:(s + 1) * n] - x[t * n:(t + 1) * n]
        dist = float(np.linalg.norm(y))
        den = smoothed_sq_norm(y, weights.epsilon) - r2
        if dist <= weights.r or den <= 0:
            raise AvoidanceRegionError(
                f"avoidance region violated: agents {s + 1} and {t + 1} at distance {dist:.6g} "
                f"(safety radius {weights.r})",
                pair=(s, t), edge=m, distance=dist,
            )
        w[m] = b / den
    return w


def build_Q_beta(weights, i, x, terminal=False):
    w = beta_edge_weights(weights, i, x, terminal)
    return _block_weight_matrix(weights, np.diag(w))


def _beta_weight_grads(weights, i, x, terminal=False):
    """``{m: (dw_m/dp^source)}``; the sink derivative is the negative."""
    topo = weights.topology
    n = topo.spatial_dim
    b = weights.terminal_beta[i] if terminal else weights.beta[i]
    out = {}
    if b == 0:
        return out
    w = beta_edge_weights(weights, i, x, terminal)
    for m in topo.incident_edges(i):
        s, t = topo.edges[m]
        y = x[s * n:(s + 1) * n] - x[t * n:(t + 1) * n]
        den = b / w[m]
        out[m] = -b * smoothed_sq_norm_grad(y, weights.epsilon) / den**2
    return out


def dQ_beta(weights, i, x, j, terminal=False):
    """``d Q^i_beta / d p^j``, shaped ``(n, dim, dim)``; index 0 is the coordinate."""
    topo = weights.topology
    n = topo.spatial_dim
    dim = 2 * topo.num_nodes * n + 1
    out = np.zeros((n, dim, dim))
    for m, grad in _beta_weight_grads(weights, i, x, terminal).items():
        s, t = topo.edges[m]
        if j == s:
            sign = 1.0
        elif j == t:
            sign = -1.0
        else:
            continue
        Bm = weights.edge_forms[m]
        out += sign * grad[:, None, None] * Bm[None, :, :]
    return out


def state_weight(weights, i, x, terminal=False):
    """Return ``(Q^i(x), g)`` where ``Q x + g`` is the gradient of ``0.5 x^T Q(x) x``."""
    topo = weights.topology
    n = topo.spatial_dim
    Q = build_Q_alpha(weights, i, terminal) + build_Q_beta(weights, i, x, terminal)
    g = np.zeros_like(x, dtype=float)
    for m, grad in _beta_weight_grads(weights, i, x, terminal).items():
        s, t = topo.edges[m]
        quad = float(x @ weights.edge_forms[m] @ x)
        g[s * n:(s + 1) * n] += 0.5 * quad * grad
        g[t * n:(t + 1) * n] -= 0.5 * quad * grad
    return Q, g


@dataclass
class NodeGameSolution:
    P: np.ndarray          # (N, T+1, dim, dim)
    K: np.ndarray          # (N, T, n, dim)
    Lambda: np.ndarray     # (T, dim, dim)
    x: np.ndarray          # (T+1, dim)
    u: np.ndarray          # (N, T, n)
    costates: np.ndarray   # (N, T, dim), costate after step k
    iterations: int
    delta: float
    converged: bool
    deltas: list

    @property
    def horizon(self):
        return self.u.shape[1]


def _backward_sweep(F, G, Rinv, weight_fn, xs, N):
    T = xs.shape[0] - 1
    dim = F.shape[0]
    n = G[0].shape[1]
    P = np.empty((N, T + 1, dim, dim))
    K = np.empty((N, T, n, dim))
    Lam = np.empty((T, dim, dim))
    for i in range(N):
        Q, g = weight_fn(i, xs[T], True)
        P[i, T] = Q + gradient_correction_matrix(g, xs[T])
    S = [G[j] @ Rinv[j] @ G[j].T for j in range(N)]
    eye = np.eye(dim)
    for k in range(T - 1, -1, -1):
        Lk = eye + sum(S[j] @ P[j, k + 1] for j in range(N))
        Lam[k] = Lk
        cond = float(np.linalg.cond(Lk))
        if not cond < LAMBDA_COND_LIMIT:
            raise SingularLambdaError(
                f"Lambda at step {k} is numerically singular (cond={cond:.3g})",
                step=k, condition=cond,
            )
        Y = np.linalg.solve(Lk, F)
        for i in range(N):
            K[i, k] = -Rinv[i] @ G[i].T @ P[i, k + 1] @ Y
            Q, g = weight_fn(i, xs[k], False)
            P[i, k] = F.T @ P[i, k + 1] @ Y + Q + gradient_correction_matrix(g, xs[k])
    return P, K, Lam


def solve_coupled(F, G, R, weight_fn, x0, T, warm_gains=None, tol=1e-6, t_max=30, strict=True):
    """Open-loop Nash solution of a (possibly state-dependent) LQ game.

    ``weight_fn(i, x, terminal) -> (Q, g)`` supplies player ``i``'s state
    weight at ``x`` and the extra gradient term of its quadratic form. Costs
    are charged on ``x_1..x_T``, with the terminal weight at ``x_T``.
    """
    if T < 1:
        raise ValueError("horizon must be at least 1")
    x0 = np.asarray(x0, dtype=float)
    N = len(G)
    n = G[0].shape[1]
    dim = F.shape[0]
    R = np.asarray(R, dtype=float)
    Rinv = np.array([np.linalg.inv(Ri) for Ri in R])
    K = np.zeros((N, T, n, dim)) if warm_gains is None else np.array(warm_gains, dtype=float)
    deltas = []
    converged = False
    it = 0
    while it < t_max:
        it += 1
        xs = _rollout(F, G, K, x0)
        P, K_new, Lam = _backward_sweep(F, G, Rinv, weight_fn, xs, N)
        delta = float(np.max(np.linalg.norm(K_new - K, axis=(-2, -1))))
        deltas.append(delta)
        K = K_new
        if delta <= tol:
            converged = True
            break
    if not converged and strict:
        raise ConvergenceError(
            f"coupled Riccati iteration did not converge in {t_max} passes (last delta {deltas[-1]:.3g})",
            delta=deltas[-1], iterations=it,
        )
    # closed loop x_{k+1} = Lambda_k^{-1} F x_k with the final matrices
    x = np.empty((T + 1, dim))
    x[0] = x0
    u = np.empty((N, T, n))
    lam = np.empty((N, T, dim))
    for k in range(T):
        x[k + 1] = np.linalg.solve(Lam[k], F @ x[k])
        for i in range(N):
            u[i, k] = K[i, k] @ x[k]
            lam[i, k] = F.T @ P[i, k + 1] @ x[k + 1]
    return NodeGameSolution(P, K, Lam, x, u, lam, it, deltas[-1], converged, deltas)


def _rollout(F, G, K, x0):
    N, T = K.shape[:2]
    xs = np.empty((T + 1, x0.size))
    xs[0] = x0
    for k in range(T):
        A = F + sum(G[i] @ K[i, k] for i in range(N))
        xs[k + 1] = A @ xs[k]
    return xs


def coupled_sdrde_solve(dynamics, weights, x0, T, warm_gains=None, tol=1e-6, t_max=30, strict=True):
    def weight_fn(i, x, terminal):
        return state_weight(weights, i, x, terminal)

    return solve_coupled(dynamics.F, dynamics.G, weights.R, weight_fn, x0, T,
                         warm_gains=warm_gains, tol=tol, t_max=t_max, strict=strict)


def shift_node_gains(solution):
    """Warm start for the next sampling instant: drop the first gain, repeat the last."""
    K = solution.K
    return np.concatenate([K[:, 1:], K[:, -1:]], axis=1)


def verify_costate_identity(solution, F, G, R, weight_fn, fd_step=1e-6):
    """Residuals of the costate identity and of Hamiltonian stationarity.

    Costates are rebuilt by the backward adjoint recursion
    ``lam_k = F^T (lam_{k+1} + grad phi(x_{k+1}))``, ``lam_{T-1} = F^T grad phi_T(x_T)``
    and compared with ``F^T P_{k+1} x_{k+1}``. Stationarity is checked by
    central differences of the stage Hamiltonian in each player's input,
    using only values of ``0.5 x^T Q(x) x`` (no analytic derivative).
    """
    x, u = solution.x, solution.u
    N, T = u.shape[:2]
    R = np.asarray(R, dtype=float)
    lam = np.zeros((N, T, F.shape[0]))
    for i in range(N):
        nxt = np.zeros(F.shape[0])
        for k in range(T - 1, -1, -1):
            Q, g = weight_fn(i, x[k + 1], k + 1 == T)
            nxt = F.T @ (nxt + Q @ x[k + 1] + g)
            lam[i, k] = nxt
    costate_res = float(np.max(np.abs(lam - solution.costates)))
    scale = float(max(1.0, np.max(np.abs(lam))))

    def phi(i, xx, terminal):
        Q, _ = weight_fn(i, xx, terminal)
        return 0.5 * xx @ Q @ xx

    stat = 0.0
    for i in range(N):
        for k in range(T):
            lam_next = lam[i, k + 1] if k + 1 < T else np.zeros(F.shape[0])
            base = F @ x[k] + sum(G[j] @ u[j, k] for j in range(N) if j != i)

            def ham(v):
                xn = base + G[i] @ v
                return phi(i, xn, k + 1 == T) + 0.5 * v @ R[i] @ v + lam_next @ xn

            for c in range(u.shape[2]):
                e = np.zeros(u.shape[2])
                e[c] = fd_step
                grad = (ham(u[i, k] + e) - ham(u[i, k] - e)) / (2 * fd_step)
                stat = max(stat, abs(grad))
    return {
        "costate_residual": costate_res,
        "costate_residual_relative": costate_res / scale,
        "stationarity_residual": stat,
    }
