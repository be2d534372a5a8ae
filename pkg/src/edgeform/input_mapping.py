"""Mapping relative edge inputs back to physical node inputs.

``centralized_map`` is the minimum-norm least-squares reference. The
distributed route runs synchronous steepest-descent rounds in which each
node only touches its own value, its neighbors' values and the relative
inputs of its incident edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels


@dataclass(frozen=True)
class DescentConfig:
    gamma: float | None = None     # None -> auto_fraction * gamma_max
    tol: float = 1e-10
    l_max: int = 10
    warm_start: bool = True
    auto_fraction: float = 0.9

    def __post_init__(self):
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("learning rate must be positive")
        if self.l_max < 0:
            raise ValueError("l_max must be nonnegative")

    def resolve_gamma(self, topology):
        if self.gamma is not None:
            return float(self.gamma)
        return self.auto_fraction * learning_rate_bound(topology)


@dataclass
class DescentTrace:
    iterates: list
    residuals: np.ndarray
    converged: bool
    iterations: int
    gamma: float = field(default=None)

    def to_rows(self):
        """``(iteration, residual, u^1_1, u^1_2, ...)`` rows for export."""
        rows = []
        for l, (res, u) in enumerate(zip(self.residuals, self.iterates)):
            rows.append([l, float(res)] + [float(v) for v in np.ravel(u)])
        return rows


def centralized_map(a, topology):
    """``pinv(Phi) a`` via SVD-based least squares; returns ``(N, n)``."""
    N, n = topology.num_nodes, topology.spatial_dim
    a = np.asarray(a, dtype=float)
    if topology.num_edges == 0:
        return np.zeros((N, n))
    sol, *_ = np.linalg.lstsq(topology.operators.Phi, a.ravel(), rcond=None)
    return sol.reshape(N, n)


def learning_rate_bound(topology):
    """``1 / lambda_max(Phi^T Phi)``; ``Phi^T Phi`` is the lifted unit-weight Laplacian."""
    if topology.num_edges == 0:
        return np.inf
    D = topology.operators.D.astype(float)
    lam = np.linalg.eigvalsh(D @ D.T).max()
    return 1.0 / lam


def local_update(i, u_i, neighbor_values, incident, gamma):
    """One node's update from data it can see.

    ``neighbor_values`` maps neighbor id to its current value; ``incident`` is
    a list of ``(j, a_ij)`` with ``a_ij`` the relative input oriented from
    ``i`` to ``j``.
    """
    acc = np.zeros_like(u_i)
    for j, a_ij in incident:
        acc = acc + (u_i - neighbor_values[j] - a_ij)
    return u_i - 2.0 * gamma * acc


def _incident_view(topology, i, a):
    out = []
    for m, (s, t) in enumerate(topology.edges):
        if s == i:
            out.append((t, a[m]))
        elif t == i:
            out.append((s, -a[m]))
    return out


def descent_step(u, a, gamma, topology):
    """One synchronous round (receive -> update -> broadcast) for all nodes."""
    u = np.asarray(u, dtype=float)
    a = np.asarray(a, dtype=float)
    new = np.empty_like(u)
    for i in range(topology.num_nodes):
        incident = _incident_view(topology, i, a)
        received = {j: u[j] for j, _ in incident}
        new[i] = local_update(i, u[i], received, incident, gamma)
    return new


def matrix_descent_step(u, a, gamma, topology):
    """``(I - 2 gamma Phi^T Phi) u + 2 gamma Phi^T a`` in stacked form."""
    Phi = topology.operators.Phi
    u = np.asarray(u, dtype=float)
    flat = u.ravel()
    out = flat - 2.0 * gamma * Phi.T @ (Phi @ flat) + 2.0 * gamma * Phi.T @ np.ravel(a)
    return out.reshape(u.shape)


def mapping_residual(u, a, topology):
    return float(np.linalg.norm(topology.operators.Phi @ np.ravel(u) - np.ravel(a)))


def _csr(topology):
    ptr = [0]
    idx = []
    for i in range(topology.num_nodes):
        inc = topology.incident_edges(i)
        idx.extend(inc)
        ptr.append(len(idx))
    return np.array(ptr, dtype=np.int64), np.array(idx, dtype=np.int64)


def run_descent(a, u_init, config, topology, record_iterates=True, backend=None):
    """Iterate descent rounds until the residual is at most ``tol`` or ``l_max`` rounds ran."""
    a = np.asarray(a, dtype=float).reshape(topology.num_edges, topology.spatial_dim)
    u = np.zeros((topology.num_nodes, topology.spatial_dim)) if u_init is None else np.array(u_init, float)
    gamma = config.resolve_gamma(topology)
    if record_iterates:
        iterates = [u.copy()]
        res = [mapping_residual(u, a, topology)]
        while len(res) - 1 < config.l_max and res[-1] > config.tol:
            u = descent_step(u, a, gamma, topology)
            iterates.append(u.copy())
            res.append(mapping_residual(u, a, topology))
        res = np.array(res)
        rounds = len(res) - 1
    else:
        ptr, inc = _csr(topology)
        src = np.array([s for s, _ in topology.edges], dtype=np.int64)
        dst = np.array([t for _, t in topology.edges], dtype=np.int64)
        u, res, rounds = kernels.descent_rounds(u, a, src, dst, ptr, inc, float(gamma),
                                                int(config.l_max), float(config.tol), backend=backend)
        iterates = [u.copy()]
    trace = DescentTrace(iterates, np.asarray(res), bool(res[-1] <= config.tol), int(rounds), gamma)
    return u, trace
