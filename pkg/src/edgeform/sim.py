"""Closed-loop receding-horizon simulation and cost accounting."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .edge_game import (
    algorithm1_receding_horizon,
    edge_components,
    edge_state_weight,
    node_to_edge_state,
    relative_inputs,
    shift_edge_gains,
)
from .errors import CollisionError
from .input_mapping import DescentConfig, centralized_map, mapping_residual, run_descent
from .node_game import coupled_sdrde_solve, shift_node_gains

log = logging.getLogger(__name__)


@dataclass
class TrajectoryRecord:
    kind: str
    dt: float
    topology: object
    d: np.ndarray
    states: np.ndarray        # (K+1, 2Nn+1)
    edge_states: np.ndarray   # (K+1, 2Mn)
    rel_inputs_opt: np.ndarray  # (K, M, n) solver relative inputs a*
    inputs: np.ndarray        # (K, N, n) applied node inputs
    inputs_ref: np.ndarray    # (K, N, n) centralized mapping of a*
    safety_radius: float
    collision: dict = field(default=None)
    solver_iterations: list = field(default_factory=list)
    descent_residuals: list = field(default_factory=list)

    @property
    def num_steps(self):
        return self.inputs.shape[0]

    @property
    def times(self):
        return self.dt * np.arange(self.states.shape[0])

    @property
    def rel_inputs(self):
        """Relative inputs actually realized by the applied node inputs."""
        src = [s for s, _ in self.topology.edges]
        dst = [t for _, t in self.topology.edges]
        return self.inputs[:, src] - self.inputs[:, dst]

    def positions(self):
        N, n = self.topology.num_nodes, self.topology.spatial_dim
        return self.states[:, :N * n].reshape(-1, N, n)

    def neighbor_distances(self):
        p = self.positions()
        src = [s for s, _ in self.topology.edges]
        dst = [t for _, t in self.topology.edges]
        return np.linalg.norm(p[:, src] - p[:, dst], axis=-1)

    def formation_error(self):
        """``sum_m |q^m_k|^2`` per recorded state."""
        M, n = self.topology.num_edges, self.topology.spatial_dim
        return np.sum(self.edge_states[:, :M * n] ** 2, axis=1)


@dataclass
class CostReport:
    per_edge: np.ndarray
    label: str = ""

    @property
    def total(self):
        return float(np.sum(self.per_edge))


def step_plant(x, u, dynamics):
    return dynamics.step(x, u)


def _check_collision(x, topology, r, k):
    N, n = topology.num_nodes, topology.spatial_dim
    p = x[:N * n].reshape(N, n)
    for m, (s, t) in enumerate(topology.edges):
        dist = float(np.linalg.norm(p[s] - p[t]))
        if dist <= r:
            return {"step": k, "pair": (s, t), "edge": m, "distance": dist}
    return None


def _finish(record, states, zs, a_opt, u_app, u_ref):
    record.states = np.array(states)
    record.edge_states = np.array(zs)
    n = record.topology.spatial_dim
    record.rel_inputs_opt = np.array(a_opt).reshape(-1, record.topology.num_edges, n)
    record.inputs = np.array(u_app).reshape(-1, record.topology.num_nodes, n)
    record.inputs_ref = np.array(u_ref).reshape(-1, record.topology.num_nodes, n)
    return record


def simulate_edge_controller(scenario, duration=None, descent=None, avoidance=True,
                             strict_collision=True, mapping="distributed", backend=None):
    """Edge-based closed loop: per step solve edge gains, map to node inputs, step the plant."""
    topo = scenario.topology
    dyn = scenario.node_dynamics()
    weights = scenario.edge_weights(avoidance)
    cfg = scenario.descent_config() if descent is None else descent
    M, n, T = topo.num_edges, topo.spatial_dim, scenario.horizon
    K = scenario.num_steps(duration)
    x = scenario.initial_state()
    record = TrajectoryRecord("edge" if avoidance else "edge-no-avoidance", scenario.dt, topo,
                              np.array(scenario.displacements), None, None, None, None, None,
                              scenario.safety_radius)
    states, zs, a_opt, u_app, u_ref = [x], [node_to_edge_state(x, topo, scenario.displacements)], [], [], []
    warm = None
    u_prev = None
    for k in range(K):
        z = zs[-1]
        zm = edge_components(z, M, n)
        a, schedule = algorithm1_receding_horizon(zm, warm, weights, T, scenario.gain_tol,
                                                  scenario.t_max, backend=backend)
        record.solver_iterations.append(schedule.iterations.copy())
        ref = centralized_map(a, topo)
        if mapping == "centralized":
            u = ref
        else:
            init = u_prev if (cfg.warm_start and u_prev is not None) else None
            u, trace = run_descent(a, init, cfg, topo, record_iterates=False, backend=backend)
            record.descent_residuals.append(trace.residuals)
        u_prev = u
        x = step_plant(x, u, dyn)
        states.append(x)
        zs.append(node_to_edge_state(x, topo, scenario.displacements))
        a_opt.append(a)
        u_app.append(u)
        u_ref.append(ref)
        warm = shift_edge_gains(schedule, weights)
        hit = _check_collision(x, topo, scenario.safety_radius, k + 1)
        if hit and record.collision is None:
            record.collision = hit
            log.info("collision at step %d between agents %d and %d", hit["step"], hit["pair"][0] + 1,
                     hit["pair"][1] + 1)
            if strict_collision:
                _finish(record, states, zs, a_opt, u_app, u_ref)
                raise CollisionError(
                    f"agents {hit['pair'][0] + 1} and {hit['pair'][1] + 1} within safety radius at step "
                    f"{hit['step']} (distance {hit['distance']:.4g})",
                    step=hit["step"], pair=hit["pair"], distance=hit["distance"], record=record)
    return _finish(record, states, zs, a_opt, u_app, u_ref)


def simulate_nash_controller(scenario, duration=None, avoidance=True, strict_collision=True,
                             strict_solver=False):
    """Receding-horizon open-loop Nash closed loop on the node system."""
    topo = scenario.topology
    dyn = scenario.node_dynamics()
    weights = scenario.node_weights(avoidance)
    K = scenario.num_steps(duration)
    T = scenario.horizon
    x = scenario.initial_state()
    record = TrajectoryRecord("nash" if avoidance else "nash-no-avoidance", scenario.dt, topo,
                              np.array(scenario.displacements), None, None, None, None, None,
                              scenario.safety_radius)
    states, zs, a_opt, u_app = [x], [node_to_edge_state(x, topo, scenario.displacements)], [], []
    warm = None
    for k in range(K):
        sol = coupled_sdrde_solve(dyn, weights, x, T, warm_gains=warm, tol=scenario.nash_gain_tol,
                                  t_max=scenario.nash_t_max, strict=strict_solver)
        if not sol.converged:
            warnings.warn(f"Nash iteration at step {k} stopped at gain delta {sol.delta:.3g}",
                          RuntimeWarning, stacklevel=2)
        record.solver_iterations.append(sol.iterations)
        u = sol.u[:, 0]
        warm = shift_node_gains(sol)
        x = step_plant(x, u, dyn)
        states.append(x)
        zs.append(node_to_edge_state(x, topo, scenario.displacements))
        a_opt.append(relative_inputs(u, topo))
        u_app.append(u)
        hit = _check_collision(x, topo, scenario.safety_radius, k + 1)
        if hit and record.collision is None:
            record.collision = hit
            if strict_collision:
                _finish(record, states, zs, a_opt, u_app, u_app)
                raise CollisionError(
                    f"agents {hit['pair'][0] + 1} and {hit['pair'][1] + 1} within safety radius at step "
                    f"{hit['step']}", step=hit["step"], pair=hit["pair"], distance=hit["distance"],
                    record=record)
    return _finish(record, states, zs, a_opt, u_app, u_app)


def stage_edge_costs(record, weights):
    """``(K, M)`` per-step costs ``0.5 (z_{k+1}^T Q(z_{k+1}) z_{k+1} + a_k^T R a_k)``.

    The last state is charged with the terminal weight.
    """
    topo = record.topology
    M, n = topo.num_edges, topo.spatial_dim
    a = record.rel_inputs
    K = a.shape[0]
    out = np.zeros((K, M))
    for k in range(K):
        zm = edge_components(record.edge_states[k + 1], M, n)
        for m in range(M):
            Q, _ = edge_state_weight(weights, m, zm[m], terminal=(k + 1 == K))
            out[k, m] = 0.5 * (zm[m] @ Q @ zm[m] + a[k, m] @ weights.R[m] @ a[k, m])
    return out


def edge_cost(record, weights, label=None):
    return CostReport(stage_edge_costs(record, weights).sum(axis=0), label or record.kind)


def min_pairwise_distance(record, all_pairs=False):
    """Minimum distance per pair over the recorded grid, plus the global minimum and when it occurred."""
    p = record.positions()
    if all_pairs:
        N = p.shape[1]
        pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
    else:
        pairs = list(record.topology.edges)
    per_pair = {}
    best = (np.inf, None, None)
    for i, j in pairs:
        dist = np.linalg.norm(p[:, i] - p[:, j], axis=-1)
        k = int(np.argmin(dist))
        per_pair[(i, j)] = float(dist[k])
        if dist[k] < best[0]:
            best = (float(dist[k]), (i, j), k)
    return {"per_pair": per_pair, "min": best[0], "pair": best[1], "step": best[2],
            "time": None if best[2] is None else best[2] * record.dt}


def compare_costs(scenario, duration=None, backend=None):
    """Edge-direct vs Nash-mapped per-edge costs, both evaluated with the edge cost."""
    weights = scenario.edge_weights()
    direct = simulate_edge_controller(scenario, duration, backend=backend)
    nash = simulate_nash_controller(scenario, duration)
    return (edge_cost(direct, weights, "edge"), edge_cost(nash, weights, "nash"), direct, nash)


def first_interval_descent(scenario, iterations=200, gamma=None, backend=None):
    """Relative inputs of the first interval mapped both ways.

    Returns ``(a, u_ref, trace, reference_residual)``; the distributed trace
    runs exactly ``iterations`` rounds from zero.
    """
    topo = scenario.topology
    M, n = topo.num_edges, topo.spatial_dim
    zm = edge_components(scenario.initial_edge_state(), M, n)
    a, _ = algorithm1_receding_horizon(zm, None, scenario.edge_weights(), scenario.horizon,
                                       scenario.gain_tol, scenario.t_max, backend=backend)
    u_ref = centralized_map(a, topo)
    cfg = DescentConfig(gamma=gamma if gamma is not None else scenario.gamma, tol=0.0,
                        l_max=int(iterations), warm_start=False)
    _, trace = run_descent(a, None, cfg, topo, record_iterates=True)
    return a, u_ref, trace, mapping_residual(u_ref, a, topo)
