"""Communication graph, incidence operators and their Kronecker lifts.

Nodes are indexed ``0..N-1`` internally. Scenario files use 1-based ids and
are converted on load.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class GraphError(ValueError):
    pass


def _components(num_nodes, edges):
    parent = list(range(num_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    groups = {}
    for v in range(num_nodes):
        groups.setdefault(find(v), []).append(v)
    return sorted(groups.values())


@dataclass(frozen=True)
class GraphTopology:
    """Undirected connected graph with a fixed edge orientation.

    ``edges[m] = (source, sink)``; the orientation is the order given.
    """

    num_nodes: int
    edges: tuple
    spatial_dim: int = 2
    edge_weights: tuple = field(default=None)

    def __post_init__(self):
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.num_nodes < 1:
            raise GraphError("num_nodes must be positive")
        if self.spatial_dim < 1:
            raise GraphError("spatial_dim must be positive")
        seen = {}
        for m, (i, j) in enumerate(edges):
            if i == j:
                raise GraphError(f"edge {m + 1} is a self loop on node {i + 1}")
            for v in (i, j):
                if not 0 <= v < self.num_nodes:
                    raise GraphError(f"edge {m + 1} endpoint {v + 1} outside 1..{self.num_nodes}")
            key = frozenset((i, j))
            if key in seen:
                raise GraphError(
                    f"duplicate edge ({i + 1}, {j + 1}): same pair as edge {seen[key] + 1}"
                )
            seen[key] = m
        weights = self.edge_weights
        if weights is None:
            weights = (1.0,) * len(edges)
        weights = tuple(float(w) for w in weights)
        if len(weights) != len(edges):
            raise GraphError("one weight per edge required")
        if any(w <= 0 for w in weights):
            raise GraphError("edge weights must be positive")
        object.__setattr__(self, "edge_weights", weights)
        comps = _components(self.num_nodes, edges)
        if len(comps) > 1:
            listed = [[v + 1 for v in c] for c in comps]
            raise GraphError(f"graph is disconnected; components: {listed}")

    @property
    def num_edges(self):
        return len(self.edges)

    def incident_edges(self, i):
        return [m for m, e in enumerate(self.edges) if i in e]

    def neighbors(self, i):
        out = []
        for s, t in self.edges:
            if s == i:
                out.append(t)
            elif t == i:
                out.append(s)
        return sorted(out)

    def degree(self, i):
        return len(self.incident_edges(i))

    @cached_property
    def operators(self):
        return build_incidence(self)


@dataclass(frozen=True)
class IncidenceOperators:
    D: np.ndarray
    D_lift: np.ndarray
    Phi: np.ndarray
    Pi: np.ndarray


def build_incidence(topology):
    """Oriented incidence matrix ``D`` and its lifts ``D (x) I_n``, ``D^T (x) I_n``."""
    N, M, n = topology.num_nodes, topology.num_edges, topology.spatial_dim
    D = np.zeros((N, M), dtype=int)
    for m, (s, t) in enumerate(topology.edges):
        D[s, m] = 1
        D[t, m] = -1
    eye = np.eye(n)
    ops = IncidenceOperators(
        D=D,
        D_lift=np.kron(D, eye),
        Phi=np.kron(D.T, eye),
        Pi=edge_permutation(M, n) if M else np.zeros((0, 0)),
    )
    for a in (ops.D, ops.D_lift, ops.Phi, ops.Pi):
        a.setflags(write=False)
    return ops


def local_weight_matrix(topology, i, weights=None):
    """Diagonal ``M x M`` matrix with ``weights[m]`` on edges incident to node ``i``."""
    if not 0 <= i < topology.num_nodes:
        raise IndexError(f"node {i} out of range")
    w = np.asarray(topology.edge_weights if weights is None else weights, dtype=float)
    mask = np.zeros(topology.num_edges)
    mask[topology.incident_edges(i)] = 1.0
    return np.diag(w * mask)


def lifted_laplacian(topology, weights=None):
    ops = topology.operators
    W = np.diag(np.asarray(topology.edge_weights if weights is None else weights, dtype=float))
    Wl = np.kron(W, np.eye(topology.spatial_dim))
    return ops.D_lift @ Wl @ ops.D_lift.T


def local_laplacian(topology, i, weights=None):
    """Lifted local Laplacian ``(D (x) I)(W^i (x) I)(D (x) I)^T``."""
    ops = topology.operators
    Wl = np.kron(local_weight_matrix(topology, i, weights), np.eye(topology.spatial_dim))
    return ops.D_lift @ Wl @ ops.D_lift.T


def edge_permutation(M, n):
    """Permutation taking ``[q1, w1, ..., qM, wM]`` to ``[q1..qM, w1..wM]``."""
    if M < 1 or n < 1:
        raise ValueError("M and n must be positive")
    top = np.kron(np.eye(M), np.array([[1.0, 0.0]]))
    bottom = np.kron(np.eye(M), np.array([[0.0, 1.0]]))
    return np.kron(np.vstack([top, bottom]), np.eye(n))


def golden_topology():
    """Four-node, five-edge graph used by the bundled golden scenario."""
    return GraphTopology(4, ((0, 1), (0, 2), (1, 2), (1, 3), (2, 3)), spatial_dim=2)
