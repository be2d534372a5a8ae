"""Scenario description, YAML loading and writing.

Files use 1-based node ids. Every optional field gets its default filled in
on load, so ``to_dict`` always yields the fully resolved configuration.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .edge_game import EdgeCostWeights, build_edge_dynamics, node_to_edge_state
from .graph import GraphError, GraphTopology
from .input_mapping import DescentConfig, learning_rate_bound
from .node_game import NodeCostWeights, build_node_dynamics, node_state


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    positions: tuple
    velocities: tuple
    edges: tuple
    displacements: tuple
    name: str = "scenario"
    spatial_dim: int = 2
    dt: float = 0.1
    horizon: int = 10
    duration: float = 7.0
    safety_radius: float = 0.5
    epsilon: float = 0.1
    alpha: tuple = field(default=None)
    beta_edge: tuple = field(default=None)
    beta_node: tuple = field(default=None)
    input_weight: float = 1.0
    terminal_alpha: tuple = field(default=None)
    terminal_beta_edge: tuple = field(default=None)
    terminal_beta_node: tuple = field(default=None)
    t_max: int = 30
    gain_tol: float = 1e-6
    nash_t_max: int = 30
    nash_gain_tol: float = 1e-6
    gamma: float = field(default=None)
    l_max: int = 10
    descent_tol: float = 1e-10
    warm_start: bool = True

    def __post_init__(self):
        n = int(self.spatial_dim)
        pos = _matrix(self.positions, n, "positions")
        vel = _matrix(self.velocities, n, "velocities")
        if len(pos) != len(vel):
            raise ScenarioError("positions and velocities must list the same nodes")
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        disp = _matrix(self.displacements, n, "displacements")
        if len(disp) != len(edges):
            raise ScenarioError("one displacement per edge required")
        M, N = len(edges), len(pos)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "displacements", disp)
        for name, size, default in (("alpha", M, 1.0), ("beta_edge", M, 1.0), ("beta_node", N, 1.0)):
            object.__setattr__(self, name, _vector(getattr(self, name), size, default, name))
        object.__setattr__(self, "terminal_alpha", _vector(self.terminal_alpha, M, None, "terminal_alpha") or self.alpha)
        object.__setattr__(self, "terminal_beta_edge",
                           _vector(self.terminal_beta_edge, M, None, "terminal_beta_edge") or self.beta_edge)
        object.__setattr__(self, "terminal_beta_node",
                           _vector(self.terminal_beta_node, N, None, "terminal_beta_node") or self.beta_node)
        for name in ("dt", "duration", "safety_radius", "epsilon", "input_weight", "gain_tol",
                     "nash_gain_tol", "descent_tol"):
            val = float(getattr(self, name))
            if not (val > 0 and math.isfinite(val)):
                raise ScenarioError(f"{name} must be a positive finite number")
            object.__setattr__(self, name, val)
        for name in ("horizon", "t_max", "nash_t_max", "l_max"):
            val = getattr(self, name)
            if int(val) != val or int(val) < (0 if name == "l_max" else 1):
                raise ScenarioError(f"{name} must be a positive integer")
            object.__setattr__(self, name, int(val))
        if self.gamma is not None:
            object.__setattr__(self, "gamma", float(self.gamma))
        try:
            topo = self.topology
        except GraphError as exc:
            raise ScenarioError(str(exc)) from exc
        self._check_initial_separation(topo)

    def _check_initial_separation(self, topo):
        p = np.array(self.positions)
        nbr = {frozenset(e) for e in topo.edges}
        for i in range(len(p)):
            for j in range(i + 1, len(p)):
                dist = float(np.linalg.norm(p[i] - p[j]))
                if dist <= self.safety_radius:
                    if frozenset((i, j)) in nbr:
                        raise ScenarioError(
                            f"initial_conditions: neighbors {i + 1} and {j + 1} start {dist:.4g} apart, "
                            f"inside safety radius {self.safety_radius}")
                    warnings.warn(f"non-neighbors {i + 1} and {j + 1} start inside the safety radius",
                                  RuntimeWarning, stacklevel=3)

    @property
    def topology(self):
        return GraphTopology(len(self.positions), self.edges, self.spatial_dim, self.alpha)

    @property
    def num_nodes(self):
        return len(self.positions)

    @property
    def num_edges(self):
        return len(self.edges)

    def num_steps(self, duration=None):
        dur = self.duration if duration is None else float(duration)
        return int(round(dur / self.dt))

    def initial_state(self):
        return node_state(self.positions, self.velocities)

    def initial_edge_state(self):
        return node_to_edge_state(self.initial_state(), self.topology, self.displacements)

    def node_dynamics(self):
        return build_node_dynamics(self.topology, self.dt)

    def edge_dynamics(self):
        return build_edge_dynamics(self.num_edges, self.spatial_dim, self.dt)

    def edge_weights(self, avoidance=True):
        w = EdgeCostWeights(self.dt, self.alpha, self.beta_edge, self.displacements, self.safety_radius,
                            self.input_weight, self.epsilon, self.terminal_alpha, self.terminal_beta_edge)
        return w if avoidance else w.without_avoidance()

    def node_weights(self, avoidance=True):
        beta = self.beta_node if avoidance else (0.0,) * self.num_nodes
        tbeta = self.terminal_beta_node if avoidance else (0.0,) * self.num_nodes
        return NodeCostWeights(self.topology, self.dt, self.displacements, self.safety_radius, beta,
                               self.input_weight, self.epsilon, self.terminal_alpha, tbeta)

    def descent_config(self):
        return DescentConfig(self.gamma, self.descent_tol, self.l_max, self.warm_start)

    def resolved_gamma(self):
        return self.gamma if self.gamma is not None else 0.9 * learning_rate_bound(self.topology)

    def with_overrides(self, **kw):
        return replace(self, **kw)

    def to_dict(self):
        """Fully resolved configuration in file layout (1-based ids)."""
        return {
            "name": self.name,
            "spatial_dim": self.spatial_dim,
            "dt": self.dt,
            "horizon": self.horizon,
            "duration": self.duration,
            "safety_radius": self.safety_radius,
            "epsilon": self.epsilon,
            "input_weight": self.input_weight,
            "nodes": [
                {"id": i + 1, "position": list(p), "velocity": list(v), "beta": b, "terminal_beta": tb}
                for i, (p, v, b, tb) in enumerate(
                    zip(self.positions, self.velocities, self.beta_node, self.terminal_beta_node))
            ],
            "edges": [
                {"source": s + 1, "sink": t + 1, "displacement": list(d), "alpha": a, "beta": b,
                 "terminal_alpha": ta, "terminal_beta": tb}
                for (s, t), d, a, b, ta, tb in zip(self.edges, self.displacements, self.alpha,
                                                   self.beta_edge, self.terminal_alpha,
                                                   self.terminal_beta_edge)
            ],
            "solver": {"t_max": self.t_max, "gain_tol": self.gain_tol,
                       "nash_t_max": self.nash_t_max, "nash_gain_tol": self.nash_gain_tol},
            "descent": {"gamma": float(self.resolved_gamma()), "gamma_auto": self.gamma is None,
                        "l_max": self.l_max, "tol": self.descent_tol, "warm_start": self.warm_start},
        }


def _matrix(rows, n, name):
    try:
        out = tuple(tuple(float(v) for v in row) for row in rows)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{name}: expected a list of numeric vectors") from exc
    for k, row in enumerate(out):
        if len(row) != n:
            raise ScenarioError(f"{name}[{k + 1}] has dimension {len(row)}, expected {n}")
        if not all(math.isfinite(v) for v in row):
            raise ScenarioError(f"{name}[{k + 1}] is not finite")
    return out


def _vector(vals, size, default, name):
    if vals is None:
        return None if default is None else (float(default),) * size
    if np.isscalar(vals):
        vals = [vals] * size
    vals = tuple(float(v) for v in vals)
    if len(vals) != size:
        raise ScenarioError(f"{name}: expected {size} values, got {len(vals)}")
    if any(v < 0 for v in vals):
        raise ScenarioError(f"{name}: values must be nonnegative")
    return vals


_TOP_KEYS = {"name", "spatial_dim", "dt", "horizon", "duration", "safety_radius", "epsilon",
             "input_weight", "nodes", "edges", "solver", "descent"}


def scenario_from_dict(doc):
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ScenarioError(f"unknown field(s): {sorted(unknown)}")
    for key in ("nodes", "edges"):
        if key not in doc:
            raise ScenarioError(f"missing required field '{key}'")
    nodes = sorted(doc["nodes"], key=lambda nd: int(nd["id"]))
    ids = [int(nd["id"]) for nd in nodes]
    if ids != list(range(1, len(ids) + 1)):
        raise ScenarioError(f"nodes: ids must be 1..N without gaps, got {ids}")
    n = int(doc.get("spatial_dim", 2))
    kw = {}
    try:
        kw["positions"] = [nd["position"] for nd in nodes]
        kw["velocities"] = [nd.get("velocity", [0.0] * n) for nd in nodes]
        edges = doc["edges"]
        kw["edges"] = [(int(e["source"]) - 1, int(e["sink"]) - 1) for e in edges]
        kw["displacements"] = [e["displacement"] for e in edges]
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"missing node/edge field: {exc}") from exc
    for key, src, field_ in (("alpha", edges, "alpha"), ("beta_edge", edges, "beta"),
                             ("terminal_alpha", edges, "terminal_alpha"),
                             ("terminal_beta_edge", edges, "terminal_beta"),
                             ("beta_node", nodes, "beta"), ("terminal_beta_node", nodes, "terminal_beta")):
        vals = [item.get(field_) for item in src]
        if all(v is not None for v in vals):
            kw[key] = vals
        elif any(v is not None for v in vals):
            raise ScenarioError(f"'{field_}' must be given for all or none of the {'edges' if src is edges else 'nodes'}")
    for key in ("name", "spatial_dim", "dt", "horizon", "duration", "safety_radius", "epsilon", "input_weight"):
        if key in doc:
            kw[key] = doc[key]
    solver = doc.get("solver") or {}
    for key in ("t_max", "gain_tol", "nash_t_max", "nash_gain_tol"):
        if key in solver:
            kw[key] = solver[key]
    descent = doc.get("descent") or {}
    auto = descent.get("gamma_auto", False)
    gamma = descent.get("gamma", "auto")
    if not auto and gamma not in (None, "auto"):
        kw["gamma"] = gamma
    for key, dst in (("l_max", "l_max"), ("tol", "descent_tol"), ("warm_start", "warm_start")):
        if key in descent:
            kw[dst] = descent[key]
    try:
        return Scenario(**kw)
    except GraphError as exc:
        raise ScenarioError(str(exc)) from exc


def load_scenario(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    return loads_scenario(text)


def loads_scenario(text):
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ScenarioError(f"parse error{where}: {exc}") from exc
    return scenario_from_dict(doc)


def dumps_scenario(scenario):
    buf = io.StringIO()
    yaml.safe_dump(scenario.to_dict(), buf, sort_keys=False, default_flow_style=None)
    return buf.getvalue()


def write_scenario(scenario, path):
    Path(path).write_text(dumps_scenario(scenario), encoding="utf-8")


def golden_scenario_path():
    return resources.files("edgeform") / "data" / "golden.yaml"


def golden_scenario():
    return loads_scenario(golden_scenario_path().read_text(encoding="utf-8"))


SCENARIO_FIELDS = tuple(f.name for f in fields(Scenario))
