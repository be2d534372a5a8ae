"""Tabular and JSON exports of simulation records.

Every CSV starts with ``#`` lines holding the resolved scenario, then a
header row. Column layouts:

- ``trajectory.csv``: ``k, t, snapshot, p1_x, p1_y, ..., pN_x, pN_y``
- ``distances.csv``: ``k, t, d_<i>_<j>`` per neighbor pair, ``r``
- ``inputs.csv``: ``k, t, u<i>_<c>`` (applied), ``u<i>_<c>_ref`` (centralized)
- ``descent.csv``: ``iteration, residual, residual_ref, u<i>_<c>``
- ``costs.csv``: ``edge, source, sink, J_edge, J_nash`` and a ``total`` row

Per-step tables have one row per sampling interval ``k = 0..K-1``.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .scenario import dumps_scenario
from .sim import min_pairwise_distance

AXES = "xyzw"


class ExportError(RuntimeError):
    pass


def config_header(scenario, extra=None):
    lines = ["# " + line for line in dumps_scenario(scenario).rstrip("\n").split("\n")]
    for key, val in (extra or {}).items():
        lines.append(f"# {key}: {val}")
    return lines


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def csv_text(header_lines, columns, rows):
    out = list(header_lines)
    out.append(",".join(columns))
    for row in rows:
        out.append(",".join(_fmt(v) for v in row))
    return "\n".join(out) + "\n"


def _axis(c):
    return AXES[c] if c < len(AXES) else str(c + 1)


def trajectory_table(record):
    N, n = record.topology.num_nodes, record.topology.spatial_dim
    K = record.num_steps
    pos = record.positions()[:K]
    per_second = max(1, int(round(1.0 / record.dt)))
    cols = ["k", "t", "snapshot"] + [f"p{i + 1}_{_axis(c)}" for i in range(N) for c in range(n)]
    rows = [[k, k * record.dt, int(k % per_second == 0)] + list(pos[k].ravel()) for k in range(K)]
    return cols, rows


def distance_table(record):
    K = record.num_steps
    dist = record.neighbor_distances()[:K]
    cols = ["k", "t"] + [f"d_{s + 1}_{t + 1}" for s, t in record.topology.edges] + ["r"]
    rows = [[k, k * record.dt] + list(dist[k]) + [record.safety_radius] for k in range(K)]
    return cols, rows


def input_table(record):
    N, n = record.topology.num_nodes, record.topology.spatial_dim
    K = record.num_steps
    names = [f"u{i + 1}_{_axis(c)}" for i in range(N) for c in range(n)]
    cols = ["k", "t"] + names + [nm + "_ref" for nm in names]
    rows = [[k, k * record.dt] + list(record.inputs[k].ravel()) + list(record.inputs_ref[k].ravel())
            for k in range(K)]
    return cols, rows


def descent_table(trace, reference_residual, topology):
    N, n = topology.num_nodes, topology.spatial_dim
    cols = ["iteration", "residual", "residual_ref"] + [f"u{i + 1}_{_axis(c)}" for i in range(N)
                                                        for c in range(n)]
    rows = [[l, float(res), reference_residual] + list(np.ravel(u))
            for l, (res, u) in enumerate(zip(trace.residuals, trace.iterates))]
    return cols, rows


def cost_table(direct, nash, topology):
    cols = ["edge", "source", "sink", "J_edge", "J_nash"]
    rows = [[m + 1, s + 1, t + 1, direct.per_edge[m], nash.per_edge[m]]
            for m, (s, t) in enumerate(topology.edges)]
    rows.append(["total", "", "", direct.total, nash.total])
    return cols, rows


def cost_csv_text(header_lines, direct, nash, topology):
    cols, rows = cost_table(direct, nash, topology)
    out = list(header_lines) + [",".join(cols)]
    for row in rows:
        out.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    return "\n".join(out) + "\n"


def record_summary(record):
    md = min_pairwise_distance(record)
    fe = record.formation_error()
    summary = {
        "kind": record.kind,
        "steps": record.num_steps,
        "dt": record.dt,
        "safety_radius": record.safety_radius,
        "collision": None,
        "min_neighbor_distance": md["min"],
        "min_distance_pair": None if md["pair"] is None else [md["pair"][0] + 1, md["pair"][1] + 1],
        "min_distance_time": md["time"],
        "formation_error_initial": float(fe[0]),
        "formation_error_final": float(fe[-1]),
        "final_positions": record.positions()[-1].tolist(),
    }
    if record.collision is not None:
        c = record.collision
        summary["collision"] = {"step": c["step"], "time": c["step"] * record.dt,
                                "pair": [c["pair"][0] + 1, c["pair"][1] + 1],
                                "distance": c["distance"]}
    its = [np.max(v) for v in record.solver_iterations]
    if its:
        summary["solver_iterations_max"] = int(max(its))
        summary["solver_iterations_mean"] = float(np.mean(its))
    if record.descent_residuals:
        summary["descent_final_residual_max"] = float(max(r[-1] for r in record.descent_residuals))
    return summary


def write_files(out_dir, files):
    """Write ``{name: text}`` into ``out_dir``; all files appear or none do."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        staged = []
        with tempfile.TemporaryDirectory(dir=out, prefix=".staging-") as tmp:
            for name, text in files.items():
                p = Path(tmp) / name
                p.write_text(text, encoding="utf-8")
                staged.append((p, out / name))
            for src, dst in staged:
                os.replace(src, dst)
    except OSError as exc:
        raise ExportError(f"cannot write to {out}: {exc}") from exc
    return [out / name for name in files]


def export_plots(record, out_dir, scenario, render=False):
    """Plot data for one run: trajectory, distances, inputs and a JSON summary."""
    if record is None or record.inputs is None or record.num_steps == 0:
        raise ExportError("record is empty; nothing to export")
    head = config_header(scenario, {"run": record.kind, "steps": record.num_steps})
    files = {}
    for name, table in (("trajectory.csv", trajectory_table), ("distances.csv", distance_table),
                        ("inputs.csv", input_table)):
        cols, rows = table(record)
        files[name] = csv_text(head, cols, rows)
    files["summary.json"] = json.dumps(record_summary(record), indent=2, sort_keys=True) + "\n"
    paths = write_files(out_dir, files)
    if render:
        paths += render_svg(record, out_dir)
    return paths


def export_descent(trace, reference_residual, topology, out_dir, scenario):
    if trace is None or len(trace.residuals) == 0:
        raise ExportError("descent trace is empty; nothing to export")
    head = config_header(scenario, {"run": "descent", "gamma": trace.gamma})
    cols, rows = descent_table(trace, reference_residual, topology)
    return write_files(out_dir, {"descent.csv": csv_text(head, cols, rows)})


def export_costs(direct, nash, scenario, out_dir, extra=None):
    head = config_header(scenario, {"run": "compare-costs"})
    summary = {"edge_total": direct.total, "nash_total": nash.total,
               "edge_per_edge": [float(v) for v in direct.per_edge],
               "nash_per_edge": [float(v) for v in nash.per_edge],
               "edge_below_nash": bool(direct.total < nash.total)}
    summary.update(extra or {})
    return write_files(out_dir, {
        "costs.csv": cost_csv_text(head, direct, nash, scenario.topology),
        "costs.json": json.dumps(summary, indent=2, sort_keys=True) + "\n",
    })


def render_svg(record, out_dir):
    """Optional vector renders; needs matplotlib."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ExportError("rendering needs matplotlib (pip install matplotlib)") from exc
    out = Path(out_dir)
    pos = record.positions()
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in range(pos.shape[1]):
        ax.plot(pos[:, i, 0], pos[:, i, 1], label=f"agent {i + 1}")
        ax.plot(pos[0, i, 0], pos[0, i, 1], "o", color=ax.lines[-1].get_color())
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend()
    paths = [out / "trajectory.svg"]
    fig.savefig(paths[0])
    plt.close(fig)
    fig, ax = plt.subplots(figsize=(6, 4))
    dist = record.neighbor_distances()
    for m, (s, t) in enumerate(record.topology.edges):
        ax.plot(record.times, dist[:, m], label=f"{s + 1}-{t + 1}")
    ax.axhline(record.safety_radius, color="k", linestyle="--", label="r")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("distance [m]")
    ax.legend()
    paths.append(out / "distances.svg")
    fig.savefig(paths[1])
    plt.close(fig)
    return paths
