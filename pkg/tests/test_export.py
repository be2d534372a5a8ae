import json

import numpy as np
import pytest

from edgeform.export import (
    ExportError,
    export_costs,
    export_descent,
    export_plots,
    write_files,
)
from edgeform.sim import CostReport, first_interval_descent


def _rows(path):
    lines = path.read_text().splitlines()
    head = [ln for ln in lines if ln.startswith("#")]
    body = [ln.split(",") for ln in lines if not ln.startswith("#")]
    return head, body[0], body[1:]


def test_plot_files(golden_edge_run, golden, tmp_path):
    paths = export_plots(golden_edge_run, tmp_path, golden)
    assert sorted(p.name for p in paths) == ["distances.csv", "inputs.csv", "summary.json", "trajectory.csv"]
    head, cols, rows = _rows(tmp_path / "trajectory.csv")
    assert len(rows) == 70
    assert [c for c in cols if c.startswith("p")] == [f"p{i}_{a}" for i in range(1, 5) for a in "xy"]
    assert "# name: golden" in head and any("gamma_auto: true" in h for h in head)
    assert sum(int(r[2]) for r in rows) == 7  # one formation snapshot per second
    _, cols, rows = _rows(tmp_path / "distances.csv")
    assert cols[-1] == "r" and all(float(r[-1]) == 0.5 for r in rows)
    assert cols[2:-1] == ["d_1_2", "d_1_3", "d_2_3", "d_2_4", "d_3_4"]
    _, cols, rows = _rows(tmp_path / "inputs.csv")
    assert len(cols) == 2 + 16 and cols[-1] == "u4_y_ref"
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["collision"] is None and summary["min_neighbor_distance"] > 0.5
    assert summary["steps"] == 70


def test_exports_are_byte_identical(golden_edge_run, golden, tmp_path):
    export_plots(golden_edge_run, tmp_path / "a", golden)
    export_plots(golden_edge_run, tmp_path / "b", golden)
    for name in ("trajectory.csv", "distances.csv", "inputs.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_empty_record_writes_nothing(golden_edge_run, golden, tmp_path):
    import copy
    empty = copy.copy(golden_edge_run)
    empty.inputs = np.zeros((0, 4, 2))
    out = tmp_path / "out"
    with pytest.raises(ExportError, match="empty"):
        export_plots(empty, out, golden)
    assert not out.exists() or not any(out.iterdir())


def test_unwritable_target(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ExportError, match="cannot write"):
        write_files(blocker / "sub", {"a.csv": "1\n"})


def test_descent_export(golden, tmp_path):
    _, _, trace, ref = first_interval_descent(golden, 10)
    export_descent(trace, ref, golden.topology, tmp_path, golden)
    _, cols, rows = _rows(tmp_path / "descent.csv")
    assert cols[:3] == ["iteration", "residual", "residual_ref"]
    assert len(rows) == 11
    res = [float(r[1]) for r in rows]
    assert all(b < a for a, b in zip(res, res[1:]))


def test_cost_export(golden, tmp_path):
    direct = CostReport(np.arange(5.0), "edge")
    nash = CostReport(np.arange(5.0) + 1, "nash")
    export_costs(direct, nash, golden, tmp_path)
    _, cols, rows = _rows(tmp_path / "costs.csv")
    assert cols == ["edge", "source", "sink", "J_edge", "J_nash"]
    assert rows[-1][0] == "total" and float(rows[-1][3]) == 10.0 and float(rows[-1][4]) == 15.0
    summary = json.loads((tmp_path / "costs.json").read_text())
    assert summary["edge_below_nash"] is True
