import numpy as np
import pytest

from edgeform.scenario import (
    ScenarioError,
    dumps_scenario,
    load_scenario,
    loads_scenario,
    write_scenario,
)

MINIMAL = """
nodes:
  - {id: 1, position: [0, 0]}
  - {id: 2, position: [3, 0]}
  - {id: 3, position: [0, 3]}
edges:
  - {source: 1, sink: 2, displacement: [-1, 0]}
  - {source: 2, sink: 3, displacement: [1, -1]}
"""


def test_golden_contents(golden):
    assert golden.num_nodes == 4 and golden.num_edges == 5
    assert golden.safety_radius == 0.5 and golden.dt == 0.1 and golden.horizon == 10
    assert golden.positions == ((3.5, 1.0), (12.0, 1.0), (0.0, 5.0), (15.0, 3.5))
    assert golden.velocities[0] == (0.5, 1.0)
    assert all(v == (0.0, 0.0) for v in golden.velocities[1:])
    assert golden.edges == ((0, 1), (0, 2), (1, 2), (1, 3), (2, 3))


def test_defaults_filled():
    sc = loads_scenario(MINIMAL)
    assert sc.alpha == (1.0, 1.0) and sc.beta_node == (1.0, 1.0, 1.0)
    assert sc.terminal_alpha == sc.alpha
    assert sc.velocities == ((0.0, 0.0),) * 3
    assert sc.gamma is None
    assert sc.resolved_gamma() == pytest.approx(0.9 / 3.0)


def test_gamma_auto_is_echoed():
    text = dumps_scenario(loads_scenario(MINIMAL))
    assert "gamma_auto: true" in text
    assert f"gamma: {0.9 / 3.0}" in text


def test_round_trip(golden, tmp_path):
    assert loads_scenario(dumps_scenario(golden)) == golden
    custom = golden.with_overrides(gamma=0.1, input_weight=0.5, name="custom")
    back = loads_scenario(dumps_scenario(custom))
    assert back == custom and back.gamma == 0.1
    path = tmp_path / "s.yaml"
    write_scenario(custom, path)
    assert load_scenario(path) == custom


def test_parse_error_reports_position():
    with pytest.raises(ScenarioError, match=r"line 3, column \d+"):
        loads_scenario("nodes:\n  - {id: 1, position: [0, 0]}\n  - {id: 2, position: [1, 0\n")


def test_duplicate_edge_named():
    text = MINIMAL + "  - {source: 2, sink: 1, displacement: [1, 0]}\n"
    with pytest.raises(ScenarioError, match=r"duplicate edge \(2, 1\)"):
        loads_scenario(text)


def test_disconnected_rejected():
    text = MINIMAL.replace("[0, 3]}", "[0, 3]}\n  - {id: 4, position: [9, 9]}")
    with pytest.raises(ScenarioError, match="disconnected"):
        loads_scenario(text)


def test_displacement_dimension_checked():
    text = MINIMAL.replace("displacement: [-1, 0]", "displacement: [-1, 0, 2]")
    with pytest.raises(ScenarioError, match=r"displacements\[1\]"):
        loads_scenario(text)


def test_neighbors_inside_radius_rejected():
    text = MINIMAL.replace("[3, 0]", "[0.2, 0]")
    with pytest.raises(ScenarioError, match="neighbors 1 and 2"):
        loads_scenario(text)


def test_non_neighbors_inside_radius_warn():
    text = MINIMAL.replace("[0, 3]", "[0.1, 0.1]")
    with pytest.warns(RuntimeWarning, match="non-neighbors 1 and 3"):
        loads_scenario(text)


@pytest.mark.parametrize("text, match", [
    ("nodes: []\nfoo: 1\nedges: []\n", "unknown field"),
    ("edges: []\n", "missing required field 'nodes'"),
    ("- 1\n- 2\n", "must be a mapping"),
    (MINIMAL + "dt: -0.1\n", "dt must be"),
    (MINIMAL + "horizon: 0\n", "horizon must be"),
    (MINIMAL.replace("id: 3", "id: 5"), "ids must be"),
])
def test_invalid_documents(text, match):
    with pytest.raises(ScenarioError, match=match):
        loads_scenario(text)


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "nope.yaml")


def test_weights_wired_through(golden):
    ew = golden.edge_weights()
    np.testing.assert_array_equal(ew.R, np.broadcast_to(0.01 * np.eye(2), (5, 2, 2)))
    assert np.all(golden.edge_weights(avoidance=False).beta == 0)
    nw = golden.node_weights(avoidance=False)
    assert np.all(nw.beta == 0) and np.all(nw.terminal_beta == 0)
