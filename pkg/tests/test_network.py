"""Network loading, forecast-error supports, and DC flow maps."""

import json

import numpy as np
import pytest

from msdro_opf.errors import InputError, TopologyError
from msdro_opf.network import (Generator, Line, Network, Resource,
                               build_joint_support, build_support,
                               bundled_network, compute_flow_maps,
                               load_network)

from oracles import dc_flows_by_angles


def two_bus(slack: int = 2) -> Network:
    return Network(
        buses=[1, 2],
        lines=[Line(1, 2, 0.1, 5.0)],
        generators=[Generator(1, 0.0, 4.0, 10.0, 1.0, 20.0)],
        loads={2: 3.0},
        resources=[],
        slack_bus=slack,
    )


def chain_3bus() -> Network:
    return Network(
        buses=[1, 2, 3],
        lines=[Line(1, 2, 0.1, 5.0), Line(2, 3, 0.2, 5.0)],
        generators=[Generator(1, 0.0, 4.0, 10.0, 1.0, 20.0)],
        loads={3: 2.0},
        resources=[Resource(2, 0.5, 0.0, 1.0, 0.5)],
        slack_bus=3,
    )


def test_bundled_case5_contents(case5):
    assert case5.buses == [1, 2, 3, 4, 5]
    assert case5.num_lines == 6
    assert case5.num_generators == 5
    assert case5.num_resources == 2
    assert case5.loads == {2: 3.0, 3: 3.0, 4: 4.0}
    assert [g.p_max for g in case5.generators] == [0.4, 1.7, 5.2, 2.0, 6.0]
    assert [g.c_E for g in case5.generators] == [1400.0, 1500.0, 3000.0,
                                                 4000.0, 1000.0]
    assert [g.c_A for g in case5.generators] == [8000.0, 8000.0, 1500.0,
                                                 3000.0, 8000.0]
    assert [(r.bus, r.u, r.kappa) for r in case5.resources] == [
        (3, 1.0, 0.6), (4, 1.5, 0.6)]
    # Largest generator sits at bus 5, which doubles as the reference bus.
    assert case5.slack_bus == 5


def test_bundled_unknown_name():
    with pytest.raises(InputError):
        bundled_network("case9999")


def test_load_network_roundtrip(tmp_path, case5):
    raw = {
        "base_mva": case5.base_mva,
        "slack_bus": case5.slack_bus,
        "buses": case5.buses,
        "lines": [{"from": ln.from_bus, "to": ln.to_bus,
                   "reactance": ln.reactance, "f_max": ln.f_max}
                  for ln in case5.lines],
        "generators": [{"bus": g.bus, "p_min": g.p_min, "p_max": g.p_max,
                        "c_E": g.c_E, "c_R": g.c_R, "c_A": g.c_A}
                       for g in case5.generators],
        "loads": [{"bus": b, "d": d} for b, d in case5.loads.items()],
        "resources": [{"bus": r.bus, "u": r.u, "u_min": r.u_min,
                       "u_max": r.u_max, "kappa": r.kappa}
                      for r in case5.resources],
    }
    path = tmp_path / "net.json"
    path.write_text(json.dumps(raw))
    back = load_network(path)
    assert back == case5


def test_load_network_rejects_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(InputError):
        load_network(path)


def test_load_network_rejects_missing_key(tmp_path):
    path = tmp_path / "short.json"
    path.write_text(json.dumps({"buses": [1]}))
    with pytest.raises(InputError):
        load_network(path)


def test_network_validation_errors():
    with pytest.raises(InputError):
        Network(buses=[1, 1], lines=[], generators=[], loads={}, resources=[])
    with pytest.raises(InputError):
        Network(buses=[1], lines=[Line(1, 2, 0.1, 1.0)], generators=[],
                loads={}, resources=[])
    with pytest.raises(InputError):
        Network(buses=[1, 2], lines=[Line(1, 2, -0.1, 1.0)], generators=[],
                loads={}, resources=[])
    with pytest.raises(InputError):
        Network(buses=[1], lines=[], generators=[], loads={2: 1.0},
                resources=[])


def test_build_support_centred_forecast():
    box = build_support(Resource(1, 1.0, 0.0, 2.0, 0.6))
    assert box.lower[0] == pytest.approx(-0.6)
    assert box.upper[0] == pytest.approx(0.6)


def test_build_support_asymmetric_forecast():
    box = build_support(Resource(1, 1.5, 0.0, 2.0, 0.6))
    assert box.lower[0] == pytest.approx(-0.9)
    assert box.upper[0] == pytest.approx(0.3)


def test_build_support_zero_kappa_degenerates():
    box = build_support(Resource(1, 1.7, 0.0, 2.0, 0.0))
    assert box.lower[0] == 0.0
    assert box.upper[0] == 0.0


def test_build_support_rejects_forecast_outside_window():
    with pytest.raises(InputError):
        build_support(Resource(1, 2.5, 0.0, 2.0, 0.6))


def test_joint_support_stacks_resources(case5):
    box = build_joint_support(case5)
    np.testing.assert_allclose(box.lower, [-0.6, -0.9])
    np.testing.assert_allclose(box.upper, [0.6, 0.3])


def test_flow_maps_two_bus_identity():
    b_g, b_w, b_b = compute_flow_maps(two_bus())
    assert b_g.shape == (1, 1)
    assert b_g[0, 0] == pytest.approx(1.0)
    # Load at the slack bus contributes nothing to the flow.
    assert b_b[0, 1] == pytest.approx(0.0)


def test_flow_maps_radial_chain_cumulative():
    b_g, b_w, b_b = compute_flow_maps(chain_3bus())
    # Injection at bus 1 travels the whole chain; at bus 2 only line 2.
    np.testing.assert_allclose(b_g[:, 0], [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(b_w[:, 0], [0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(b_b[:, 0], [1.0, 1.0], atol=1e-12)


def test_flow_maps_same_bus_columns_agree(case5):
    b_g, b_w, b_b = compute_flow_maps(case5)
    bus_pos = {b: i for i, b in enumerate(case5.buses)}
    for gi, g in enumerate(case5.generators):
        np.testing.assert_allclose(b_g[:, gi], b_b[:, bus_pos[g.bus]],
                                   atol=1e-12)
    for ri, r in enumerate(case5.resources):
        np.testing.assert_allclose(b_w[:, ri], b_b[:, bus_pos[r.bus]],
                                   atol=1e-12)


def test_flow_maps_match_angle_solution(case5):
    """Shift-factor flows equal the reduced angle solve on balanced patterns."""
    _, _, b_b = compute_flow_maps(case5)
    rng = np.random.default_rng(29)
    for _ in range(8):
        inj = rng.normal(size=case5.num_buses)
        inj -= inj.mean()
        np.testing.assert_allclose(b_b @ inj,
                                   dc_flows_by_angles(case5, inj), atol=1e-9)


def test_flow_maps_slack_invariant_for_balanced_injections(case5):
    _, _, from_5 = compute_flow_maps(case5, slack_bus=5)
    _, _, from_1 = compute_flow_maps(case5, slack_bus=1)
    rng = np.random.default_rng(31)
    inj = rng.normal(size=case5.num_buses)
    inj -= inj.mean()
    np.testing.assert_allclose(from_5 @ inj, from_1 @ inj, atol=1e-9)


def test_flow_maps_slack_column_is_null(case5):
    """Mass at the reference bus is absorbed there and moves no flow."""
    _, _, b_b = compute_flow_maps(case5)
    slack_col = case5.buses.index(case5.slack_bus)
    np.testing.assert_allclose(b_b[:, slack_col], 0.0, atol=1e-12)


def test_disconnected_network_raises():
    net = Network(
        buses=[1, 2, 3, 4],
        lines=[Line(1, 2, 0.1, 5.0), Line(3, 4, 0.1, 5.0)],
        generators=[Generator(1, 0.0, 4.0, 10.0, 1.0, 20.0)],
        loads={2: 1.0},
        resources=[],
        slack_bus=1,
    )
    with pytest.raises(TopologyError):
        compute_flow_maps(net)


def test_load_and_forecast_vectors(case5):
    np.testing.assert_allclose(case5.load_vector(), [0.0, 3.0, 3.0, 4.0, 0.0])
    np.testing.assert_allclose(case5.forecast_vector(), [1.0, 1.5])
