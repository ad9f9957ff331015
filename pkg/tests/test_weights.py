import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wsl.geometry import build_box_mesh, build_covering, build_interval_mesh, build_strip_mesh, covering_from_charts
from wsl.geometry import make_chart, submesh
from wsl.weights import (ExponentError, WeightError, calibrate, check_conditions, checked, constant,
                         embedding_constant_B, eval_weights, power_weights, radial_power, read_node_table,
                         table_function, target_exponent, tau_from_spec, trace_constant_B, unit_weights)


def test_power_family_at_origin_is_one():
    ws = power_weights(0.0, 0.0, 0.0)
    vals = eval_weights(ws, np.zeros((1, 2)))
    for name in ("V0", "V1", "V2", "V3", "W", "W1"):
        assert vals[name][0] == 1.0


def test_power_family_alpha0_two():
    ws = power_weights(2.0, -1.0, 0.0)
    assert ws.V0(np.array([[1.0, 0.0]]))[0] == pytest.approx(4.0)
    assert ws.V1(np.array([[0.0, 1.0]]))[0] == pytest.approx(0.5)


def test_power_family_strict_ordering():
    power_weights(2.0, -1.0, 0.0, n=3, strict=True)
    with pytest.raises(WeightError):
        power_weights(0.0, -1.0, 0.0, n=3, strict=True)


def test_nonpositive_weight_is_rejected():
    with pytest.raises(WeightError, match="V1"):
        checked(lambda p: np.where(p[:, 0] > 0.5, 0.0, 1.0), "V1", np.array([[0.2], [0.7]]))


def test_tau_specs():
    p = np.array([[0.2], [0.8]])
    assert tau_from_spec({"kind": "halves", "split": 0.5})(p).tolist() == [1.0, -1.0]
    assert tau_from_spec({"kind": "constant", "value": 0.0})(p).tolist() == [0.0, 0.0]
    with pytest.raises(WeightError):
        tau_from_spec({"kind": "nope"})


def test_node_table_round_trip():
    m = build_interval_mesh(1.0, 4, [1.0])
    text = "node_values V0 tau\n" + "\n".join(f"{1 + x:.3f} {1 - 2 * x:.3f}" for x in m.nodes[:, 0])
    cols = read_node_table(text)
    f = table_function(m, cols["V0"])
    assert f(np.array([[0.125]]))[0] == pytest.approx(1.125)


def test_w1_unit_weights_constant_is_max_overlap_sum_squared():
    m = build_interval_mesh(1.0, 20, [0.5, 1.0])
    cov = build_covering(m, 0.3, 1.5)
    rep = check_conditions(cov, unit_weights(), 2.0)
    assert rep.verdict("W1") == "pass"
    pts = m.quadrature(2).points.reshape(-1, 1)
    inside = np.zeros(len(pts), dtype=bool)
    for c in cov.charts:
        inside |= c.in_ball(pts)
    expected = np.max(cov.overlap_sum(pts[inside]) ** 2)
    assert rep.records["W1"].constant == pytest.approx(expected, rel=1e-12)


def test_example_preset_w2_on_strip():
    m = build_strip_mesh(lambda x: 1 / (1 + x), 4.0, 8, [1, 2, 3, 4])
    cov = build_covering(m, 0.4, 1.5)
    ws = power_weights(2.0, -1.0, 0.0, tau=tau_from_spec({"kind": "halves", "split": 2.0}))
    rep = check_conditions(cov, ws, 2.0)
    assert rep.verdict("W2") == "pass"
    assert "b1 in" in rep.records["W2"].detail


def test_zero_tau_is_flagged():
    m = build_interval_mesh(1.0, 20, [1.0])
    cov = build_covering(m, 0.3, 1.5)
    rep = check_conditions(cov, unit_weights(constant(0.0)), 2.0)
    assert "tau does not change sign" in rep.flags
    assert rep.verdict("tau-sign") == "fail"


def test_check_conditions_deterministic_with_samples():
    m = build_interval_mesh(1.0, 20, [0.5, 1.0])
    cov = build_covering(m, 0.3, 1.5)
    ws = power_weights(1.0, 0.0, 0.0)
    a = check_conditions(cov, ws, 2.0, samples=50, seed=3)
    b = check_conditions(cov, ws, 2.0, samples=50, seed=3)
    assert a.rows() == b.rows()


def _unit_box():
    return build_box_mesh([-1.0, -1.0], [1.0, 1.0], [8, 8], [2.0])


def test_embedding_B_single_unit_chart():
    m = _unit_box()
    cov = covering_from_charts(m, [make_chart(m, 0, [0.0, 0.0], 0.5, 1.0)])
    assert float(embedding_constant_B(cov, unit_weights(), 1.0, 1.0, 0)) == pytest.approx(1.0, abs=1e-12)


def test_embedding_B_two_charts_hand_value():
    m = _unit_box()
    charts = [make_chart(m, 0, [0.0, 0.0], 0.5, 1.0), make_chart(m, 0, [0.5, 0.5], 0.25, 0.5)]
    cov = covering_from_charts(m, charts)
    # factor reduces to r_hat^(n/q0 - n/q + 1) = r_hat at q = q0 = 1, n = 2
    assert float(embedding_constant_B(cov, unit_weights(), 1.0, 1.0, 0)) == pytest.approx(1.0, abs=1e-12)


def test_embedding_B_exponent_range():
    m = _unit_box()
    cov = covering_from_charts(m, [make_chart(m, 0, [0.0, 0.0], 0.5, 1.0)])
    with pytest.raises(ExponentError):
        embedding_constant_B(cov, unit_weights(), 2.0, 2.0, 0)


def _half_box():
    box = _unit_box()
    cent = box.nodes[box.simplices].mean(axis=1)
    return submesh(box, cent[:, 0] > 0)[0]


def test_trace_B_single_boundary_unit_chart():
    m = _half_box()
    cov = covering_from_charts(m, [make_chart(m, 1, [0.0, 0.0], 0.5, 1.0)])
    assert float(trace_constant_B(cov, unit_weights(), 1.0, 1.0, 0)) == pytest.approx(1.0, abs=1e-12)


def test_trace_B_empty_index_set():
    m = _half_box()
    cov = covering_from_charts(m, [make_chart(m, 0, [0.5, 0.0], 0.2, 0.3)])
    val = trace_constant_B(cov, unit_weights(), 1.0, 1.0, 0)
    assert float(val) == 0.0 and "empty index set" in val.note


def test_trace_B_strip_hand_value():
    m = build_strip_mesh(lambda x: 1 / (1 + x), 4.0, 8, [1, 2, 3, 4])
    cov = build_covering(m, 0.4, 1.5)
    ws = unit_weights()
    cal = calibrate(cov, ws)
    expected = max(cal.b3[j] / cal.b1[j] * c.G_gamma * c.G_inv
                   for j, c in enumerate(cov.charts) if c.kind == 1 and c.index > 0)
    assert float(trace_constant_B(cov, ws, 1.0, 1.0, 0)) == pytest.approx(expected, rel=1e-12)


def test_target_exponent_values():
    assert target_exponent(2.0, 3, 2.0, 0.0) == pytest.approx(2.0)
    assert target_exponent(2.0, 3, 0.0, 0.0) == pytest.approx(6.0)
    with pytest.raises(ExponentError):
        target_exponent(3.0, 3, 0.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2.0, 3.0), st.floats(0.0, 5.0))
def test_radial_power_property(alpha, r):
    v = radial_power(alpha)(np.array([[r, 0.0]]))[0]
    assert v > 0
    assert v == pytest.approx((1 + r) ** alpha, rel=1e-12)
