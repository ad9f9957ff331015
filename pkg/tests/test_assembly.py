import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wsl.assembly import (assemble_boundary_mass, assemble_load, assemble_Q, assemble_weighted_mass, extend,
                          smooth_cutoff, sobolev_norm)
from wsl.geometry import (DIRICHLET_OUTER, PHYSICAL_GAMMA, TRUNCATION_CUT, build_covering, build_interval_mesh,
                          build_strip_mesh)
from wsl.weights import WeightError, constant, scaled, unit_weights

ONE = constant(1.0)


def test_Q_two_elements_hand_assembly():
    m = build_interval_mesh(1.0, 2, [1.0])
    Q = assemble_Q(m, unit_weights()).dense()
    assert np.allclose(np.diag(Q), [2 + 1 / 6, 4 + 1 / 3, 2 + 1 / 6], atol=1e-14)
    assert Q[0, 1] == pytest.approx(-2 + 1 / 12, abs=1e-14)


def test_Q_on_constants_is_volume():
    m = build_strip_mesh(lambda x: 1 / (1 + x), 2.0, 4, [1.0, 2.5])
    Q = assemble_Q(m, unit_weights())
    assert Q.energy(np.ones(m.n_nodes)) == pytest.approx(m.volumes().sum(), abs=1e-12)


def test_Q_dirichlet_both_ends():
    m = build_interval_mesh(1.0, 2, [1.0], left_tag=DIRICHLET_OUTER, right_tag=DIRICHLET_OUTER)
    Q = assemble_Q(m, unit_weights(), dirichlet_on=(DIRICHLET_OUTER,))
    assert Q.shape == (1, 1)


def test_Q_rejects_nonpositive_weight():
    m = build_interval_mesh(1.0, 2, [1.0])
    with pytest.raises(WeightError):
        assemble_Q(m, unit_weights().with_(V1=constant(0.0)))


def test_mass_single_element():
    m = build_interval_mesh(1.0, 1, [1.0])
    M = assemble_weighted_mass(m, ONE, ONE).dense()
    assert np.allclose(M, np.array([[2, 1], [1, 2]]) / 6, atol=1e-15)


def test_odd_tau_on_symmetric_mesh():
    m = build_interval_mesh(1.0, 8, [1.0])
    M = assemble_weighted_mass(m, lambda p: np.sign(p[:, 0] - 0.5), ONE)
    assert M.energy(np.ones(m.n_nodes)) == pytest.approx(0.0, abs=1e-12)


def test_mass_negation_is_exact():
    m = build_interval_mesh(1.0, 8, [1.0])
    a = assemble_weighted_mass(m, ONE, ONE).dense()
    b = assemble_weighted_mass(m, constant(-1.0), ONE).dense()
    assert np.array_equal(a, -b)


def test_boundary_mass_point_measure():
    m = build_interval_mesh(1.0, 4, [1.0])
    B = assemble_boundary_mass(m, ONE).dense()
    expected = np.zeros((5, 5))
    expected[0, 0] = 1.0
    assert np.array_equal(B, expected)


def test_boundary_mass_strip_length():
    m = build_strip_mesh(lambda x: 1 / (1 + x), 4.0, 8, [1, 2, 3, 4])
    B = assemble_boundary_mass(m, ONE)
    ids = m.tagged_facets(PHYSICAL_GAMMA)
    seg = m.nodes[m.facets[ids]]
    length = np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1).sum()
    assert B.energy(np.ones(m.n_nodes)) == pytest.approx(length, abs=1e-12)


def test_boundary_mass_scales_linearly():
    m = build_strip_mesh(lambda x: 1 / (1 + x), 2.0, 4, [2.5])
    a = assemble_boundary_mass(m, ONE).dense()
    b = assemble_boundary_mass(m, constant(2.0)).dense()
    assert np.array_equal(b, 2 * a)


def test_boundary_mass_empty_tag_warns():
    m = build_interval_mesh(1.0, 4, [1.0], left_tag=TRUNCATION_CUT)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        B = assemble_boundary_mass(m, ONE)
    assert B.is_zero() and w


def test_load_hand_values():
    m = build_interval_mesh(1.0, 2, [1.0])
    b = assemble_load(m, ONE, None, unit_weights())
    assert np.allclose(b.values, [0.25, 0.5, 0.25], atol=1e-15)
    z = assemble_load(m, constant(0.0), constant(0.0), unit_weights())
    assert np.all(z.values == 0)


def test_load_scales_linearly():
    m = build_interval_mesh(1.0, 6, [1.0])
    f = lambda p: np.cos(3 * p[:, 0])  # noqa: E731
    a = assemble_load(m, f, None, unit_weights()).values
    b = assemble_load(m, scaled(f, 3.0), None, unit_weights()).values
    assert np.allclose(b, 3 * a, rtol=1e-14, atol=0)


def test_boundary_load_point():
    m = build_interval_mesh(1.0, 4, [1.0])
    b = assemble_load(m, None, constant(2.0), unit_weights())
    assert b.values[0] == 2.0 and np.all(b.values[1:] == 0)


def test_sobolev_norm_q2_matches_Q_energy():
    m = build_interval_mesh(1.0, 10, [1.0])
    u = np.sin(m.nodes[:, 0] * 2)
    Q = assemble_Q(m, unit_weights())
    assert sobolev_norm(m, unit_weights(), u, 2.0) == pytest.approx(np.sqrt(Q.energy(u)), rel=1e-12)


def test_smooth_cutoff_profile():
    rho = np.array([0.0, 0.5, 0.75, 1.0, 2.0])
    z = smooth_cutoff(rho, 0.5, 1.0)
    assert z[0] == 1.0 and z[1] == 1.0 and z[3] == 0.0 and z[4] == 0.0
    assert 0 < z[2] < 1


def _extension_setup(n=20):
    omega = build_interval_mesh(1.0, n, [1.0])
    ambient = build_interval_mesh(1.5, n + n // 2, [1.0], origin=-0.5, left_tag=DIRICHLET_OUTER)
    return omega, ambient, build_covering(omega, 0.3, 1.5)


def test_extension_of_constant():
    omega, ambient, cov = _extension_setup()
    res = extend(np.full(omega.n_nodes, 2.0), cov, 1.0, ambient)
    assert np.all(res.values[res.omega_nodes] == 2.0)
    assert np.all(res.values <= 2.0 + 1e-15)
    outside = np.setdiff1d(np.arange(ambient.n_nodes), res.omega_nodes)
    c = cov.charts[0]
    zeta = smooth_cutoff(c.local_radius(ambient.nodes[outside]), c.r, c.r_hat)
    assert np.allclose(res.values[outside], 2.0 * zeta, atol=1e-14)


def test_extension_of_linear_function_reflects():
    omega, ambient, cov = _extension_setup()
    res = extend(omega.nodes[:, 0].copy(), cov, 1.0, ambient)
    x = ambient.nodes[:, 0]
    left = x < 0
    c = cov.charts[0]
    zeta = smooth_cutoff(np.abs(x[left]), c.r, c.r_hat)
    assert np.allclose(res.values[left], -x[left] * zeta, atol=1e-14)


def test_extension_support_shrinks_with_delta():
    omega, ambient, cov = _extension_setup()
    u = np.cos(omega.nodes[:, 0])
    supports = []
    for delta in (1.0, 2.0, 4.0):
        res = extend(u, cov, delta, ambient)
        assert res.support_ok
        supports.append(set(np.flatnonzero(res.values != 0).tolist()))
    assert supports[0] >= supports[1] >= supports[2]


def test_to_coo_text_is_deterministic():
    m = build_interval_mesh(1.0, 3, [1.0])
    assert assemble_Q(m, unit_weights()).to_coo_text() == assemble_Q(m, unit_weights()).to_coo_text()


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 30), st.floats(0.2, 5.0))
def test_Q_symmetric_positive(n, length):
    m = build_interval_mesh(length, n, [length])
    Q = assemble_Q(m, unit_weights()).dense()
    assert np.allclose(Q, Q.T, atol=0)
    assert np.linalg.eigvalsh(Q).min() > 0
