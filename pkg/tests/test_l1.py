import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings, strategies as st

from wsl.assembly import LoadVector, assemble_load, assemble_weighted_mass
from wsl.geometry import PHYSICAL_GAMMA, Mesh, _boundary_facets, build_interval_mesh
from wsl.l1 import (ResonanceError, approximant, approximate_solve, dense_fredholm, eigenspace, fredholm_solve,
                    power_schedule, project_load, resonance_scan)
from wsl.spectral import neumann_forms, solve_pencil
from wsl.weights import constant, unit_weights

ONE = constant(1.0)


def _unit(n=32):
    m = build_interval_mesh(1.0, n, [0.5, 1.0])
    ws = unit_weights()
    Q, M = neumann_forms(m, ws)
    return m, ws, Q, M


def cos_pi(p):
    return np.cos(np.pi * p[:, 0])


def test_lambda_zero_constant_solution():
    m, ws, Q, M = _unit()
    out = fredholm_solve(Q, M, 0.0, assemble_load(m, ONE, None, ws))
    assert out.status == "Unique"
    assert np.allclose(out.solution, 1.0, atol=1e-10)


def test_resonant_constant_data_is_refused():
    m, ws, Q, M = _unit()
    out = fredholm_solve(Q, M, 1.0, assemble_load(m, ONE, None, ws))
    assert out.status == "Resonant" and not out.solved
    assert out.basis.shape[1] == 1
    assert abs(out.orthogonality[0]) == pytest.approx(1.0, abs=1e-8)


def test_resonant_orthogonal_data_matches_dense_oracle():
    m, ws, Q, M = _unit()
    load = assemble_load(m, cos_pi, None, ws)
    out = fredholm_solve(Q, M, 1.0, load)
    assert out.status == "Resonant" and out.solved
    assert out.residual <= 1e-8
    E = eigenspace(1.0, Q, M)
    ref = dense_fredholm(Q, M, 1.0, load.values, E)
    assert np.allclose(out.solution, ref, atol=1e-8)


def test_unique_solution_matches_dense_oracle():
    m, ws, Q, M = _unit()
    load = assemble_load(m, cos_pi, ONE, ws)
    MV2 = assemble_weighted_mass(m, ONE, ONE)
    out = fredholm_solve(Q, M, 5.0, load, massV2=MV2)
    assert out.status == "Unique"
    assert np.allclose(out.solution, dense_fredholm(Q, M, 5.0, load.values), atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 20.0))
def test_shift_invariance(c):
    m, ws, Q, M = _unit(16)
    load = assemble_load(m, cos_pi, None, ws)
    MV2 = assemble_weighted_mass(m, ONE, ONE)
    a = fredholm_solve(Q, M, 3.0, load, massV2=MV2, shift=c)
    b = fredholm_solve(Q, M, 3.0, load, massV2=MV2, shift=2.0)
    assert np.allclose(a.solution, b.solution, atol=1e-9)


def test_shift_sign_checked():
    m, ws, Q, M = _unit(8)
    with pytest.raises(ValueError):
        fredholm_solve(Q, M, 3.0, assemble_load(m, ONE, None, ws), massV2=M, shift=-1.0)


def test_ambiguous_resonance():
    m, ws, Q, M = _unit(16)
    lam1 = solve_pencil(Q, M, 1).eigenvalue("+", 1)
    with pytest.raises(ResonanceError, match="ambiguous"):
        fredholm_solve(Q, M, lam1 * (1 + 5e-6), assemble_load(m, ONE, None, ws))


def test_eigenspace_between_eigenvalues_is_empty():
    m, ws, Q, M = _unit(16)
    assert eigenspace(5.0, Q, M).shape[1] == 0


def test_eigenspace_at_one_is_constants():
    m, ws, Q, M = _unit(16)
    E = eigenspace(1.0, Q, M)
    assert E.shape[1] == 1
    assert np.allclose(E[:, 0] / E[0, 0], 1.0, atol=1e-10)


def _criss_cross_square(k):
    """Unit square, each grid cell split into four triangles through its center (full square symmetry)."""
    g = np.linspace(0.0, 1.0, k + 1)
    X, Y = np.meshgrid(g, g, indexing="ij")
    corners = np.column_stack([X.ravel(), Y.ravel()])
    h = 1.0 / k
    centers = np.array([[(i + 0.5) * h, (j + 0.5) * h] for i in range(k) for j in range(k)])
    nodes = np.vstack([corners, centers])
    tri = []
    for i in range(k):
        for j in range(k):
            a, b, c, d = i * (k + 1) + j, (i + 1) * (k + 1) + j, (i + 1) * (k + 1) + j + 1, i * (k + 1) + j + 1
            e = len(corners) + i * k + j
            tri += [[a, b, e], [b, c, e], [c, d, e], [d, a, e]]
    tri = np.array(tri)
    facets = _boundary_facets(tri)
    return Mesh(nodes, tri, [list(f) for f in facets], [PHYSICAL_GAMMA] * len(facets), [2.0])


def test_double_eigenvalue_on_square():
    m = _criss_cross_square(6)
    ws = unit_weights()
    Q, M = neumann_forms(m, ws)
    lam = np.sort(1.0 / la.eigh(M.dense(), Q.dense(), eigvals_only=True))
    second = lam[1]
    dense_mult = int(np.sum(np.abs(lam - second) <= 1e-6 * second))
    assert dense_mult == 2
    assert eigenspace(second, Q, M).shape[1] == dense_mult


def test_resonance_scan_agrees_with_eigenvalues():
    m, ws, Q, M = _unit(16)
    spec = solve_pencil(Q, M, 2)
    ev = spec.positive.values
    lams = np.concatenate([np.linspace(0.0, ev[1] + 1.0, 25), ev])
    scan = resonance_scan(Q, M, lams, ev)
    assert all(agrees for _, _, agrees in scan)
    assert sum(status == "Resonant" for _, status, _ in scan) == 2


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_projection_is_idempotent(seed):
    m, ws, Q, M = _unit(16)
    MV2 = assemble_weighted_mass(m, ONE, ONE)
    E = eigenspace(1.0, Q, M)
    b = np.random.default_rng(seed).standard_normal(Q.shape[0])
    p1, _ = project_load(b, E, MV2)
    p2, removed = project_load(p1, E, MV2)
    assert np.allclose(p1, p2, atol=1e-12)
    assert np.allclose(removed, 0.0, atol=1e-12)
    assert np.allclose(E.T @ p1, 0.0, atol=1e-12)


def test_approximant_clamps_and_cuts():
    m = build_interval_mesh(2.0, 4, [1.0, 2.0])
    f = approximant(lambda p: 10.0 * np.ones(len(p)), m, 3.0, 1)
    vals = f(np.array([[0.5], [1.5]]))
    assert vals.tolist() == [3.0, 0.0]


def test_l2_data_collapses_to_direct_solve():
    m, ws, Q, M = _unit(32)
    sol = approximate_solve(cos_pi, None, 5.0, 3, m, ws)
    MV2 = assemble_weighted_mass(m, ONE, ONE)
    direct = fredholm_solve(Q, M, 5.0, assemble_load(m, cos_pi, None, ws), massV2=MV2)
    # from stage 2 on D_j covers (0, 1) and the clamp level 4 exceeds |cos|
    for u in sol.solutions[1:]:
        assert np.allclose(u, Q.expand(direct.solution), atol=1e-10)


def test_resonant_scheme_projects_data():
    m, ws, Q, M = _unit(32)
    sol = approximate_solve(ONE, None, 1.0, 2, m, ws)
    assert sol.status == "Resonant"
    assert np.abs(sol.stages[-1]["removed"]).max() > 0.1
    assert sol.residual <= 1e-8


def test_singular_data_history_consistent_across_meshes():
    f0 = lambda p: np.abs(p[:, 0]) ** -0.5  # noqa: E731
    finals = []
    for n in (128, 256):
        m = build_interval_mesh(1.0, n, [0.125 * k for k in range(1, 9)])
        sol = approximate_solve(f0, None, 0.0, 8, m, unit_weights(), schedule=power_schedule(2.0))
        for q in (1.2, 1.4):
            assert sol.boundedness_ratio(q) <= 10
            d = sol.differences[q]
            assert d[-1] < d[1]
        finals.append(sol.norm_history(1.2)[-1])
    assert finals[0] == pytest.approx(finals[1], rel=0.05)


def test_load_dimension_mismatch():
    m, ws, Q, M = _unit(8)
    with pytest.raises(ValueError):
        fredholm_solve(Q, M, 0.0, LoadVector(np.ones(3), np.arange(3)))
