"""Discrete capacities and the first-eigenvalue inequality audit."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import SymmetricForm, assemble_Q, assemble_weighted_mass, extend, sobolev_norm
from .geometry import DIRICHLET_OUTER, Mesh, build_covering, build_interval_mesh, submesh
from .spectral import Spectrum, SpectrumError, dirichlet_spectrum, neumann_forms, solve_pencil
from .weights import WeightSet, checked, unit_weights


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class CapacityResult:
    value: float
    minimizer: np.ndarray  # full nodal vector
    residual: float  # max constraint violation
    variant: str  # CapPlus | CapMinus | CNuGamma
    ell: float | None = None
    active: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()


# ----------------------------------------------------------------------------
# Cap^+- : energy minimization with u pinned outside N


def cap_pm(ambient: Mesh, region_outside_N, phi1: np.ndarray, Q: SymmetricForm,
           variant: str = "CapPlus") -> CapacityResult:
    """Minimize ``Q[u, u]`` subject to ``u = phi1`` on the region's nodes.

    Eliminates the constrained nodes and solves the reduced system on the rest;
    ``phi1`` is a full nodal vector on ``ambient``.
    """
    region = np.unique(np.asarray(region_outside_N, dtype=int))
    if region.size == 0:
        raise CapacityError("the region outside N has no nodes")
    phi1 = np.asarray(phi1, dtype=float)
    if phi1.shape != (ambient.n_nodes,):
        raise CapacityError("phi1 must have one value per ambient node")
    dofs = Q.dofs
    con = np.isin(dofs, region)
    A = Q.matrix.tocsr()
    x = np.zeros(len(dofs))
    x[con] = phi1[dofs[con]]
    free = ~con
    if free.any():
        Aff = A[free][:, free].tocsc()
        rhs = -(A[free][:, con] @ x[con])
        try:
            x[free] = splu(Aff).solve(rhs)
        except RuntimeError as exc:  # pragma: no cover - Q is positive definite
            raise CapacityError(f"reduced system is singular: {exc}") from exc
    full = Q.expand(x)
    # nodes of the region eliminated by a Dirichlet condition carry phi1 = 0 there already
    residual = float(np.max(np.abs(full[region] - phi1[region]))) if region.size else 0.0
    return CapacityResult(Q.energy(x), full, residual, variant)


def bordered_capacity(Q: SymmetricForm, constrained: np.ndarray, values: np.ndarray) -> float:
    """Dense oracle: solve ``[[Q, B^T], [B, 0]]`` with B selecting the constrained dofs."""
    A = Q.dense()
    pos = np.flatnonzero(np.isin(Q.dofs, constrained))
    B = np.zeros((len(pos), len(Q.dofs)))
    B[np.arange(len(pos)), pos] = 1.0
    K = np.block([[A, B.T], [B, np.zeros((len(pos), len(pos)))]])
    rhs = np.concatenate([np.zeros(len(Q.dofs)), np.asarray(values, dtype=float)[Q.dofs[pos]]])
    x = np.linalg.solve(K, rhs)[: len(Q.dofs)]
    return float(x @ A @ x)


# ----------------------------------------------------------------------------
# C_nu(Gamma): relaxed admissible set, solved as a convex program


def energy_factor(mesh: Mesh, ws: WeightSet, elements=None, order: int = 2) -> sp.csr_matrix:
    """Sparse F with ``|F u|^2 = Q[u, u]`` restricted to the selected elements."""
    quad = mesh.quadrature(order)
    sel = np.ones(mesh.n_simplices, dtype=bool) if elements is None else np.asarray(elements, dtype=bool)
    pts = quad.points.reshape(-1, mesh.dim)
    V0 = checked(ws.V0, "V0", pts).reshape(quad.weights.shape)
    V1 = checked(ws.V1, "V1", pts).reshape(quad.weights.shape)
    E, nq = quad.weights.shape
    k = mesh.dim + 1
    rows, cols, vals = [], [], []
    r = 0
    for e in np.flatnonzero(sel):
        simp = mesh.simplices[e]
        for q in range(nq):
            rows.append(np.full(k, r))
            cols.append(simp)
            vals.append(np.sqrt(quad.weights[e, q] * V0[e, q]) * quad.basis[q])
            r += 1
        L = np.linalg.cholesky(quad.ginv[e])
        s = np.sqrt((quad.weights[e] * V1[e]).sum())
        g = quad.grads[e] @ L  # (k, n): components of L^T grad phi_a
        for d in range(mesh.dim):
            rows.append(np.full(k, r))
            cols.append(simp)
            vals.append(s * g[:, d])
            r += 1
    if r == 0:
        return sp.csr_matrix((0, mesh.n_nodes))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(r, mesh.n_nodes))


def mass_factor(mesh: Mesh, coefficient, weight, elements=None, order: int = 2) -> sp.csr_matrix:
    """Sparse F with ``|F u|^2 = int c u^2 dV`` for a nonnegative coefficient c."""
    quad = mesh.quadrature(order)
    sel = np.ones(mesh.n_simplices, dtype=bool) if elements is None else np.asarray(elements, dtype=bool)
    pts = quad.points.reshape(-1, mesh.dim)
    c = np.asarray(coefficient(pts), dtype=float).reshape(quad.weights.shape)
    if np.any(c[sel] < 0):
        raise CapacityError("mass factor needs a nonnegative coefficient on the selected elements")
    v = checked(weight, "weight", pts).reshape(quad.weights.shape)
    es = np.flatnonzero(sel)
    nq, k = quad.basis.shape
    rows = np.repeat(np.arange(len(es) * nq), k)
    cols = np.repeat(mesh.simplices[es], nq, axis=0).ravel()
    scale = np.sqrt(quad.weights * c * v)[es].ravel()
    vals = (scale[:, None] * np.tile(quad.basis, (len(es), 1))).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(es) * nq, mesh.n_nodes))


def interface_facets(mesh: Mesh, inside: np.ndarray) -> list[tuple[np.ndarray, int, np.ndarray]]:
    """Facets shared by an inside and an outside simplex.

    Returns ``(facet nodes, inside owner, outward Euclidean conormal scaled by facet measure)``.
    """
    owner: dict[tuple, list[int]] = {}
    for e, simp in enumerate(mesh.simplices):
        for loc in range(mesh.dim + 1):
            owner.setdefault(tuple(sorted(np.delete(simp, loc).tolist())), []).append(e)
    out = []
    for key in sorted(owner):
        es = owner[key]
        if len(es) != 2 or inside[es[0]] == inside[es[1]]:
            continue
        e = es[0] if inside[es[0]] else es[1]
        nodes = np.array(key)
        cent = mesh.nodes[mesh.simplices[e]].mean(axis=0)
        if mesh.dim == 1:
            n = np.sign(mesh.nodes[nodes[0]] - cent)
        else:
            d = mesh.nodes[nodes[1]] - mesh.nodes[nodes[0]]
            n = np.array([-d[1], d[0]])
            if n @ (mesh.nodes[nodes[0]] - cent) < 0:
                n = -n
        out.append((nodes, e, n))
    return out


def flux_rows(mesh: Mesh, ws: WeightSet, inside: np.ndarray) -> tuple[np.ndarray, list]:
    """One row per interface facet: the facet-integrated conormal flux ``V1 g(grad u, nu)`` from the inside."""
    facets = interface_facets(mesh, inside)
    quad = mesh.quadrature(2)
    rows = np.zeros((len(facets), mesh.n_nodes))
    for i, (nodes, e, n) in enumerate(facets):
        mid = mesh.nodes[nodes].mean(axis=0)[None, :]
        v1 = float(checked(ws.V1, "V1", mid)[0])
        ginv = quad.ginv[e]
        g = mesh.metric_tensors()[e]
        # n is the Euclidean conormal covector times the facet's Euclidean measure;
        # convert to the Riemannian unit normal and measure.
        nn = float(np.sqrt(n @ ginv @ n))
        meas = nn * np.sqrt(np.linalg.det(g)) if mesh.dim > 1 else 1.0
        direction = ginv @ n / nn if nn > 0 else ginv @ n
        rows[i, mesh.simplices[e]] = v1 * meas * (quad.grads[e] @ (np.eye(mesh.dim) @ direction))
    return rows, facets


def c_nu_gamma(meshN: Mesh, omega_nodes, kappa1: np.ndarray, phiOmega: np.ndarray, ell: float,
               Q: SymmetricForm | None = None, ws: WeightSet | None = None) -> CapacityResult:
    """Relaxed C_nu(Gamma) on N: minimize ``Q_N[u, u]`` over u with w = u - kappa1 satisfying

    * ``int_{N \\ Omega} tau w^2 dV2 <= ell``,
    * zero facet-integrated conormal flux of w from the Omega side on every interface facet,
    * ``||w||_{1,2,Omega cap D_m} <= ||phiOmega||_{1,2,Omega cap D_m}`` for every exhaustion index m.

    The set contains the exact admissible set, so the value is a lower bound.
    ``kappa1`` and ``phiOmega`` are nodal vectors on N (phiOmega is read on Omega nodes only).
    """
    import cvxpy as cp

    if not 0 < ell < 1:
        raise CapacityError("ell must lie in (0, 1)")
    ws = ws or unit_weights()
    omega_nodes = np.unique(np.asarray(omega_nodes, dtype=int))
    inside = np.all(np.isin(meshN.simplices, omega_nodes), axis=1)
    if not inside.any():
        raise CapacityError("Omega contains no element of N")
    Q = Q if Q is not None else assemble_Q(meshN, ws)
    if Q.shape[0] != meshN.n_nodes:
        raise CapacityError("C_nu is posed without boundary conditions: Q must cover every node of N")
    kappa1 = np.asarray(kappa1, dtype=float)
    phi = np.zeros(meshN.n_nodes)
    phi[omega_nodes] = np.asarray(phiOmega, dtype=float)[omega_nodes]

    FQ = energy_factor(meshN, ws)
    Ftail = mass_factor(meshN, ws.tau, ws.V2, elements=~inside)
    B, facets = flux_rows(meshN, ws, inside)
    levels = sorted(set(meshN.element_index[inside].tolist()))
    comparisons = []
    for m in levels:
        sel = inside & (meshN.element_index <= m)
        F = energy_factor(meshN, ws, sel)
        comparisons.append((f"H1 comparison on Omega cap D_{m}", F, float(np.linalg.norm(F @ phi))))

    u = cp.Variable(meshN.n_nodes)
    w = u - kappa1
    groups = {
        "tau mass outside Omega": [cp.sum_squares(Ftail @ w) <= ell] if Ftail.shape[0] else [],
        "normal flux on Gamma": [B @ w == 0] if len(facets) else [],
    }
    for name, F, bound in comparisons:
        groups[name] = [cp.norm(F @ w, 2) <= bound]

    def solve(active_groups):
        cons = [c for g in active_groups for c in groups[g]]
        prob = cp.Problem(cp.Minimize(cp.sum_squares(FQ @ u)), cons)
        try:
            prob.solve(solver=cp.CLARABEL)
        except cp.SolverError:
            prob.solve()
        return prob

    prob = solve(list(groups))
    if prob.status not in ("optimal", "optimal_inaccurate"):
        binding = [g for g in groups if solve([h for h in groups if h != g]).status in ("optimal", "optimal_inaccurate")]
        raise CapacityError(f"relaxed admissible set is empty ({prob.status}); binding constraint(s): "
                            f"{', '.join(binding) or 'jointly infeasible'}")
    x = np.asarray(u.value, dtype=float)
    wx = x - kappa1
    viol, active = [], []
    if Ftail.shape[0]:
        t = float(np.sum((Ftail @ wx) ** 2))
        viol.append(max(t - ell, 0.0))
        if t >= ell - 1e-6 * max(ell, 1.0):
            active.append("tau mass outside Omega")
    if len(facets):
        viol.append(float(np.max(np.abs(B @ wx))))
        active.append("normal flux on Gamma")
    for name, F, bound in comparisons:
        t = float(np.linalg.norm(F @ wx))
        viol.append(max(t - bound, 0.0))
        if t >= bound - 1e-6 * max(bound, 1.0):
            active.append(name)
    notes = ("lower bound: relaxed admissible set",
             "proximity constraint checked on the exhaustion family only")
    return CapacityResult(Q.energy(x), x, float(max(viol, default=0.0)), "CNuGamma", ell, tuple(active), notes)


# ----------------------------------------------------------------------------
# inequality audit


@dataclass(frozen=True)
class BoundRecord:
    name: str
    lhs: float
    rhs: float
    margin: float
    verdict: str  # pass | fail | not evaluated
    hypothesis: str


@dataclass(frozen=True)
class BoundReport:
    records: tuple[BoundRecord, ...]
    case_row: int
    quantities: tuple[tuple[str, float], ...] = ()

    def record(self, name: str) -> BoundRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(r.verdict != "fail" for r in self.records)

    def rows(self) -> list[tuple]:
        return [(r.name, r.lhs, r.rhs, r.margin, r.verdict, r.hypothesis, self.case_row) for r in self.records]


MARGIN_RTOL = 1e-8


def _ineq(name: str, lhs: float, rhs: float, sense: str, hypothesis: str = "none") -> BoundRecord:
    margin = lhs - rhs if sense == ">=" else rhs - lhs
    scale = max(abs(lhs), abs(rhs), 1.0)
    verdict = "pass" if margin >= -MARGIN_RTOL * scale else "fail"
    return BoundRecord(name, float(lhs), float(rhs), float(margin), verdict, hypothesis)


def _skipped(name: str, hypothesis: str) -> BoundRecord:
    return BoundRecord(name, float("nan"), float("nan"), float("nan"), "not evaluated",
                       f"{hypothesis}: hypothesis failed, not evaluated")


def _value(x) -> float:
    return float(x.value if isinstance(x, CapacityResult) else x)


def _eig(spec, sign: str, i: int, label: str) -> float:
    if isinstance(spec, Spectrum):
        try:
            return spec.eigenvalue(sign, i)
        except SpectrumError as exc:
            raise SpectrumError(f"{exc} for {label}") from exc
    key = f"lambda_{i}^{sign}"
    if key not in spec:
        raise SpectrumError(f"{key}({label}) is needed but missing")
    return float(spec[key])


def select_case(l1m: float, l1p: float, l2m: float | None, l2p: float | None) -> tuple[int, float, float, str]:
    """Row of the ordering table: (row, Lambda_1, Lambda_2, capacity sign)."""
    if l1m <= l1p:
        if l2m is None:
            raise SpectrumError("lambda_2^-(M) is needed by the ordering table but missing")
        if l1p <= l2m:
            return 1, l1m, l1p, "-"
        return 2, l1m, l2m, "-"
    if l2p is None:
        raise SpectrumError("lambda_2^+(M) is needed by the ordering table but missing")
    if l1m <= l2p:
        return 3, l1p, l1m, "+"
    return 4, l1p, l2p, "+"


def verify_theorem_bounds(spectra: Mapping, capacities: Mapping, ell: float,
                          phi_extension_energy: float) -> BoundReport:
    """Evaluate the first-eigenvalue inequalities from numbers alone.

    ``spectra`` maps "N", "M", "Omega" to a Spectrum or to a dict with keys like
    ``"lambda_1^+"``; ``capacities`` maps "CapPlus", "CapMinus", "CNuGamma" to
    values or CapacityResult objects.
    """
    lN1 = _eig(spectra["N"], "+", 1, "N")
    lN2 = _eig(spectra["N"], "+", 2, "N")
    lO1 = _eig(spectra["Omega"], "+", 1, "Omega")
    M = spectra["M"]
    l1p = _eig(M, "+", 1, "M")
    l1m = abs(_eig(M, "-", 1, "M"))

    def optional(sign, i):
        try:
            return abs(_eig(M, sign, i, "M"))
        except SpectrumError:
            return None

    row, L1, L2, csign = select_case(l1m, l1p, optional("-", 2), optional("+", 2))
    cap = {"+": _value(capacities["CapPlus"]), "-": _value(capacities["CapMinus"])}
    cnu = _value(capacities["CNuGamma"])
    lmin = min(l1m, l1p)
    absl = {"+": l1p, "-": l1m}

    recs = [
        _ineq("(i) extension energy minus lambda_1(N)", phi_extension_energy - lN1,
              cnu * (lN2 - lN1) / (lN2 + lN1), ">="),
        _ineq(f"(i) lambda_1(N) minus Lambda_1 [row {row}, Cap{csign}]", lN1 - L1,
              cap[csign] * (L2 - L1) / (L2 + L1), ">="),
    ]
    quantities = [("lambda_1(N)", lN1), ("lambda_2(N)", lN2), ("lambda_1(Omega)", lO1),
                  ("lambda_1^+(M)", l1p), ("|lambda_1^-(M)|", l1m), ("Lambda_1", L1), ("Lambda_2", L2),
                  ("Cap^+", cap["+"]), ("Cap^-", cap["-"]), ("C_nu", cnu), ("ell", ell),
                  ("extension energy", phi_extension_energy)]

    hyp_nu = cnu < lN1 / 16.0 * (1.0 - ell) ** 2
    nu_text = f"C_nu < lambda_1(N)(1-ell)^2/16 [{cnu:.6g} < {lN1 / 16.0 * (1.0 - ell) ** 2:.6g}]"
    name = "(ii) lambda_1(Omega) minus lambda_1(N)"
    if hyp_nu:
        mu1 = (1.0 - ell) - cnu / lN1 - 2.0 * np.sqrt(cnu / lN1)
        quantities.append(("mu_1", mu1))
        rhs = 16.0 / (7.0 * (1.0 - ell)) * (lN1 * ell + 4.5 * np.sqrt(lN1 * cnu))
        recs.append(_ineq(name, lO1 - lN1, rhs, "<=", nu_text))
        recs.append(_ineq("(ii) step bound with mu_1", lO1 - lN1,
                          (lN1 * ell + 2.0 * cnu + 4.0 * np.sqrt(lN1 * cnu)) / mu1, "<=", nu_text))
    else:
        recs.append(_skipped(name, nu_text))
    for s in ("+", "-"):
        text = f"Cap{s} < min|lambda_1^pm(M)|/16 [{cap[s]:.6g} < {lmin / 16.0:.6g}]"
        name = f"(ii) lambda_1(N) minus |lambda_1^{s}(M)|"
        if cap[s] < lmin / 16.0:
            ratio = absl[s] / lmin
            mu2 = 1.0 - cap[s] / lmin - 2.0 * np.sqrt(cap[s] / absl[s])
            quantities.append((f"mu_2^{s}", mu2))
            rhs = 4.0 / 7.0 * (17.0 + ratio) * np.sqrt(absl[s]) * np.sqrt(cap[s])
            recs.append(_ineq(name, lN1 - absl[s], rhs, "<=", text))
            recs.append(_ineq(f"(ii) step bound with mu_2^{s}", lN1 - absl[s],
                              ((1.0 + ratio) * cap[s] + 4.0 * np.sqrt(absl[s] * cap[s])) / mu2, "<=", text))
        else:
            recs.append(_skipped(name, text))
    return BoundReport(tuple(recs), row, tuple(quantities))


def rayleigh_sandwich(Q: SymmetricForm, Mtau: SymmetricForm, lam_minus: float, lam_plus: float,
                      samples: int = 200, seed: int = 0) -> tuple[bool, float]:
    """Sampled check of ``1/lambda_1^- <= int tau u^2 dV2 <= 1/lambda_1^+`` for Q-normalized u.

    Returns (all inside, worst excess beyond the interval).
    """
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(samples):
        x = rng.standard_normal(Q.shape[0])
        x /= np.sqrt(Q.energy(x))
        t = Mtau.energy(x)
        worst = max(worst, 1.0 / lam_minus - t, t - 1.0 / lam_plus)
    tol = 1e-10 * max(abs(1.0 / lam_minus), abs(1.0 / lam_plus))
    return bool(worst <= tol), float(worst)


# ----------------------------------------------------------------------------
# one-dimensional three-domain instance (Omega inside N inside a box)


@dataclass(frozen=True)
class ThreeDomainConfig:
    box: float = 12.0  # M = (-box, box) with Dirichlet ends
    n_half: float = 6.0  # N = (-n_half, n_half)
    omega_half: float = 5.8  # Omega = (-omega_half, omega_half)
    tau_outside: float = -4.0  # tau on M \ N (tau = 1 on N)
    elements: int = 480
    ell: float = 0.1
    chart_radius: float = 0.1
    inflation: float = 1.5
    delta: float = 1.0
    radii: tuple[float, ...] = ()


@dataclass
class ThreeDomainResult:
    report: BoundReport
    spectra: dict
    capacities: dict
    ell: float
    extension_energy: float
    tail_tau_mass: float
    sandwich: tuple[bool, float]
    notes: list = field(default_factory=list)


def three_domain_instance(cfg: ThreeDomainConfig = ThreeDomainConfig(), seed: int = 0) -> ThreeDomainResult:
    """Run every quantity of the inequality audit on nested intervals with unit weights."""
    L, b, a = cfg.box, cfg.n_half, cfg.omega_half
    if not 0 < a < b < L:
        raise CapacityError("need 0 < omega_half < n_half < box")
    radii = cfg.radii or (a / 2, a, b, L)
    box = build_interval_mesh(2 * L, cfg.elements, radii, origin=-L,
                              left_tag=DIRICHLET_OUTER, right_tag=DIRICHLET_OUTER)
    tol_x = 1e-9 * L

    def tau(p):
        return np.where(np.abs(p[:, 0]) < b + tol_x, 1.0, cfg.tau_outside)

    ws = unit_weights(tau)
    cent = box.nodes[box.simplices].mean(axis=1)[:, 0]
    meshN, keepN = submesh(box, np.abs(cent) < b)
    meshO, keepO = submesh(box, np.abs(cent) < a)
    if not np.isclose(meshN.nodes[:, 0].max(), b) or not np.isclose(meshO.nodes[:, 0].max(), a):
        raise CapacityError("interval endpoints must fall on mesh nodes")

    QM, MM = neumann_forms(box, ws, dirichlet_on=(DIRICHLET_OUTER,))
    specM = solve_pencil(QM, MM, 2, seed=seed)
    specN = dirichlet_spectrum(meshN, ws, 2, seed=seed)
    QO, MO = neumann_forms(meshO, ws)
    specO = solve_pencil(QO, MO, 1, seed=seed)

    kappa = specN.vector("+", 1)
    phiO = specO.vector("+", 1)
    # kappa1 sign: int tau kappa1 phi >= 0 with phi the Omega eigenfunction
    onN = np.searchsorted(keepN, keepO)
    if float(kappa[onN] @ (MO.matrix @ phiO[MO.dofs])) < 0:
        kappa = -kappa

    region = np.flatnonzero(np.abs(box.nodes[:, 0]) >= b - tol_x)
    caps = {
        "CapPlus": cap_pm(box, region, specM.vector("+", 1), QM, "CapPlus"),
        "CapMinus": cap_pm(box, region, specM.vector("-", 1), QM, "CapMinus"),
    }

    cov = build_covering(meshO, cfg.chart_radius, cfg.inflation)
    ext = extend(phiO, cov, cfg.delta, box, ws=ws)
    notes = []
    if not ext.support_ok:
        notes.append("extension support leaves the inflated balls")
    phi_box = ext.values
    if np.any(np.abs(phi_box[np.abs(box.nodes[:, 0]) >= b - tol_x]) > 0):
        notes.append("extension is not supported inside N")
    energy = sobolev_norm(box, ws, phi_box) ** 2
    outside_O = np.abs(cent) >= a
    tail_mass = float(phi_box @ (assemble_weighted_mass(box, tau, ws.V2, elements=outside_O & (np.abs(cent) < b)).matrix @ phi_box))
    if tail_mass > cfg.ell:
        notes.append(f"int_(N minus Omega) tau phi^2 = {tail_mass:.6g} exceeds ell")

    phiN = np.zeros(meshN.n_nodes)
    phiN[onN] = phiO
    caps["CNuGamma"] = c_nu_gamma(meshN, onN, kappa, phiN, cfg.ell, ws=ws)
    spectra = {"N": specN, "M": specM, "Omega": specO}
    report = verify_theorem_bounds(spectra, caps, cfg.ell, energy)
    sandwich = rayleigh_sandwich(QM, MM, specM.eigenvalue("-", 1), specM.eigenvalue("+", 1), seed=seed)
    return ThreeDomainResult(report, spectra, caps, cfg.ell, energy, tail_mass, sandwich, notes)
