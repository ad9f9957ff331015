"""Level-set functional, the geometric L-infinity iteration, tail suprema and local sup ratios."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .geometry import PHYSICAL_GAMMA, Covering, Mesh
from .weights import Reported, WeightSet, checked


@dataclass
class LevelSetProbe:
    """Quadrature data of a P1 function u on one boundary chart.

    ``rho`` is the chart-local radius of each quadrature point; volume points
    carry ``V2`` weights, Gamma points carry ``W`` weights.
    """

    j: int
    u: np.ndarray
    vol_u: np.ndarray
    vol_w: np.ndarray
    vol_rho: np.ndarray
    bnd_u: np.ndarray
    bnd_w: np.ndarray
    bnd_rho: np.ndarray
    r: float
    r_hat: float
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, cov: Covering, j: int, u: np.ndarray, ws: WeightSet | None = None, order: int = 2) -> "LevelSetProbe":
        ws = ws or WeightSet()
        mesh = cov.mesh
        chart = cov.charts[j]
        u = np.asarray(u, dtype=float)
        quad = mesh.quadrature(order)
        pts = quad.points.reshape(-1, mesh.dim)
        uq = (u[mesh.simplices] @ quad.basis.T).ravel()
        rho = chart.local_radius(pts)
        keep = rho < chart.r_hat
        w = quad.weights.ravel()[keep] * checked(ws.V2, "V2", pts[keep])
        bu = bw = brho = np.zeros(0)
        if chart.kind == 1 and mesh.tagged_facets(PHYSICAL_GAMMA).size:
            ids, fp, fw, basis = mesh.facet_quadrature(PHYSICAL_GAMMA, order)
            flat = fp.reshape(-1, mesh.dim)
            fu = (u[mesh.facets[ids]] @ basis.T).ravel()
            frho = chart.local_radius(flat)
            k = frho < chart.r_hat
            bu, brho = fu[k], frho[k]
            bw = fw.ravel()[k] * checked(ws.W, "W", flat[k])
        return cls(j, u, uq[keep], w, rho[keep], bu, bw, brho, chart.r, chart.r_hat)

    def volume_part(self, h: float, t: float) -> float:
        """``int_{U(h,t)} (u-h)_+^2 dV2``."""
        sel = (self.vol_rho < t) & (self.vol_u > h)
        return float((self.vol_w[sel] * (self.vol_u[sel] - h) ** 2).sum())

    def boundary_part(self, h: float, t: float) -> float:
        sel = (self.bnd_rho < t) & (self.bnd_u > h)
        return float((self.bnd_w[sel] * (self.bnd_u[sel] - h) ** 2).sum())

    def level_measure(self, h: float, t: float) -> float:
        """V2-measure of ``{u > h}`` inside the ball of radius t."""
        sel = (self.vol_rho < t) & (self.vol_u > h)
        return float(self.vol_w[sel].sum())

    @property
    def max_value(self) -> float:
        vals = np.concatenate([self.vol_u, self.bnd_u])
        return float(vals.max()) if vals.size else 0.0


def psi(probe: LevelSetProbe, h: float, t: float) -> float:
    """``Psi(h, t) = sqrt(int_U (u-h)_+^2 dV2 + int_{U_Gamma} (u-h)_+^2 dW)``."""
    if h < 0:
        raise ValueError("level h must be nonnegative")
    if t > probe.r_hat * (1 + 1e-12):
        raise ValueError(f"radius t = {t} exceeds r_hat = {probe.r_hat}")
    return float(np.sqrt(probe.volume_part(h, t) + probe.boundary_part(h, t)))


@dataclass(frozen=True)
class DeGiorgiResult:
    chart: int
    h0: float
    h: float
    eps: float
    gamma: float
    C: float
    iterations: int
    bound: float
    nodal_max: float
    certified: bool
    contraction: float  # worst measured Psi_i / Psi_{i-1}^(1+eps)
    C2: float
    C3: float
    notes: tuple[str, ...] = ()

    @property
    def margin(self) -> float:
        return self.bound - self.nodal_max


def iteration_eps(q2: float, q3: float, eV: float, eW: float) -> float:
    """``min{1-1/q2-2/2W, 1-1/q3-2/2V, 1-1/q2-2/2V, 1-1/q3-2/2W}``, after checking the exponent relation."""
    floor = max(eV / (eV - 2), eW / (eW - 2))
    if not (q2 > floor and q3 > floor):
        raise ValueError(f"exponents need q2, q3 > max(2V/(2V-2), 2W/(2W-2)) = {floor:.6g}")
    eps = min(1 - 1 / q2 - 2 / eW, 1 - 1 / q3 - 2 / eV, 1 - 1 / q2 - 2 / eV, 1 - 1 / q3 - 2 / eW)
    if eps <= 0:
        raise ValueError(f"exponents give a nonpositive eps = {eps:.6g}")
    return float(eps)


def smallest_C(C3: float, gamma: float, eps: float) -> float:
    """Smallest C with ``2 C3 gamma^(1+eps) C^(-eps) (1 + 1/C) <= 1`` (solved in log space)."""
    a = np.log(2 * C3) + (1 + eps) * np.log(gamma)

    def g(logc: float) -> float:
        return a - eps * logc + np.log1p(np.exp(-logc))

    lo, hi = 0.0, 1.0
    while g(hi) > 0:
        hi *= 2
    if g(lo) <= 0:
        return 1.0
    return float(np.exp(brentq(g, lo, hi, xtol=1e-14, rtol=1e-15)) * (1 + 1e-12))


def degiorgi_bound(u: np.ndarray, cov: Covering, j: int, data_norms: dict, exponents: dict,
                   ws: WeightSet | None = None, embed_V: float = 1.0, embed_W: float = 1.0, K2: float | None = None,
                   safety: float = 2.0, cap: int = 64, emit_tol: float = 0.0) -> DeGiorgiResult:
    """Certified upper bound of u^+ on ``U_{1,j}`` from the level-set iteration.

    ``data_norms`` has keys f, f1, c2, c3 (norms over the chart); ``exponents`` has
    q2, q3, 2V, 2W. The constants C2 = safety max(1, C_2V^2, C_2W^2) and
    C3 = C2 (1 + K2) stand in for the non-explicit ones, with C_2V, C_2W the
    measured embedding and trace norms.
    """
    ws = ws or WeightSet()
    chart = cov.charts[j]
    if chart.kind != 1:
        raise ValueError("the level-set iteration runs on boundary charts")
    q2, q3, eV, eW = (float(exponents[k]) for k in ("q2", "q3", "2V", "2W"))
    eps = iteration_eps(q2, q3, eV, eW)
    gamma = 2.0 ** ((1 + eps) / eps)
    probe = LevelSetProbe.build(cov, j, u, ws)
    mesh = cov.mesh
    if K2 is None:
        pts = mesh.quadrature(2).points.reshape(-1, mesh.dim)
        inside = chart.in_ball(pts)
        R = cov.overlap_sum(pts[inside])
        K2 = float(np.max(R ** 2 * checked(ws.V1, "V1", pts[inside]) / checked(ws.V2, "V2", pts[inside]),
                          initial=0.0))
    C2 = safety * max(1.0, embed_V ** 2, embed_W ** 2)
    C3 = C2 * (1.0 + K2)
    C = smallest_C(C3, gamma, eps)

    e2 = q2 * eV / (q2 * (eV - 2) - eV)
    e3 = q3 * eW / (q3 * (eW - 2) - eW)
    coeff = max(float(data_norms.get("c2", 0.0)) ** e2, float(data_norms.get("c3", 0.0)) ** e3, 1.0)
    upV = np.sqrt(probe.volume_part(0.0, probe.r_hat))
    upW = np.sqrt(probe.boundary_part(0.0, probe.r_hat))
    h0 = C2 * coeff * max(upV, upW)
    F = float(data_norms.get("f", 0.0)) + float(data_norms.get("f1", 0.0))
    psi0 = psi(probe, h0, probe.r_hat)
    h = C * (F + h0 + psi0)

    notes = ["test functions u_h zeta^2 interpolated nodally (zeta^2 is not P1)",
             f"calibrated with C_2V = {embed_V:.6g}, C_2W = {embed_W:.6g}, safety {safety:g}"]
    certified, worst, it = True, 0.0, 0
    prev = psi0
    for i in range(1, cap + 1):
        it = i
        hi = h0 + h * (1 - 0.5 ** i)
        Ri = chart.r + 0.5 ** i * (chart.r_hat - chart.r)
        cur = psi(probe, hi, Ri)
        if prev > 0:
            worst = max(worst, cur / prev ** (1 + eps))
        if cur > psi0 / gamma ** i * (1 + 1e-12) + 1e-300:
            certified = False
            notes.append(f"geometric decay failed at step {i}")
            break
        prev = cur
        if cur <= emit_tol:
            break
    final = psi(probe, h0 + h, chart.r)
    if final > 0:
        certified = False
        notes.append(f"Psi(h0 + h, r) = {final:.3e} is not zero")

    onodes = chart.in_ball(mesh.nodes, chart.r)
    nodal = float(np.max(np.maximum(probe.u[onodes], 0.0), initial=0.0))
    bound = h0 + h
    if bound < nodal:
        certified = False
        notes.append("bound below the nodal maximum")
    if not certified:
        notes.append("no certificate")
    return DeGiorgiResult(j, float(h0), float(h), eps, gamma, C, it, float(bound), nodal, certified,
                          float(worst), C2, C3, tuple(notes))


def tail_sup(u: np.ndarray, mesh: Mesh, m: int) -> Reported:
    """Max of |u| over nodes with exhaustion index above m."""
    sel = mesh.node_index > m
    if not sel.any():
        return Reported(0.0, f"empty tail beyond D_{m}")
    return Reported(float(np.max(np.abs(np.asarray(u)[sel]))), f"{int(sel.sum())} tail nodes")


def tail_sup_sequence(u: np.ndarray, mesh: Mesh) -> list[float]:
    return [float(tail_sup(u, mesh, m)) for m in range(0, mesh.max_index + 1)]


def local_sup_ratio(u: np.ndarray, cov: Covering, j: int, q: float, ws: WeightSet | None = None,
                    order: int = 2) -> float:
    """``||u||_inf / ([||dpsi|| (r_hat - r) + 1] ||u||_{1,q,V0,V1})`` on the inflated ball."""
    mesh = cov.mesh
    if q <= mesh.dim:
        raise ValueError(f"the local sup ratio needs q > n = {mesh.dim}")
    ws = ws or WeightSet()
    chart = cov.charts[j]
    u = np.asarray(u, dtype=float)
    quad = mesh.quadrature(order)
    pts = quad.points.reshape(-1, mesh.dim)
    inside = chart.in_ball(pts).reshape(quad.weights.shape)
    V0 = checked(ws.V0, "V0", pts).reshape(quad.weights.shape)
    V1 = checked(ws.V1, "V1", pts).reshape(quad.weights.shape)
    uq = u[mesh.simplices] @ quad.basis.T
    grad = np.einsum("ea,eai->ei", u[mesh.simplices], quad.grads)
    gnorm = np.sqrt(np.einsum("ei,eij,ej->e", grad, quad.ginv, grad))
    w = quad.weights * inside
    norm = ((w * V0 * np.abs(uq) ** q).sum() + ((w * V1).sum(axis=1) * gnorm ** q).sum()) ** (1 / q)
    nodes = chart.in_ball(mesh.nodes)
    sup = float(np.max(np.abs(u[nodes]), initial=0.0))
    if norm == 0 or sup == 0:
        return 0.0
    return float(sup / ((chart.dpsi * (chart.r_hat - chart.r) + 1.0) * norm))
