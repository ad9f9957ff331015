"""Weight functions, calibration constants and sampled condition checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .geometry import PHYSICAL_GAMMA, Covering, Mesh

PointFunction = Callable[[np.ndarray], np.ndarray]

WEIGHT_NAMES = ("V0", "V1", "V2", "V3", "W", "W1")


class WeightError(ValueError):
    pass


class ExponentError(ValueError):
    pass


def constant(value: float) -> PointFunction:
    def f(points: np.ndarray) -> np.ndarray:
        return np.full(len(np.atleast_2d(points)), float(value))

    f.constant_value = float(value)
    return f


def radial_power(alpha: float, scale: float = 1.0) -> PointFunction:
    """``scale * (1 + |x|)^alpha``."""

    def f(points: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(np.atleast_2d(points), axis=1)
        return scale * (1.0 + r) ** alpha

    return f


def scaled(fn: PointFunction, c: float) -> PointFunction:
    def f(points: np.ndarray) -> np.ndarray:
        return c * fn(points)

    return f


@dataclass(frozen=True)
class WeightSet:
    """The weights V0..V3, W, W1, the indefinite coefficient tau and optional calibrations.

    Calibrations ``b1``..``b4`` map a chart to a positive number; when absent
    they are computed as per-chart extrema by :func:`calibrate`.
    """

    V0: PointFunction = field(default_factory=lambda: constant(1.0))
    V1: PointFunction = field(default_factory=lambda: constant(1.0))
    V2: PointFunction = field(default_factory=lambda: constant(1.0))
    V3: PointFunction = field(default_factory=lambda: constant(1.0))
    W: PointFunction = field(default_factory=lambda: constant(1.0))
    W1: PointFunction = field(default_factory=lambda: constant(1.0))
    tau: PointFunction = field(default_factory=lambda: constant(1.0))
    b1: Callable | None = None
    b2: Callable | None = None
    b3: Callable | None = None
    b4: Callable | None = None
    alpha: tuple[float, float, float] | None = None

    def with_(self, **changes) -> "WeightSet":
        return replace(self, **changes)


def unit_weights(tau: PointFunction | None = None) -> WeightSet:
    return WeightSet(tau=tau or constant(1.0))


def power_weights(alpha0: float, alpha1: float, alpha2: float, tau: PointFunction | None = None,
                  n: int | None = None, strict: bool = False) -> WeightSet:
    """Power family ``V_i = (1 + |x|)^alpha_i``; V3, W, W1 are 1.

    With ``strict`` the parameter ordering of the decaying-width example is enforced.
    """
    if strict:
        if n is None:
            raise WeightError("dimension n is required to validate the power family")
        if not (alpha0 >= 0 >= alpha2 >= alpha1 > -n and alpha0 > alpha2 + n / 2):
            raise WeightError(
                "power family requires alpha0 >= 0 >= alpha2 >= alpha1 > -n and alpha0 > alpha2 + n/2"
            )
    return WeightSet(
        V0=radial_power(alpha0), V1=radial_power(alpha1), V2=radial_power(alpha2),
        tau=tau or constant(1.0), alpha=(alpha0, alpha1, alpha2),
    )


def table_function(mesh: Mesh, values: Sequence[float]) -> PointFunction:
    """P1 interpolant of per-node values (nearest node outside the mesh)."""
    vals = np.asarray(values, dtype=float)
    if vals.shape != (mesh.n_nodes,):
        raise WeightError("node table length must equal the number of mesh nodes")
    if mesh.dim == 1:
        order = np.argsort(mesh.nodes[:, 0])
        xs, ys = mesh.nodes[order, 0], vals[order]
        return lambda p: np.interp(np.atleast_2d(p)[:, 0], xs, ys)
    from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

    lin = LinearNDInterpolator(mesh.nodes, vals)
    near = NearestNDInterpolator(mesh.nodes, vals)

    def f(points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        out = lin(p)
        miss = np.isnan(out)
        if miss.any():
            out[miss] = near(p[miss])
        return out

    return f


def read_node_table(text: str) -> dict[str, np.ndarray]:
    """Parse a ``node_values name1 name2 ...`` section followed by one row per node."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    start = next((i for i, r in enumerate(rows) if r[0] == "node_values"), None)
    if start is None:
        raise WeightError("missing 'node_values' section")
    names = rows[start][1:]
    data = np.array([[float(v) for v in r] for r in rows[start + 1:]])
    if data.ndim != 2 or data.shape[1] != len(names):
        raise WeightError("node table rows must have one value per named column")
    return {nm: data[:, k] for k, nm in enumerate(names)}


def tau_from_spec(spec: Mapping) -> PointFunction:
    """Build tau from a config mapping.

    Kinds: ``constant`` (value), ``halves`` (split, left, right, along x),
    ``radial-step`` (radius, inside, outside).
    """
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return constant(spec.get("value", 1.0))
    if kind == "halves":
        split, left, right = spec.get("split", 0.5), spec.get("left", 1.0), spec.get("right", -1.0)
        return lambda p: np.where(np.atleast_2d(p)[:, 0] < split, float(left), float(right))
    if kind == "radial-step":
        radius, inside, outside = spec["radius"], spec.get("inside", 1.0), spec.get("outside", -1.0)
        return lambda p: np.where(np.linalg.norm(np.atleast_2d(p), axis=1) < radius, float(inside), float(outside))
    raise WeightError(f"unknown tau kind {kind!r}")


def eval_weights(ws: WeightSet, points: np.ndarray) -> dict[str, np.ndarray]:
    """Evaluate every weight and tau at ``points``; weights must be positive."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out: dict[str, np.ndarray] = {}
    for name in WEIGHT_NAMES:
        vals = np.asarray(getattr(ws, name)(pts), dtype=float)
        bad = np.flatnonzero(~(vals > 0) | ~np.isfinite(vals))
        if bad.size:
            k = int(bad[0])
            raise WeightError(f"weight {name} is not positive at point {pts[k].tolist()} (value {vals[k]!r})")
        out[name] = vals
    out["tau"] = np.asarray(ws.tau(pts), dtype=float)
    return out


def checked(fn: PointFunction, name: str, points: np.ndarray) -> np.ndarray:
    vals = np.asarray(fn(points), dtype=float)
    bad = np.flatnonzero(~(vals > 0) | ~np.isfinite(vals))
    if bad.size:
        k = int(bad[0])
        raise WeightError(f"weight {name} is not positive at point {np.atleast_2d(points)[k].tolist()}")
    return vals


# ----------------------------------------------------------------------------
# per-chart sample sets


@dataclass(frozen=True)
class ChartSamples:
    points: np.ndarray  # interior samples in the inflated ball
    volume_points: np.ndarray  # quadrature points in the ball, for integrals
    volume_weights: np.ndarray
    boundary_points: np.ndarray  # Gamma quadrature points in the ball


def chart_samples(cov: Covering, j: int, samples: int = 0, seed: int = 0, order: int = 2) -> ChartSamples:
    """Quadrature points of the mesh inside the inflated ball plus seeded random points.

    Random candidates are drawn from prefix-stable streams, so a larger
    ``samples`` only appends points.
    """
    mesh = cov.mesh
    chart = cov.charts[j]
    quad = _quad_cache(mesh, order)
    pts = quad.points.reshape(-1, mesh.dim)
    wts = quad.weights.ravel()
    inside = chart.in_ball(pts)
    vol_pts, vol_w = pts[inside], wts[inside]
    extra = np.zeros((0, mesh.dim))
    if samples > 0:
        hit = np.flatnonzero(chart.in_ball(mesh.nodes)[mesh.simplices].any(axis=1))
        if hit.size:
            rng_e = np.random.default_rng([seed, j, 0])
            rng_b = np.random.default_rng([seed, j, 1])
            elem = hit[rng_e.integers(0, hit.size, size=samples)]
            bary = -np.log(1.0 - rng_b.random((samples, mesh.dim + 1)))
            bary /= bary.sum(axis=1, keepdims=True)
            cand = np.einsum("sa,sai->si", bary, mesh.nodes[mesh.simplices[elem]])
            extra = cand[chart.in_ball(cand)]
    bpts = np.zeros((0, mesh.dim))
    if chart.kind == 1 and mesh.tagged_facets(PHYSICAL_GAMMA).size:
        _, fp, _, _ = mesh.facet_quadrature(PHYSICAL_GAMMA, order)
        fp = fp.reshape(-1, mesh.dim)
        bpts = fp[chart.in_ball(fp)]
        if mesh.dim > 1:
            nodes = mesh.nodes[mesh.tagged_nodes(PHYSICAL_GAMMA)]
            bpts = np.vstack([bpts, nodes[chart.in_ball(nodes)]])
    return ChartSamples(np.vstack([vol_pts, extra]), vol_pts, vol_w, bpts)


_QUAD: dict[tuple[int, int], object] = {}


def _quad_cache(mesh: Mesh, order: int):
    key = (id(mesh), order)
    hit = _QUAD.get(key)
    if hit is None or hit[0] is not mesh:
        if len(_QUAD) > 16:
            _QUAD.clear()
        hit = (mesh, mesh.quadrature(order))
        _QUAD[key] = hit
    return hit[1]


@dataclass(frozen=True)
class Calibration:
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    b4: np.ndarray


def calibrate(cov: Covering, ws: WeightSet, samples: int = 0, seed: int = 0) -> Calibration:
    """Per-chart calibrations: user functions when given, else the tightest extrema.

    b1 = min V1/||dpsi||, b2 = max V2, b3 = max W on Gamma, b4 = min V0, all over
    the chart's sample set.
    """
    out = {k: np.zeros(len(cov.charts)) for k in ("b1", "b2", "b3", "b4")}
    for j, chart in enumerate(cov.charts):
        s = chart_samples(cov, j, samples, seed)
        pts = s.points if len(s.points) else chart.center[None, :]
        if ws.b1 is not None:
            out["b1"][j] = ws.b1(chart)
        else:
            out["b1"][j] = checked(ws.V1, "V1", pts).min() / chart.dpsi
        out["b2"][j] = ws.b2(chart) if ws.b2 is not None else checked(ws.V2, "V2", pts).max()
        out["b4"][j] = ws.b4(chart) if ws.b4 is not None else checked(ws.V0, "V0", pts).min()
        if ws.b3 is not None:
            out["b3"][j] = ws.b3(chart)
        elif len(s.boundary_points):
            out["b3"][j] = checked(ws.W, "W", s.boundary_points).max()
        else:
            out["b3"][j] = np.nan
    return Calibration(**out)


# ----------------------------------------------------------------------------
# embedding and trace constants


class Reported(float):
    """A float carrying a short note about how it was obtained."""

    note: str = ""

    def __new__(cls, value: float, note: str = ""):
        obj = super().__new__(cls, value)
        obj.note = note
        return obj


def embedding_constant_B(cov: Covering, ws: WeightSet, q: float, q0: float, m: int,
                         samples: int = 0, seed: int = 0, calib: Calibration | None = None) -> Reported:
    """Supremum over charts centered beyond D_m of the chart-local embedding factor.

    The factor is ``b2^(1/q0) / b1^(1/q) * ||G||^(1/q0) * ||G^-1||^(1/q) * r_hat^(n/q0 - n/q + 1)``.
    """
    n = cov.mesh.dim
    if not (1 <= q < n):
        raise ExponentError(f"embedding hypotheses need 1 <= q < n, got q={q}, n={n}")
    upper = n * q / (n - q)
    if not (q <= q0 <= upper + 1e-12):
        raise ExponentError(f"embedding hypotheses need q <= q0 <= nq/(n-q) = {upper:.6g}, got q0={q0}")
    calib = calib or calibrate(cov, ws, samples, seed)
    expo = n / q0 - n / q + 1
    best, count = 0.0, 0
    for j, c in enumerate(cov.charts):
        if c.index <= m:
            continue
        count += 1
        val = (calib.b2[j] ** (1 / q0) / calib.b1[j] ** (1 / q)
               * c.G ** (1 / q0) * c.G_inv ** (1 / q) * c.r_hat ** expo)
        best = max(best, val)
    if count == 0:
        return Reported(0.0, f"empty index set: no chart centered beyond D_{m}")
    return Reported(best, f"supremum over {count} charts")


def trace_constant_B(cov: Covering, ws: WeightSet, q: float, q1: float, m: int,
                     samples: int = 0, seed: int = 0, calib: Calibration | None = None) -> Reported:
    """Boundary analogue of :func:`embedding_constant_B` over kind-1 charts centered on Gamma^m."""
    n = cov.mesh.dim
    if not (1 <= q < n):
        raise ExponentError(f"trace hypotheses need 1 <= q < n, got q={q}, n={n}")
    upper = (n - 1) * q / (n - q)
    if not (q <= q1 <= upper + 1e-12):
        raise ExponentError(f"trace hypotheses need q <= q1 <= (n-1)q/(n-q) = {upper:.6g}, got q1={q1}")
    calib = calib or calibrate(cov, ws, samples, seed)
    expo = (n - 1) / q1 - n / q + 1
    best, count = 0.0, 0
    for j, c in enumerate(cov.charts):
        if c.kind != 1 or c.index <= m or not np.isfinite(calib.b3[j]):
            continue
        count += 1
        val = (calib.b3[j] ** (1 / q1) / calib.b1[j] ** (1 / q)
               * c.G_gamma ** (1 / q1) * c.G_inv ** (1 / q) * c.r_hat ** expo)
        best = max(best, val)
    if count == 0:
        return Reported(0.0, f"empty index set: no boundary chart centered on Gamma beyond D_{m}")
    return Reported(best, f"supremum over {count} boundary charts")


def target_exponent(q: float, n: int, alpha0: float, alpha2: float) -> float:
    """Exponent map ``q -> q(n + alpha2) / (n - q + alpha0)`` of the power family."""
    if not (1 < q < n):
        raise ExponentError(f"exponent map needs 1 < q < n, got q={q}, n={n}")
    return q * (n + alpha2) / (n - q + alpha0)


def exponent_violations(q: float, n: int, qv: float) -> list[str]:
    """Check ``nq/(n-q) >= q_V > q``; returns the violated parts."""
    out = []
    upper = n * q / (n - q)
    if qv > upper + 1e-12:
        out.append(f"q_V = {qv:.6g} exceeds the Sobolev exponent nq/(n-q) = {upper:.6g}")
    if not qv > q:
        out.append(f"q_V = {qv:.6g} does not exceed q = {q:.6g}")
    return out


def sigma_chain(n: int, alpha0: float, alpha2: float, grid: int = 400) -> tuple[bool, str]:
    """Search 1 < sigma < n/(n-1) satisfying the exponent chain of the L1-data hypothesis.

    Returns ``(ok, detail)`` where ``detail`` names the failing link for the best
    sigma when no sigma works.
    """
    if n < 2:
        return False, "untestable: the exponent map needs 1 < q < n, impossible for n = 1"
    k = n // 2
    top = n / (n - 1)

    def qv(x: float) -> float:
        return target_exponent(x, n, alpha0, alpha2)

    best_fail = None
    for sigma in np.linspace(1.0, top, grid + 2)[1:-1]:
        try:
            sv = qv(sigma)
            first = qv(sv / (sv - 1))
            if not sigma / (sigma - 1) <= first + 1e-12:
                best_fail = best_fail or f"link 1 fails at sigma={sigma:.4g}"
                continue
            ok = True
            for i in range(2, k + 1):
                lhs_in = qv((i - 1) * sigma)
                rhs_in = qv(i * sigma)
                if not lhs_in / (lhs_in - (i - 1)) <= qv(rhs_in / (rhs_in - i)) + 1e-12:
                    best_fail = best_fail or f"link {i} fails at sigma={sigma:.4g}"
                    ok = False
                    break
            if not ok:
                continue
            if not qv(k * sigma) >= 2 * k - 1e-12:
                best_fail = best_fail or f"final link (k sigma)_V >= 2k fails at sigma={sigma:.4g}"
                continue
            return True, f"sigma = {sigma:.6g} satisfies the chain (k = {k})"
        except (ExponentError, ZeroDivisionError):
            best_fail = best_fail or f"exponent map undefined along the chain at sigma={sigma:.4g}"
    return False, best_fail or "no admissible sigma"


# ----------------------------------------------------------------------------
# condition report


@dataclass(frozen=True)
class ConditionRecord:
    verdict: str  # pass | fail | untestable
    constant: float
    worst_point: tuple[float, ...] | None
    detail: str = ""


@dataclass(frozen=True)
class ConditionReport:
    records: dict[str, ConditionRecord]
    constants: dict[str, float]
    samples: int
    seed: int
    flags: tuple[str, ...] = ()

    def verdict(self, name: str) -> str:
        return self.records[name].verdict

    def rows(self) -> list[tuple]:
        return [(k, r.verdict, r.constant, r.worst_point, r.detail) for k, r in self.records.items()]


def _shell_growth(values: np.ndarray, index: np.ndarray) -> bool:
    """Detect unbounded growth of a per-chart constant across exhaustion shells."""
    shells = sorted(set(index.tolist()))
    if len(shells) < 3:
        return False
    per = np.array([values[index == m].max() for m in shells])
    tail = per[-3:]
    return bool(np.all(np.diff(tail) > 0) and per[-1] > 1e3 * max(per[0], np.finfo(float).tiny))


def _worst(point_sets: list[np.ndarray], value_sets: list[np.ndarray]) -> tuple[float, tuple | None]:
    best, where = -np.inf, None
    for pts, vals in zip(point_sets, value_sets):
        if len(vals) == 0:
            continue
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, where = float(vals[k]), tuple(float(x) for x in pts[k])
    return (best if np.isfinite(best) else 0.0), where


def check_conditions(cov: Covering, ws: WeightSet, q: float, samples: int = 0, seed: int = 0,
                     q2: float = 1.2) -> ConditionReport:
    """Sampled surrogate checks of the weight and covering conditions.

    Every "for a.e. p" statement is evaluated on quadrature points plus
    ``samples`` seeded random points per chart. Constants are maxima over the
    sample set.
    """
    mesh = cov.mesh
    n = mesh.dim
    recs: dict[str, ConditionRecord] = {}
    flags: list[str] = []
    calib = calibrate(cov, ws, samples, seed)
    per_chart = [chart_samples(cov, j, samples, seed) for j in range(len(cov.charts))]
    cidx = np.array([c.index for c in cov.charts])

    tau_vals = np.concatenate([np.atleast_1d(ws.tau(s.points)) for s in per_chart if len(s.points)] or [np.zeros(0)])
    if not (np.any(tau_vals > 0) and np.any(tau_vals < 0)):
        flags.append("tau does not change sign")
        recs["tau-sign"] = ConditionRecord("fail", 0.0, None, "tau does not change sign")
    else:
        recs["tau-sign"] = ConditionRecord("pass", 0.0, None, "tau takes both signs")

    w1a_p, w1a_v, w1b_v, w4a_v, w5a_v, w5b_v, w5b_p = [], [], [], [], [], [], []
    chart_w1, chart_w4, chart_k3 = np.zeros(len(cov.charts)), np.zeros(len(cov.charts)), np.zeros(len(cov.charts))
    integ = np.zeros(len(cov.charts))
    g_b1 = np.zeros(len(cov.charts))
    g_b4 = np.zeros(len(cov.charts))
    for j, (c, s) in enumerate(zip(cov.charts, per_chart)):
        p = s.points
        if len(p) == 0:
            for lst in (w1a_p, w1a_v, w1b_v, w4a_v, w5a_v):
                lst.append(np.zeros((0, n)) if lst is w1a_p else np.zeros(0))
            w5b_p.append(np.zeros((0, n)))
            w5b_v.append(np.zeros(0))
            continue
        V0, V1, V2 = checked(ws.V0, "V0", p), checked(ws.V1, "V1", p), checked(ws.V2, "V2", p)
        R = cov.overlap_sum(p)
        dpsi = max(c.dpsi, np.finfo(float).eps)
        if c.dpsi < np.finfo(float).eps:
            flags.append(f"chart {j}: ||dpsi|| clamped at machine epsilon")
        a = R ** q * V1 / V0
        b = c.r_hat ** (-q) / dpsi * V1 / V0
        w1a_p.append(p)
        w1a_v.append(np.maximum(a, b))
        w1b_v.append(b)
        w4a_v.append(R ** q * V1 / V2)
        w5a_v.append((dpsi * (c.r_hat - c.r) + 1.0) * V2 / V0)
        if len(s.boundary_points):
            Wv = checked(ws.W, "W", s.boundary_points)
            W1v = checked(ws.W1, "W1", s.boundary_points)
            w5b_v.append((dpsi * (c.r_hat - c.r) + 1.0) * W1v / Wv)
            w5b_p.append(s.boundary_points)
        else:
            w5b_v.append(np.zeros(0))
            w5b_p.append(np.zeros((0, n)))
        integ[j] = float(np.sum(s.volume_weights * checked(ws.V2, "V2", s.volume_points))) if len(s.volume_points) else 0.0
        width = (c.r_hat - c.r) ** n
        g_b1[j] = c.G_inv / (calib.b1[j] * dpsi * width)
        g_b4[j] = c.G_inv / (calib.b4[j] * width)
        chart_w1[j] = w1a_v[-1].max()
        chart_w4[j] = w4a_v[-1].max()
        chart_k3[j] = max(w5a_v[-1].max(), g_b1[j], g_b4[j], integ[j])

    kq1, where1 = _worst(w1a_p, w1a_v)
    verdict = "fail" if _shell_growth(chart_w1, cidx) else "pass"
    recs["W1"] = ConditionRecord(verdict, kq1, where1, "K_q = max of R^q V1/V0 and r_hat^-q ||dpsi||^-1 V1/V0")

    b_ok = np.all(np.isfinite(calib.b1)) and np.all(calib.b1 > 0) and np.all(calib.b2 > 0)
    recs["W2"] = ConditionRecord(
        "pass" if b_ok else "fail", float(np.nanmax(calib.b2 / calib.b1)) if len(calib.b1) else 0.0, None,
        f"b1 in [{calib.b1.min():.4g}, {calib.b1.max():.4g}], b2 in [{calib.b2.min():.4g}, {calib.b2.max():.4g}]"
        if len(calib.b1) else "no charts",
    )
    b3 = calib.b3[np.isfinite(calib.b3)]
    if b3.size == 0:
        recs["W3"] = ConditionRecord("untestable", 0.0, None, "no boundary chart meets Gamma")
    else:
        recs["W3"] = ConditionRecord("pass" if np.all(b3 > 0) else "fail", float(b3.max()), None,
                                     f"b3 in [{b3.min():.4g}, {b3.max():.4g}]")

    kq4, where4 = _worst(w1a_p, w4a_v)
    k3_int = float(integ.max()) if integ.size else 0.0
    verdict = "fail" if (_shell_growth(chart_w4, cidx) or _shell_growth(integ, cidx)) else "pass"
    recs["W4"] = ConditionRecord(verdict, max(kq4, k3_int), where4,
                                 f"K_q = {kq4:.6g} (R^q V1 <= K_q V2), chart integral of V2 <= {k3_int:.6g}")

    k5a, where5 = _worst(w1a_p, w5a_v)
    k5b, _ = _worst(w5b_p, w5b_v)
    k3 = max(k5a, k5b, float(g_b1.max(initial=0.0)), float(g_b4.max(initial=0.0)), k3_int)
    verdict = "fail" if _shell_growth(chart_k3, cidx) else "pass"
    recs["W5"] = ConditionRecord(verdict, k3, where5, "K3 = max over the five clauses and the chart V2 integrals")

    pts_all = np.vstack([s.points for s in per_chart if len(s.points)] or [np.zeros((0, n))])
    overlap = int(cov.overlap_counts(pts_all).max()) if len(pts_all) else 0
    recs["U3"] = ConditionRecord("pass", float(max(cov.R1, overlap)), None,
                                 f"node overlap R1 = {cov.R1}, sampled overlap {overlap}")
    recs["U4"] = ConditionRecord("pass" if np.isfinite(cov.R2) else "fail", cov.R2, None,
                                 "max of ||dpsi|| ||dpsi^-1|| and the determinant products")

    recs.update(_h1_checks(mesh, ws, q2))
    constants = {"K_q_W1": kq1, "K_q_W4": kq4, "K3": k3, "R1": float(cov.R1), "R2": cov.R2}
    return ConditionReport(recs, constants, samples, seed, tuple(flags))


def _h1_checks(mesh: Mesh, ws: WeightSet, q2: float) -> dict[str, ConditionRecord]:
    from .assembly import assemble_Q, assemble_weighted_mass
    from .spectral import tail_functional

    out: dict[str, ConditionRecord] = {}
    quad = mesh.quadrature()
    pts = quad.points.reshape(-1, mesh.dim)
    wts = quad.weights.reshape(mesh.n_simplices, -1)
    eidx = mesh.element_index
    shells = list(range(1, mesh.max_index + 1))
    masses = []
    for name in ("V0", "V1", "V2"):
        vals = checked(getattr(ws, name), name, pts).reshape(wts.shape)
        per = np.array([(wts * vals)[eidx == m].sum() for m in shells])
        masses.append(per)
    total = [float(p.sum()) for p in masses]
    finite = all(np.isfinite(t) for t in total)
    decaying = all(len(p) < 2 or p[-1] <= p[0] for p in masses)
    out["H1(i)"] = ConditionRecord(
        "pass" if finite and decaying else ("fail" if not finite else "untestable"),
        max(total), None,
        "V0, V1, V2 masses " + ", ".join(f"{t:.6g}" for t in total) + ("" if decaying else "; shell masses not decaying"),
    )
    if ws.alpha is not None:
        ok, detail = sigma_chain(mesh.dim, ws.alpha[0], ws.alpha[2])
        verdict = "pass" if ok else ("untestable" if detail.startswith("untestable") else "fail")
        out["H1(ii)"] = ConditionRecord(verdict, 0.0, None, detail)
    else:
        out["H1(ii)"] = ConditionRecord("untestable", 0.0, None, "exponent map only defined for the power family")

    # L1 tail surrogate: sqrt(V0(tail)) * sup over the H1 ball of the L2(V0) tail norm
    Q = assemble_Q(mesh, ws)
    seq = []
    for m in range(0, mesh.max_index):
        sel = eidx > m
        vol = float((wts * checked(ws.V0, "V0", pts).reshape(wts.shape))[sel].sum())
        M = assemble_weighted_mass(mesh, ws.V0, constant(1.0), elements=sel)
        seq.append(math.sqrt(vol) * tail_functional(Q, M, m))
    seq.append(0.0)
    mono = all(b <= a * (1 + 1e-8) + 1e-14 for a, b in zip(seq, seq[1:]))
    shrink = len(seq) > 2 and seq[-2] < 0.5 * seq[0]
    verdict = "pass" if mono and shrink else "untestable"
    out["H1(iii)"] = ConditionRecord(
        verdict, seq[0], None,
        f"L1 tail bound at q=2 (surrogate for q2={q2}): " + ", ".join(f"{v:.4g}" for v in seq),
    )
    return out
