"""Batch front end: ``wsl <pipeline> --config <path> [--out <dir>] [--seed <n>] [--threads <n>]``.

Each pipeline reads a JSON run configuration, writes CSV reports plus a
``summary.txt`` of ``key = value`` lines, and exits with 0 when every
assertion passed, 1 when some failed (listed on stderr) and 2 on a
configuration or runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .assembly import assemble_boundary_mass, assemble_load, assemble_weighted_mass, extend
from .bounds import degiorgi_bound, tail_sup, tail_sup_sequence
from .capacity import CapacityError, ThreeDomainConfig, three_domain_instance
from .geometry import (DIRICHLET_OUTER, PHYSICAL_GAMMA, TAGS, MeshError, Mesh, build_box_mesh, build_covering,
                       build_interval_mesh, build_strip_mesh, mesh_from_text, submesh)
from .l1 import approximate_solve, fredholm_solve, power_schedule, resonance_scan
from .spectral import SpectrumError, dirichlet_spectrum, neumann_forms, operator_norm_embedding, solve_pencil
from .spectral import tail_sequence
from .weights import (ExponentError, WeightError, WeightSet, check_conditions, embedding_constant_B,
                      power_weights, read_node_table, table_function, tau_from_spec, trace_constant_B,
                      unit_weights)

PIPELINES = ("spectrum", "dirichlet-spectrum", "embed-const", "tail", "trace-tail", "capacity", "verify-bounds",
             "l1-solve", "resonance-scan", "degiorgi", "decay", "extension-check", "check-conditions")

FLOAT = "{:.12e}"

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_FUNC = {
    "type": "object",
    "properties": {"kind": {"enum": ["constant", "cos", "power"]}, "value": _NUM, "frequency": _NUM,
                   "exponent": _NUM, "offset": _NUM},
    "required": ["kind"],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "pipeline": {"enum": list(PIPELINES)},
        "output": {"type": "string"},
        "domain": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["interval", "strip", "ambient-box"]},
                "length": _POS, "elements": {"type": "integer", "minimum": 1}, "origin": _NUM,
                "left_tag": {"enum": list(TAGS)}, "right_tag": {"enum": list(TAGS)},
                "profile": {
                    "type": "object",
                    "properties": {"kind": {"enum": ["constant", "power", "exponential"]}, "scale": _POS,
                                   "exponent": _NUM, "rate": _NUM},
                    "required": ["kind"], "additionalProperties": False,
                },
                "x_max": _POS, "resolution": {"type": "integer", "minimum": 1},
                "layers": {"type": "integer", "minimum": 1},
                "lower": {"type": "array", "items": _NUM, "minItems": 1, "maxItems": 2},
                "upper": {"type": "array", "items": _NUM, "minItems": 1, "maxItems": 2},
                "shape": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1, "maxItems": 2},
                "omega": {
                    "type": "object",
                    "properties": {"kind": {"enum": ["all", "halfspace", "ball"]}, "axis": {"type": "integer"},
                                   "offset": _NUM, "center": {"type": "array", "items": _NUM}, "radius": _POS},
                    "required": ["kind"], "additionalProperties": False,
                },
                "mesh_file": {"type": "string"},
            },
            "required": ["kind"],
        },
        "radii": {"type": "array", "items": _POS, "minItems": 1},
        "weights": {
            "type": "object",
            "properties": {
                "preset": {"enum": ["unit", "power", "custom-table"]},
                "alpha": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                "strict": {"type": "boolean"},
                "table": {"type": "string"},
                "tau": {"type": "object"},
            },
            "required": ["preset"],
            "additionalProperties": False,
        },
        "covering": {
            "type": "object",
            "properties": {"chart_radius": _POS, "inflation": {"type": "number", "exclusiveMinimum": 1}},
            "additionalProperties": False,
        },
        "exponents": {
            "type": "object",
            "properties": {k: _POS for k in ("q", "q0", "q1", "q2", "q3", "2V", "2W")},
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {"tol": _POS, "count": {"type": "integer", "minimum": 1}, "cluster_tol": _POS,
                           "fredholm_tol": _POS, "samples": {"type": "integer", "minimum": 0}},
            "additionalProperties": False,
        },
        "options": {
            "type": "object",
            "properties": {
                "lambda": {"oneOf": [_NUM, {"enum": ["lambda_1_plus", "lambda_1_minus"]}]},
                "f0": _FUNC, "f1": _FUNC, "u": _FUNC,
                "stages": {"type": "integer", "minimum": 2},
                "schedule_base": {"type": "number", "exclusiveMinimum": 1},
                "grid_points": {"type": "integer", "minimum": 2},
                "sign": {"enum": ["+", "-"]},
                "delta": {"type": "number", "minimum": 1},
                "refinements": {"type": "integer", "minimum": 1},
                "extension_length": _POS,
                "safety": _POS,
                "decay_factor": _POS,
                "three_domain": {"type": "object"},
            },
            "additionalProperties": False,
        },
    },
    "required": ["domain"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    raw: dict
    base: Path
    seed: int = 0

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))

    @property
    def solver(self) -> dict:
        s = {"tol": 1e-10, "count": 4, "cluster_tol": 1e-6, "fredholm_tol": 1e-8, "samples": 0}
        s.update(self.section("solver"))
        return s

    @property
    def exponents(self) -> dict:
        e = {"q": 2.0, "q0": 2.0, "q1": 2.0, "q2": 6.0, "q3": 6.0, "2V": 6.0, "2W": 6.0}
        e.update(self.section("exponents"))
        return e

    @property
    def options(self) -> dict:
        return self.section("options")


def load_config(path: str | Path, seed: int = 0) -> RunConfig:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {p}: {where}: {exc.message}") from exc
    return RunConfig(raw, p.parent, seed)


# ----------------------------------------------------------------------------
# config -> objects


def point_function(spec: dict | None) -> Callable | None:
    """``constant`` (value), ``cos`` (cos(frequency pi x)), ``power`` (|x - offset|^exponent)."""
    if spec is None:
        return None
    kind = spec["kind"]
    if kind == "constant":
        v = float(spec.get("value", 1.0))
        return lambda p: np.full(len(np.atleast_2d(p)), v)
    if kind == "cos":
        k = float(spec.get("frequency", 1.0))
        return lambda p: np.cos(k * np.pi * np.atleast_2d(p)[:, 0])
    e, off = float(spec.get("exponent", 1.0)), float(spec.get("offset", 0.0))

    def f(p):
        d = np.abs(np.atleast_2d(p)[:, 0] - off)
        with np.errstate(divide="ignore"):
            return np.where(d > 0, d ** e, 0.0 if e > 0 else np.inf)
    return f


def _profile(spec: dict) -> Callable:
    c = float(spec.get("scale", 1.0))
    kind = spec["kind"]
    if kind == "constant":
        return lambda x: np.full_like(np.asarray(x, dtype=float), c)
    if kind == "power":
        e = float(spec.get("exponent", -1.0))
        return lambda x: c * (1.0 + np.asarray(x, dtype=float)) ** e
    k = float(spec.get("rate", 1.0))
    return lambda x: c * np.exp(-k * np.asarray(x, dtype=float))


def _omega_mask(mesh: Mesh, spec: dict) -> np.ndarray:
    cent = mesh.nodes[mesh.simplices].mean(axis=1)
    kind = spec["kind"]
    if kind == "all":
        return np.ones(mesh.n_simplices, dtype=bool)
    if kind == "halfspace":
        axis = int(spec.get("axis", 0))
        if not 0 <= axis < mesh.dim:
            raise ConfigError(f"halfspace axis {axis} outside dimension {mesh.dim}")
        return cent[:, axis] > float(spec.get("offset", 0.0))
    center = np.asarray(spec.get("center", [0.0] * mesh.dim), dtype=float)
    return np.linalg.norm(cent - center, axis=1) < float(spec["radius"])


@dataclass
class Domain:
    mesh: Mesh
    ambient: Mesh | None = None  # enclosing mesh when Omega is a submesh of a box
    notes: list = field(default_factory=list)


def build_domain(cfg: RunConfig, refine_level: int = 0) -> Domain:
    d = cfg.section("domain")
    radii = cfg.raw.get("radii")
    kind = d["kind"]
    k = 2 ** refine_level
    if "mesh_file" in d:
        mesh = mesh_from_text((cfg.base / d["mesh_file"]).read_text())
        return Domain(mesh)
    if kind == "interval":
        length = float(d.get("length", 1.0))
        radii = radii or [length]
        mesh = build_interval_mesh(length, int(d.get("elements", 64)) * k, radii, origin=float(d.get("origin", 0.0)),
                                   left_tag=d.get("left_tag", PHYSICAL_GAMMA),
                                   right_tag=d.get("right_tag", "TruncationCut"))
        return Domain(mesh)
    if kind == "strip":
        x_max = float(d.get("x_max", 4.0))
        layers = d.get("layers")
        mesh = build_strip_mesh(_profile(d.get("profile", {"kind": "constant"})), x_max,
                                int(d.get("resolution", 4)) * k, radii or [x_max + 2.0],
                                layers=None if layers is None else int(layers) * k)
        return Domain(mesh)
    lower, upper = d.get("lower"), d.get("upper")
    shape = d.get("shape")
    if lower is None or upper is None or shape is None:
        raise ConfigError("ambient-box needs lower, upper and shape")
    if not len(lower) == len(upper) == len(shape):
        raise ConfigError("ambient-box lower, upper and shape must have equal length")
    box = build_box_mesh(lower, upper, [s * k for s in shape],
                         radii or [float(np.linalg.norm(np.maximum(np.abs(lower), np.abs(upper)))) + 1.0])
    mask = _omega_mask(box, d.get("omega", {"kind": "all"}))
    if not mask.any():
        raise ConfigError("the Omega selector of the ambient box is empty")
    if mask.all():
        return Domain(box, box)
    sub, _ = submesh(box, mask)
    return Domain(sub, box)


def build_weights(cfg: RunConfig, mesh: Mesh) -> WeightSet:
    w = cfg.section("weights") or {"preset": "unit"}
    tau = tau_from_spec(w["tau"]) if "tau" in w else None
    preset = w["preset"]
    if preset == "unit":
        return unit_weights(tau)
    if preset == "power":
        if "alpha" not in w:
            raise ConfigError("the power preset needs alpha = [alpha0, alpha1, alpha2]")
        a0, a1, a2 = (float(x) for x in w["alpha"])
        return power_weights(a0, a1, a2, tau, n=mesh.dim, strict=bool(w.get("strict", False)))
    if "table" not in w:
        raise ConfigError("the custom-table preset needs a table file")
    path = cfg.base / w["table"]
    try:
        cols = read_node_table(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read weight table {path}: {exc}") from exc
    known = {"V0", "V1", "V2", "V3", "W", "W1", "tau"}
    unknown = set(cols) - known
    if unknown:
        raise ConfigError(f"unknown weight table columns {sorted(unknown)}; valid: {sorted(known)}")
    ws = unit_weights(tau)
    return ws.with_(**{k: table_function(mesh, v) for k, v in cols.items()})


def _tau_values(mesh: Mesh, ws: WeightSet) -> np.ndarray:
    return np.asarray(ws.tau(mesh.quadrature(2).points.reshape(-1, mesh.dim)), dtype=float)


def _require_sign_change(mesh: Mesh, ws: WeightSet, notes: list) -> None:
    tau = _tau_values(mesh, ws)
    if not np.any(tau != 0):
        raise ConfigError("tau vanishes identically: the indefinite problem needs tau to change sign "
                          "(sign-change precondition), so there is no spectrum to compute")


def _covering(cfg: RunConfig, mesh: Mesh):
    c = {"chart_radius": 0.25, "inflation": 1.5}
    c.update(cfg.section("covering"))
    return build_covering(mesh, float(c["chart_radius"]), float(c["inflation"]))


# ----------------------------------------------------------------------------
# output


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return FLOAT.format(float(x))
    return str(x).replace(",", ";").replace("\n", " ")


@dataclass
class Outcome:
    tables: dict = field(default_factory=dict)  # file name -> (header, rows)
    summary: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def check(self, ok: bool, message: str) -> None:
        if not ok:
            self.failures.append(message)


def write_outputs(out_dir: Path, pipeline: str, outcome: Outcome, cfg: RunConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in outcome.tables.items():
        lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
        (out_dir / name).write_text("\n".join(lines) + "\n")
    summary = {"pipeline": pipeline, "version": __version__, "seed": cfg.seed}
    summary.update(outcome.summary)
    summary["assertions_failed"] = len(outcome.failures)
    for i, msg in enumerate(outcome.failures, 1):
        summary[f"failure_{i}"] = msg
    summary["status"] = "pass" if not outcome.failures else "fail"
    text = "".join(f"{k} = {fmt(v)}\n" for k, v in summary.items())
    (out_dir / "summary.txt").write_text(text)


SPECTRUM_HEADER = ["branch", "index i", "eigenvalue lambda_i [1]", "relative residual [1]",
                   "tau normalization int tau phi^2 dV2 [1]"]


def _spectrum_rows(spec) -> list:
    return [list(r) for r in spec.rows()]


# ----------------------------------------------------------------------------
# pipelines


def _dirichlet_tags(mesh: Mesh) -> tuple[str, ...]:
    return (DIRICHLET_OUTER,) if DIRICHLET_OUTER in set(mesh.facet_tags) else ()


def _pencil(cfg: RunConfig, dom: Domain, ws: WeightSet, notes: list):
    _require_sign_change(dom.mesh, ws, notes)
    Q, Mtau = neumann_forms(dom.mesh, ws, _dirichlet_tags(dom.mesh))
    s = cfg.solver
    spec = solve_pencil(Q, Mtau, int(s["count"]), float(s["tol"]), cfg.seed)
    return Q, Mtau, spec


def _spectrum_checks(out: Outcome, spec, tol: float) -> None:
    for name, i, lam, res, nv in spec.rows():
        out.check(res <= 100 * tol, f"{name} {i}: residual {res:.3e} above {100 * tol:.1e}")
        out.check(abs(abs(nv) - 1.0) <= 1e-8, f"{name} {i}: tau normalization {nv:.12g} differs from +-1")


def run_spectrum(cfg: RunConfig) -> Outcome:
    dom = build_domain(cfg)
    ws = build_weights(cfg, dom.mesh)
    notes: list = []
    _, _, spec = _pencil(cfg, dom, ws, notes)
    out = Outcome()
    out.tables["spectrum.csv"] = (SPECTRUM_HEADER, _spectrum_rows(spec))
    for side, label in (("+", "plus"), ("-", "minus")):
        if len(spec.branch(side)):
            out.summary[f"lambda_1_{label}"] = spec.eigenvalue(side, 1)
    out.summary["nodes"] = dom.mesh.n_nodes
    out.summary["notes"] = "; ".join(notes + list(spec.notes))
    _spectrum_checks(out, spec, float(cfg.solver["tol"]))
    return out


def run_dirichlet_spectrum(cfg: RunConfig) -> Outcome:
    dom = build_domain(cfg)
    ws = build_weights(cfg, dom.mesh)
    s = cfg.solver
    spec = dirichlet_spectrum(dom.mesh, ws, int(s["count"]), float(s["tol"]), cfg.seed)
    out = Outcome()
    out.tables["dirichlet_spectrum.csv"] = (SPECTRUM_HEADER, _spectrum_rows(spec))
    out.summary["lambda_1_dirichlet"] = spec.eigenvalue("+", 1)
    out.summary["notes"] = "; ".join(spec.notes)
    _spectrum_checks(out, spec, float(s["tol"]))
    return out


def run_embed_const(cfg: RunConfig) -> Outcome:
    dom = build_domain(cfg)
    mesh = dom.mesh
    ws = build_weights(cfg, mesh)
    tags = _dirichlet_tags(mesh)
    Q, _ = neumann_forms(mesh, ws, tags)
    one = lambda p: np.ones(len(p))  # noqa: E731
    MV2 = assemble_weighted_mass(mesh, one, ws.V2, dirichlet_on=tags, provenance="massV2")
    rows = [["volume embedding norm ||u||_{2;V2} / ||u||_{1;2;V0;V1}", operator_norm_embedding(Q, MV2, seed=cfg.seed),
             "measured"]]
    if mesh.tagged_facets(PHYSICAL_GAMMA).size:
        B = assemble_boundary_mass(mesh, ws.W, PHYSICAL_GAMMA, dirichlet_on=tags, provenance="boundaryW")
        rows.append(["trace embedding norm ||u||_{2;W;Gamma} / ||u||_{1;2;V0;V1}",
                     operator_norm_embedding(Q, B, seed=cfg.seed), "measured"])
    e = cfg.exponents
    notes = []
    if 1 <= e["q"] < mesh.dim:
        cov = _covering(cfg, mesh)
        samples = int(cfg.solver["samples"])
        for m in range(mesh.max_index + 1):
            b = embedding_constant_B(cov, ws, e["q"], e["q0"], m, samples, cfg.seed)
            rows.append([f"chart embedding factor B beyond D_{m}", float(b), b.note])
            t = trace_constant_B(cov, ws, e["q"], e["q1"], m, samples, cfg.seed)
            rows.append([f"chart trace factor B beyond D_{m}", float(t), t.note])
    else:
        notes.append(f"chart factors skipped: they need 1 <= q < n (q = {e['q']:g}, n = {mesh.dim})")
    out = Outcome()
    out.tables["embedding.csv"] = (["quantity", "value [1]", "note"], rows)
    out.summary["embedding_norm"] = rows[0][1]
    out.summary["notes"] = "; ".join(notes)
    for r in rows:
        out.check(np.isfinite(r[1]) and r[1] >= 0, f"{r[0]} is not a finite nonnegative number")
    return out


def _tail(cfg: RunConfig, boundary: bool) -> Outcome:
    dom = build_domain(cfg)
    ws = build_weights(cfg, dom.mesh)
    seq = tail_sequence(dom.mesh, ws, boundary=boundary, seed=cfg.seed)
    label = "trace tail sigma_m on Gamma^m [1]" if boundary else "tail sigma_m on Omega^m [1]"
    counts = [int((dom.mesh.node_index > m).sum()) for m in range(len(seq))]
    out = Outcome()
    out.tables["trace_tail.csv" if boundary else "tail.csv"] = (
        ["m", label, "tail nodes"], [[m, v, c] for m, (v, c) in enumerate(zip(seq, counts))])
    nonempty = [v for v, c in zip(seq, counts) if c > 0]
    out.summary["sigma_first"] = seq[0]
    out.summary["sigma_last_nonempty"] = nonempty[-1] if nonempty else 0.0
    for m in range(1, len(seq)):
        out.check(seq[m] <= seq[m - 1] + 1e-8, f"sigma_{m} = {seq[m]:.12g} exceeds sigma_{m - 1} = {seq[m - 1]:.12g}")
    return out


def run_tail(cfg: RunConfig) -> Outcome:
    return _tail(cfg, False)


def run_trace_tail(cfg: RunConfig) -> Outcome:
    return _tail(cfg, True)


def _three_domain(cfg: RunConfig):
    opts = dict(cfg.options.get("three_domain", {}))
    if "radii" in opts:
        opts["radii"] = tuple(opts["radii"])
    try:
        tdc = ThreeDomainConfig(**opts)
    except TypeError as exc:
        raise ConfigError(f"options/three_domain: {exc}") from exc
    return three_domain_instance(tdc, cfg.seed)


def run_capacity(cfg: RunConfig) -> Outcome:
    res = _three_domain(cfg)
    out = Outcome()
    rows = []
    for name, c in res.capacities.items():
        rows.append([name, c.value, c.residual, res.ell if c.ell is None else c.ell, " ".join(c.notes)])
        out.check(c.value >= -1e-12, f"{name} = {c.value:.6g} is negative")
    out.tables["capacity.csv"] = (["quantity", "value [energy]", "residual [1]", "ell [1]", "notes"], rows)
    out.summary.update({name: c.value for name, c in res.capacities.items()})
    out.summary["tail_tau_mass"] = res.tail_tau_mass
    return out


def run_verify_bounds(cfg: RunConfig) -> Outcome:
    res = _three_domain(cfg)
    rep = res.report
    out = Outcome()
    out.tables["bounds.csv"] = (["inequality", "lhs [1]", "rhs [1]", "margin (positive when satisfied) [1]",
                                 "verdict", "hypothesis", "case row"],
                                [list(r) for r in rep.rows()])
    out.tables["bound_quantities.csv"] = (["quantity", "value [1]"], [[k, v] for k, v in rep.quantities])
    out.summary["case_row"] = rep.case_row
    out.summary["rayleigh_sandwich"] = res.sandwich[0]
    out.summary["notes"] = "; ".join(res.notes)
    for r in rep.records:
        out.check(r.verdict != "fail", f"{r.name}: margin {r.margin:.6g}")
    return out


def _lambda_value(cfg: RunConfig, spec_fn) -> float:
    lam = cfg.options.get("lambda", 0.0)
    if isinstance(lam, str):
        spec = spec_fn()
        return spec.eigenvalue("+" if lam.endswith("plus") else "-", 1)
    return float(lam)


def run_l1_solve(cfg: RunConfig) -> Outcome:
    dom = build_domain(cfg)
    mesh = dom.mesh
    ws = build_weights(cfg, mesh)
    opts, s = cfg.options, cfg.solver
    tags = _dirichlet_tags(mesh)
    Q, Mtau = neumann_forms(mesh, ws, tags)
    lam = _lambda_value(cfg, lambda: solve_pencil(Q, Mtau, 1, float(s["tol"]), cfg.seed))
    f0 = point_function(opts.get("f0", {"kind": "constant", "value": 1.0}))
    f1 = point_function(opts.get("f1"))
    out = Outcome()
    out.summary["lambda"] = lam
    if "stages" in opts:
        qs = (1.2, 1.4)
        sol = approximate_solve(f0, f1, lam, int(opts["stages"]), mesh, ws, qs,
                                power_schedule(float(opts.get("schedule_base", 2.0))), tags,
                                float(s["fredholm_tol"]), float(s["cluster_tol"]))
        rows = [[st["stage"], st["level"], st["l1_distance"]] + [st["norms"][q] for q in qs] + [st["residual"]]
                for st in sol.stages]
        out.tables["l1_history.csv"] = (
            ["stage j", "truncation level T_j [data units]", "L1 distance to f0 [data units]",
             "norm ||u_j||_{1;1.2} [1]", "norm ||u_j||_{1;1.4} [1]", "relative residual [1]"], rows)
        out.tables["l1_limit.csv"] = (["node", "x", "u"], [[i, float(mesh.nodes[i, 0]), float(v)]
                                                             for i, v in enumerate(sol.limit)])
        out.summary["status"] = sol.status
        for q in qs:
            ratio = sol.boundedness_ratio(q)
            out.summary[f"boundedness_ratio_q{q:g}"] = ratio
            out.check(ratio <= 10.0, f"norm history for q = {q:g} has max/median {ratio:.6g} > 10")
        out.check(sol.residual <= float(s["fredholm_tol"]), f"final residual {sol.residual:.3e}")
        return out
    load = assemble_load(mesh, f0, f1, ws, tags)
    one = lambda p: np.ones(len(p))  # noqa: E731
    MV2 = assemble_weighted_mass(mesh, one, ws.V2, dirichlet_on=tags, provenance="massV2")
    tau_sup = float(np.max(np.abs(_tau_values(mesh, ws))))
    res = fredholm_solve(Q, Mtau, lam, load, float(s["fredholm_tol"]), float(s["cluster_tol"]), MV2, tau_sup)
    out.summary["status"] = res.status
    out.summary["nearest_eigenvalue"] = res.nearest
    out.summary["shift"] = res.shift
    out.summary["orthogonality"] = " ".join(fmt(float(r)) for r in res.orthogonality)
    out.summary["notes"] = "; ".join(res.notes)
    if res.solved:
        u = Q.expand(res.solution)
        out.tables["solution.csv"] = (["node", "x", "u"], [[i, float(mesh.nodes[i, 0]), float(v)]
                                                           for i, v in enumerate(u)])
        out.summary["residual"] = res.residual
        out.check(res.residual <= float(s["fredholm_tol"]), f"relative residual {res.residual:.3e}")
    else:
        out.check(False, "data not orthogonal to the eigenspace: orthogonality residuals "
                  + " ".join(f"{float(r):.6g}" for r in res.orthogonality))
    return out


def run_resonance_scan(cfg: RunConfig) -> Outcome:
    dom = build_domain(cfg)
    ws = build_weights(cfg, dom.mesh)
    notes: list = []
    Q, Mtau, spec = _pencil(cfg, dom, ws, notes)
    ev = np.concatenate([spec.negative.values, spec.positive.values])
    lo = spec.eigenvalue("-", 1) - 1.0 if len(spec.negative) else 0.0
    hi = spec.eigenvalue("+", min(2, len(spec.positive))) + 1.0 if len(spec.positive) else 0.0
    grid = np.linspace(lo, hi, int(cfg.options.get("grid_points", 200)))
    inside = ev[(ev >= lo) & (ev <= hi)]
    lams = np.unique(np.concatenate([grid, inside]))
    scan = resonance_scan(Q, Mtau, lams, ev, float(cfg.solver["cluster_tol"]))
    out = Outcome()
    out.tables["resonance_scan.csv"] = (["lambda [1]", "status", "agrees with eigenvalue list"],
                                        [list(r) for r in scan])
    out.summary["points"] = len(scan)
    out.summary["resonant"] = sum(1 for r in scan if r[1] == "Resonant")
    out.summary["eigenvalues_in_range"] = len(inside)
    for lam, status, agrees in scan:
        out.check(agrees, f"lambda = {lam:.12g} classified {status}")
    return out


def _first_eigenfunction(cfg: RunConfig, dom: Domain, ws: WeightSet, sign: str):
    notes: list = []
    Q, Mtau, spec = _pencil(cfg, dom, ws, notes)
    if not len(spec.branch(sign)):
        raise ConfigError(f"the {sign} branch is empty for this tau")
    return spec.eigenvalue(sign, 1), spec.vector(sign, 1), Q


def run_degiorgi(cfg: RunConfig) -> Outcome:
    dom = build_domain(cfg)
    mesh = dom.mesh
    ws = build_weights(cfg, mesh)
    sign = cfg.options.get("sign", "+")
    lam, u, Q = _first_eigenfunction(cfg, dom, ws, sign)
    cov = _covering(cfg, mesh)
    charts = [j for j, c in enumerate(cov.charts) if c.kind == 1]
    if not charts:
        raise ConfigError("the covering has no boundary charts: Gamma is empty")
    tags = _dirichlet_tags(mesh)
    one = lambda p: np.ones(len(p))  # noqa: E731
    eV = operator_norm_embedding(Q, assemble_weighted_mass(mesh, one, ws.V2, dirichlet_on=tags), seed=cfg.seed)
    eW = operator_norm_embedding(Q, assemble_boundary_mass(mesh, ws.W, PHYSICAL_GAMMA, dirichlet_on=tags),
                                 seed=cfg.seed)
    tau_sup = float(np.max(np.abs(_tau_values(mesh, ws))))
    norms = {"f": 0.0, "f1": 0.0, "c2": abs(lam) * tau_sup, "c3": 0.0}
    e = cfg.exponents
    exps = {k: e[k] for k in ("q2", "q3", "2V", "2W")}
    safety = float(cfg.options.get("safety", 2.0))
    rows = []
    out = Outcome()
    for part, v in (("u", u), ("-u", -u)):
        for j in charts:
            r = degiorgi_bound(v, cov, j, norms, exps, ws, eV, eW, safety=safety)
            rows.append([part, j, r.h0, r.h, r.eps, r.gamma, r.C, r.iterations, r.bound, r.nodal_max, r.certified])
            out.check(r.bound >= r.nodal_max, f"{part} chart {j}: bound {r.bound:.6g} below nodal max {r.nodal_max:.6g}")
    out.tables["degiorgi.csv"] = (
        ["function", "chart", "h0 [u units]", "h [u units]", "eps [1]", "gamma [1]", "C [1]", "iterations",
         "bound sup u^+ [u units]", "nodal max u^+ [u units]", "certified"], rows)
    out.summary["lambda"] = lam
    out.summary["boundary_charts"] = len(charts)
    out.summary["certified"] = sum(1 for r in rows if r[-1])
    out.summary["embedding_V"] = eV
    out.summary["embedding_W"] = eW
    out.summary["notes"] = "nodal interpolation of u_h zeta^2 (zeta^2 is not P1)"
    return out


def run_decay(cfg: RunConfig) -> Outcome:
    dom = build_domain(cfg)
    mesh = dom.mesh
    ws = build_weights(cfg, mesh)
    lam, u, _ = _first_eigenfunction(cfg, dom, ws, cfg.options.get("sign", "+"))
    seq = tail_sup_sequence(u, mesh)
    rows = [[m, v, tail_sup(u, mesh, m).note] for m, v in enumerate(seq)]
    counts = [int((mesh.node_index > m).sum()) for m in range(len(seq))]
    nonempty = [v for v, c in zip(seq, counts) if c > 0]
    out = Outcome()
    out.tables["decay.csv"] = (["m", "max |u| over tail nodes [u units]", "note"], rows)
    out.summary["lambda"] = lam
    out.summary["initial"] = nonempty[0] if nonempty else 0.0
    out.summary["final_nonempty"] = nonempty[-1] if nonempty else 0.0
    for m in range(1, len(seq)):
        out.check(seq[m] <= seq[m - 1], f"tail sup increases at m = {m}")
    factor = float(cfg.options.get("decay_factor", 0.5))
    if len(nonempty) >= 2:
        out.check(nonempty[-1] < factor * nonempty[0],
                  f"final tail sup {nonempty[-1]:.6g} not below {factor:g} x initial {nonempty[0]:.6g}")
    else:
        out.check(False, "fewer than two nonempty tails: decay cannot be measured")
    return out


def _extension_level(cfg: RunConfig, level: int, f: Callable, delta: float):
    dom = build_domain(cfg, level)
    omega = dom.mesh
    ambient = dom.ambient
    if ambient is None or ambient is omega:
        d = cfg.section("domain")
        if d["kind"] != "interval" or "mesh_file" in d:
            raise ConfigError("extension-check needs an interval domain or an ambient box with an Omega selector")
        length = float(d.get("length", 1.0))
        origin = float(d.get("origin", 0.0))
        n = int(d.get("elements", 64)) * 2 ** level
        ext = float(cfg.options.get("extension_length", length))
        h = length / n
        k = max(1, int(round(ext / h)))
        ambient = build_interval_mesh(length + k * h, n + k, omega.radii, origin=origin - k * h,
                                      left_tag=DIRICHLET_OUTER, right_tag=omega.facet_tags[-1])
    ws = build_weights(cfg, omega)
    cov = _covering(cfg, omega)
    u = np.asarray(f(omega.nodes), dtype=float)
    res = extend(u, cov, delta, ambient, float(cfg.exponents["q"]), ws)
    ident = float(np.max(np.abs(res.values[res.omega_nodes] - u)))
    return omega, res, ident


def run_extension_check(cfg: RunConfig) -> Outcome:
    f = point_function(cfg.options.get("u", {"kind": "cos", "frequency": 1.0}))
    delta = float(cfg.options.get("delta", 1.0))
    levels = int(cfg.options.get("refinements", 2))
    rows, ratios = [], []
    out = Outcome()
    for level in range(levels + 1):
        omega, res, ident = _extension_level(cfg, level, f, delta)
        ratios.append(res.ratio)
        rows.append([level, omega.n_nodes, res.ratio, res.support_ok, ident])
        out.check(ident == 0.0, f"level {level}: E u differs from u on Omega by {ident:.3e}")
        out.check(res.support_ok, f"level {level}: extension support leaves the inflated balls")
    out.tables["extension.csv"] = (["refinement level", "Omega nodes", "norm ratio ||Eu|| / ||u|| [1]",
                                    "support in inflated balls", "max |Eu - u| on Omega"], rows)
    for a, b in zip(ratios, ratios[1:]):
        out.check(abs(b - a) < 0.1 * a, f"norm ratio changes from {a:.6g} to {b:.6g} (10% limit)")
    out.summary["ratio_finest"] = ratios[-1]
    return out


def run_check_conditions(cfg: RunConfig) -> Outcome:
    dom = build_domain(cfg)
    ws = build_weights(cfg, dom.mesh)
    cov = _covering(cfg, dom.mesh)
    e = cfg.exponents
    rep = check_conditions(cov, ws, float(e["q"]), int(cfg.solver["samples"]), cfg.seed, float(e["q2"]))
    out = Outcome()
    rows = [[k, v, c, "" if w is None else " ".join(fmt(x) for x in w), d] for k, v, c, w, d in rep.rows()]
    out.tables["conditions.csv"] = (["condition", "verdict", "constant [1]", "worst point", "detail"], rows)
    out.tables["condition_constants.csv"] = (["constant", "value [1]"], [[k, v] for k, v in rep.constants.items()])
    out.summary["charts"] = len(cov.charts)
    out.summary["flags"] = "; ".join(rep.flags)
    for k, v, *_ in rep.rows():
        out.check(v != "fail", f"condition {k} fails")
    return out


RUNNERS: dict[str, Callable[[RunConfig], Outcome]] = {
    "spectrum": run_spectrum, "dirichlet-spectrum": run_dirichlet_spectrum, "embed-const": run_embed_const,
    "tail": run_tail, "trace-tail": run_trace_tail, "capacity": run_capacity, "verify-bounds": run_verify_bounds,
    "l1-solve": run_l1_solve, "resonance-scan": run_resonance_scan, "degiorgi": run_degiorgi, "decay": run_decay,
    "extension-check": run_extension_check, "check-conditions": run_check_conditions,
}

_CONFIG_ERRORS = (ConfigError, MeshError, WeightError, ExponentError, SpectrumError, CapacityError, ValueError,
                  KeyError, RuntimeError, np.linalg.LinAlgError)


def run(pipeline: str, cfg: RunConfig, out_dir: Path | None = None) -> tuple[int, Outcome | None, str]:
    """Execute one pipeline; returns (exit code, outcome, message)."""
    if pipeline not in RUNNERS:
        return 2, None, f"unknown pipeline {pipeline!r}; valid pipelines: {', '.join(PIPELINES)}"
    named = cfg.raw.get("pipeline")
    if named is not None and named != pipeline:
        return 2, None, f"config names pipeline {named!r} but {pipeline!r} was requested"
    try:
        outcome = RUNNERS[pipeline](cfg)
    except _CONFIG_ERRORS as exc:
        return 2, None, f"{pipeline}: {exc}"
    except Exception as exc:  # anything else is still a runtime error, not an assertion failure
        return 2, None, f"{pipeline}: runtime error {type(exc).__name__}: {exc}"
    target = out_dir or Path(cfg.raw.get("output", "wsl-out"))
    write_outputs(target, pipeline, outcome, cfg)
    if outcome.failures:
        return 1, outcome, "\n".join(f"assertion failed: {m}" for m in outcome.failures)
    return 0, outcome, f"{pipeline}: all assertions passed"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="wsl", description="Weighted Sobolev laboratory pipelines.")
    parser.add_argument("pipeline", help="one of: " + ", ".join(PIPELINES))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides the config)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)
    if args.pipeline not in RUNNERS:
        print(f"unknown pipeline {args.pipeline!r}; valid pipelines: {', '.join(PIPELINES)}", file=sys.stderr)
        return 2
    if args.seed < 0 or args.threads < 1:
        print("--seed must be nonnegative and --threads at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    with threadpool_limits(limits=args.threads):
        code, _, message = run(args.pipeline, cfg, Path(args.out) if args.out else None)
    print(message, file=sys.stderr if code else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
