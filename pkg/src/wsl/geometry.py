"""Meshes of truncated model domains, exhaustions and chart coverings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .quadrature import gauss_interval, p1_basis, simplex_rule

PHYSICAL_GAMMA = "PhysicalGamma"
TRUNCATION_CUT = "TruncationCut"
DIRICHLET_OUTER = "DirichletOuter"
TAGS = (PHYSICAL_GAMMA, TRUNCATION_CUT, DIRICHLET_OUTER)

_RADIUS_TOL = 1e-12


class MeshError(ValueError):
    """Invalid mesh input or a mesh that cannot resolve the requested domain."""


def validate_radii(radii: Sequence[float]) -> np.ndarray:
    r = np.asarray(radii, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise MeshError("exhaustion radii must be a nonempty list")
    if np.any(r <= 0):
        raise MeshError("exhaustion radii must be positive")
    if np.any(np.diff(r) <= 0):
        raise MeshError(f"exhaustion radii must be strictly increasing, got {list(r)}")
    return r


def exhaustion_index(points: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Smallest m (1-based) with |p| <= r_m; ``len(radii) + 1`` beyond the last radius."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dist = np.linalg.norm(pts, axis=1)
    return np.searchsorted(radii, dist - _RADIUS_TOL, side="left").astype(int) + 1


def _cover_radii(radii: np.ndarray, nodes: np.ndarray) -> tuple[np.ndarray, tuple[str, ...]]:
    far = float(np.linalg.norm(nodes, axis=1).max())
    if far > radii[-1] + _RADIUS_TOL:
        note = (f"exhaustion radii did not cover the domain; appended final radius {far:.12g}",)
        return np.append(radii, far), note
    return radii, ()


@dataclass(frozen=True)
class Mesh:
    """Simplicial mesh with boundary tags, exhaustion indices and a per-simplex metric.

    ``metric`` is ``None`` for the identity metric, otherwise an array of shape
    ``(n_simplices, n, n)``.
    """

    nodes: np.ndarray
    simplices: np.ndarray
    facets: np.ndarray
    facet_tags: tuple[str, ...]
    radii: np.ndarray
    metric: np.ndarray | None = None
    notes: tuple[str, ...] = ()
    node_index: np.ndarray = field(init=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "simplices", np.asarray(self.simplices, dtype=int))
        facets = np.asarray(self.facets, dtype=int).reshape(-1, nodes.shape[1])
        object.__setattr__(self, "facets", facets)
        object.__setattr__(self, "facet_tags", tuple(self.facet_tags))
        object.__setattr__(self, "radii", validate_radii(self.radii))
        if len(self.facet_tags) != len(facets):
            raise MeshError("one tag per boundary facet is required")
        bad = set(self.facet_tags) - set(TAGS)
        if bad:
            raise MeshError(f"unknown facet tags {sorted(bad)}")
        object.__setattr__(self, "node_index", exhaustion_index(nodes, self.radii))
        self._check_simplices()

    def _check_simplices(self) -> None:
        det = np.linalg.det(self.jacobians()) if self.dim > 1 else self.jacobians()[:, 0, 0]
        bad = np.flatnonzero(np.abs(det) <= 1e-14 * max(1.0, float(np.abs(det).max(initial=0.0))))
        if bad.size:
            raise MeshError(f"simplex {int(bad[0])} is degenerate")
        if self.metric is not None:
            g = np.asarray(self.metric, dtype=float)
            if g.shape != (self.n_simplices, self.dim, self.dim):
                raise MeshError("metric must have shape (n_simplices, n, n)")
            for e in range(len(g)):
                if not np.allclose(g[e], g[e].T) or np.linalg.eigvalsh(g[e]).min() <= 0:
                    raise MeshError(f"metric on simplex {e} is not symmetric positive definite")

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_simplices(self) -> int:
        return self.simplices.shape[0]

    @property
    def max_index(self) -> int:
        return int(self.node_index.max())

    @property
    def element_index(self) -> np.ndarray:
        """Exhaustion index of a simplex: the largest index among its nodes."""
        return self.node_index[self.simplices].max(axis=1)

    @property
    def facet_index(self) -> np.ndarray:
        if len(self.facets) == 0:
            return np.zeros(0, dtype=int)
        return self.node_index[self.facets].max(axis=1)

    def metric_tensors(self) -> np.ndarray:
        if self.metric is None:
            return np.broadcast_to(np.eye(self.dim), (self.n_simplices, self.dim, self.dim))
        return np.asarray(self.metric, dtype=float)

    def jacobians(self) -> np.ndarray:
        p = self.nodes[self.simplices]
        return np.transpose(p[:, 1:, :] - p[:, :1, :], (0, 2, 1))

    def volumes(self) -> np.ndarray:
        """Riemannian volume of each simplex."""
        jac = self.jacobians()
        ref = 1.0 / math.factorial(self.dim)
        sq = np.sqrt(np.linalg.det(self.metric_tensors()))
        return np.abs(np.linalg.det(jac)) * ref * sq

    def tagged_facets(self, tag: str) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.facet_tags) if t == tag], dtype=int)

    def tagged_nodes(self, tag: str) -> np.ndarray:
        idx = self.tagged_facets(tag)
        if idx.size == 0:
            return np.zeros(0, dtype=int)
        return np.unique(self.facets[idx])

    def quadrature(self, order: int = 2) -> "ElementQuadrature":
        return ElementQuadrature.build(self, order)

    def facet_quadrature(self, tag: str, order: int = 2, facet_ids: np.ndarray | None = None):
        """Quadrature on tagged boundary facets.

        Returns ``(facet_ids, points, weights, basis)`` with ``points`` of shape
        ``(F, nq, n)``, ``weights`` ``(F, nq)`` and ``basis`` ``(nq, n)`` giving the
        facet-local P1 shape functions.
        """
        ids = self.tagged_facets(tag) if facet_ids is None else np.asarray(facet_ids, dtype=int)
        if self.dim == 1:
            pts = self.nodes[self.facets[ids, 0]][:, None, :]
            return ids, pts, np.ones((len(ids), 1)), np.ones((1, 1))
        t, w = gauss_interval(order)
        basis = np.column_stack([1 - t, t])
        a = self.nodes[self.facets[ids, 0]]
        b = self.nodes[self.facets[ids, 1]]
        pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        owner = self.facet_owners()[ids]
        g = self.metric_tensors()[owner]
        d = b - a
        length = np.sqrt(np.einsum("fi,fij,fj->f", d, g, d))
        return ids, pts, length[:, None] * w[None, :], basis

    def facet_owners(self) -> np.ndarray:
        """Index of the simplex containing each boundary facet."""
        lookup = {}
        for e, simp in enumerate(self.simplices):
            for loc in range(self.dim + 1):
                key = tuple(sorted(np.delete(simp, loc)))
                lookup.setdefault(key, e)
        return np.array([lookup[tuple(sorted(f))] for f in self.facets], dtype=int)

    def inward_normals(self) -> np.ndarray:
        """Euclidean unit inward normal of every boundary facet."""
        owners = self.facet_owners()
        cent = self.nodes[self.simplices[owners]].mean(axis=1)
        if self.dim == 1:
            nrm = np.sign(cent - self.nodes[self.facets[:, 0]])
            return nrm
        a = self.nodes[self.facets[:, 0]]
        b = self.nodes[self.facets[:, 1]]
        d = b - a
        nrm = np.column_stack([-d[:, 1], d[:, 0]])
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        flip = np.einsum("fi,fi->f", nrm, cent - a) < 0
        nrm[flip] *= -1
        return nrm

    def with_metric(self, metric: np.ndarray | None) -> "Mesh":
        return Mesh(self.nodes, self.simplices, self.facets, self.facet_tags, self.radii, metric, self.notes)


@dataclass(frozen=True)
class ElementQuadrature:
    """Mapped quadrature data for P1 elements."""

    points: np.ndarray  # (E, nq, n)
    weights: np.ndarray  # (E, nq), Riemannian measure included
    basis: np.ndarray  # (nq, n+1)
    grads: np.ndarray  # (E, n+1, n) Euclidean gradients of shape functions
    ginv: np.ndarray  # (E, n, n)

    @classmethod
    def build(cls, mesh: Mesh, order: int = 2) -> "ElementQuadrature":
        ref, w = simplex_rule(mesh.dim, order)
        basis = p1_basis(ref)
        jac = mesh.jacobians()
        p0 = mesh.nodes[mesh.simplices[:, 0]]
        points = p0[:, None, :] + np.einsum("eij,qj->eqi", jac, ref)
        g = mesh.metric_tensors()
        detj = np.abs(np.linalg.det(jac))
        weights = (detj * np.sqrt(np.linalg.det(g)))[:, None] * w[None, :]
        ref_grad = np.vstack([-np.ones(mesh.dim), np.eye(mesh.dim)])
        jinv = np.linalg.inv(jac)
        grads = np.einsum("aj,eji->eai", ref_grad, jinv)
        return cls(points, weights, basis, grads, np.linalg.inv(g))


def _boundary_facets(simplices: np.ndarray) -> list[tuple[int, ...]]:
    count: dict[tuple[int, ...], int] = {}
    order: list[tuple[int, ...]] = []
    for simp in simplices:
        for loc in range(len(simp)):
            key = tuple(sorted(np.delete(simp, loc).tolist()))
            if key not in count:
                order.append(key)
            count[key] = count.get(key, 0) + 1
    return [k for k in order if count[k] == 1]


def build_interval_mesh(
    length: float,
    elements: int,
    exhaustion_radii: Sequence[float],
    *,
    origin: float = 0.0,
    left_tag: str = PHYSICAL_GAMMA,
    right_tag: str = TRUNCATION_CUT,
) -> Mesh:
    """Uniform mesh of ``(origin, origin + length)``."""
    if length <= 0:
        raise MeshError("length must be positive")
    if elements < 1:
        raise MeshError("at least one element is required")
    radii = validate_radii(exhaustion_radii)
    x = origin + length * np.arange(elements + 1) / elements
    x[-1] = origin + length
    simp = np.column_stack([np.arange(elements), np.arange(1, elements + 1)])
    radii, notes = _cover_radii(radii, x[:, None])
    return Mesh(x[:, None], simp, [[0], [elements]], (left_tag, right_tag), radii, notes=notes)


def _structured_triangles(nx: int, ny: int) -> np.ndarray:
    """Split each cell of an (nx+1) x (ny+1) node grid along its rising diagonal."""
    tri = []
    for i in range(nx):
        for k in range(ny):
            a = i * (ny + 1) + k
            b = (i + 1) * (ny + 1) + k
            tri.append((a, b, b + 1))
            tri.append((a, b + 1, a + 1))
    return np.array(tri, dtype=int)


def min_angles(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = nodes[triangles]
    out = np.full(len(triangles), np.pi)
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cosang = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        out = np.minimum(out, np.arccos(np.clip(cosang, -1, 1)))
    return out


def build_strip_mesh(
    profile: Callable[[np.ndarray], np.ndarray],
    x_max: float,
    resolution: int,
    exhaustion_radii: Sequence[float],
    *,
    layers: int | None = None,
    min_angle_deg: float = 10.0,
) -> Mesh:
    """Triangulate ``{(x, y): 0 <= x <= x_max, |y| <= rho(x)}``.

    ``resolution`` is the number of cells per unit length in x and ``layers``
    the number of cells across the width (default: square cells at the widest
    section). The curved sides and the symmetry
    wall x = 0 are tagged PhysicalGamma, the cut x = x_max TruncationCut.
    """
    if x_max <= 0 or resolution < 1:
        raise MeshError("x_max and resolution must be positive")
    radii = validate_radii(exhaustion_radii)
    nx = max(1, int(math.ceil(resolution * x_max - 1e-9)))
    xs = np.linspace(0.0, x_max, nx + 1)
    rho = np.asarray(profile(xs), dtype=float)
    if rho.shape != xs.shape or not np.all(np.isfinite(rho)) or np.any(rho <= 0):
        raise MeshError("profile must be positive and finite on [0, x_max]")
    if layers is None:
        layers = max(2, int(math.ceil(2 * rho.max() * resolution - 1e-9)))
    if layers < 1:
        raise MeshError("layers must be positive")
    eta = np.linspace(-1.0, 1.0, layers + 1)
    nodes = np.array([(x, r * e) for x, r in zip(xs, rho) for e in eta])
    tri = _structured_triangles(nx, layers)

    floor = math.radians(min_angle_deg)
    ang = min_angles(nodes, tri)
    if np.any(ang < floor):
        h = x_max / nx
        thickness = layers * h * math.tan(floor) / 2
        bad = np.flatnonzero(ang < floor)
        xc = nodes[tri[bad]].mean(axis=1)[:, 0]
        first = float(xc.min())
        raise MeshError(
            f"profile not resolvable at x = {first:.6g}: half-width below the thickness floor "
            f"{thickness:.6g} (min angle {min_angle_deg} deg, {layers} layers, h = {h:.6g})"
        )

    facets, tags = [], []
    stride = layers + 1
    for i in range(nx):
        facets.append((i * stride, (i + 1) * stride))
        tags.append(PHYSICAL_GAMMA)
        facets.append((i * stride + layers, (i + 1) * stride + layers))
        tags.append(PHYSICAL_GAMMA)
    for k in range(layers):
        facets.append((k, k + 1))
        tags.append(PHYSICAL_GAMMA)
        facets.append((nx * stride + k, nx * stride + k + 1))
        tags.append(TRUNCATION_CUT)
    radii, notes = _cover_radii(radii, nodes)
    return Mesh(nodes, tri, facets, tags, radii, notes=notes)


def build_box_mesh(
    lower: Sequence[float],
    upper: Sequence[float],
    shape: Sequence[int],
    exhaustion_radii: Sequence[float],
    *,
    tag: str = DIRICHLET_OUTER,
) -> Mesh:
    """Structured mesh of an axis-aligned box with every side carrying ``tag``."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    shape = [int(s) for s in np.atleast_1d(shape)]
    if lower.size == 1:
        return build_interval_mesh(
            float(upper[0] - lower[0]), shape[0], exhaustion_radii,
            origin=float(lower[0]), left_tag=tag, right_tag=tag,
        )
    radii = validate_radii(exhaustion_radii)
    nx, ny = shape
    xs = np.linspace(lower[0], upper[0], nx + 1)
    ys = np.linspace(lower[1], upper[1], ny + 1)
    nodes = np.array([(x, y) for x in xs for y in ys])
    tri = _structured_triangles(nx, ny)
    facets = [tuple(f) for f in _boundary_facets(tri)]
    radii, notes = _cover_radii(radii, nodes)
    return Mesh(nodes, tri, facets, [tag] * len(facets), radii, notes=notes)


def submesh(mesh: Mesh, element_mask: np.ndarray, interface_tag: str = PHYSICAL_GAMMA) -> tuple[Mesh, np.ndarray]:
    """Restrict a mesh to selected simplices.

    Returns the submesh and the map from submesh nodes to parent nodes. Boundary
    facets inherited from the parent keep their tag; new ones get ``interface_tag``.
    """
    mask = np.asarray(element_mask, dtype=bool)
    sel = mesh.simplices[mask]
    keep = np.unique(sel)
    local = -np.ones(mesh.n_nodes, dtype=int)
    local[keep] = np.arange(keep.size)
    parent_tags = {tuple(sorted(f.tolist())): t for f, t in zip(mesh.facets, mesh.facet_tags)}
    facets, tags = [], []
    for f in _boundary_facets(sel):
        facets.append([local[i] for i in f])
        tags.append(parent_tags.get(f, interface_tag))
    metric = None if mesh.metric is None else np.asarray(mesh.metric)[mask]
    sub = Mesh(mesh.nodes[keep], local[sel], facets, tags, mesh.radii, metric, mesh.notes)
    return sub, keep


def refine(mesh: Mesh) -> Mesh:
    """Uniform refinement halving every edge; tags and metric are inherited."""
    nodes = [p for p in mesh.nodes]
    mid: dict[tuple[int, int], int] = {}

    def midpoint(a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        if key not in mid:
            mid[key] = len(nodes)
            nodes.append(0.5 * (mesh.nodes[a] + mesh.nodes[b]))
        return mid[key]

    simp, parent = [], []
    for e, s in enumerate(mesh.simplices):
        if mesh.dim == 1:
            m = midpoint(s[0], s[1])
            simp += [(s[0], m), (m, s[1])]
            parent += [e, e]
        else:
            a, b, c = s
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            simp += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
            parent += [e] * 4
    facets, tags = [], []
    for f, t in zip(mesh.facets, mesh.facet_tags):
        if mesh.dim == 1:
            facets.append([f[0]])
            tags.append(t)
        else:
            m = midpoint(f[0], f[1])
            facets += [[f[0], m], [m, f[1]]]
            tags += [t, t]
    metric = None if mesh.metric is None else np.asarray(mesh.metric)[parent]
    return Mesh(np.array(nodes), np.array(simp), facets, tags, mesh.radii, metric, mesh.notes)


def match_nodes(points: np.ndarray, target: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Index in ``target`` of each row of ``points``; raises if a point has no match."""
    tree = cKDTree(target)
    dist, idx = tree.query(points)
    if np.any(dist > tol):
        bad = np.flatnonzero(dist > tol)
        raise MeshError(f"{bad.size} points have no matching node, first at {points[bad[0]].tolist()}")
    return idx


# ----------------------------------------------------------------------------
# serialization


def mesh_to_text(mesh: Mesh) -> str:
    lines = [f"mesh {mesh.dim} {mesh.n_nodes} {mesh.n_simplices} {len(mesh.facets)}"]
    lines.append("radii " + " ".join(repr(float(r)) for r in mesh.radii))
    lines.append("nodes")
    for p, m in zip(mesh.nodes, mesh.node_index):
        lines.append(" ".join(repr(float(c)) for c in p) + f" {m}")
    lines.append("simplices")
    lines += [" ".join(str(i) for i in s) for s in mesh.simplices]
    lines.append("facets m-index tag")
    for f, m, t in zip(mesh.facets, mesh.facet_index, mesh.facet_tags):
        lines.append(" ".join(str(i) for i in f) + f" {m} {t}")
    return "\n".join(lines) + "\n"


def mesh_from_text(text: str) -> Mesh:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    head = rows[0]
    if head[0] != "mesh":
        raise MeshError("missing mesh header line")
    dim, nn, ns, nf = (int(v) for v in head[1:5])
    radii = [float(v) for v in rows[1][1:]]
    pos = 3
    nodes = np.array([[float(v) for v in r[:dim]] for r in rows[pos:pos + nn]])
    pos += nn + 1
    simp = np.array([[int(v) for v in r] for r in rows[pos:pos + ns]], dtype=int)
    pos += ns + 1
    facets = [[int(v) for v in r[:dim]] for r in rows[pos:pos + nf]]
    tags = [r[dim + 1] for r in rows[pos:pos + nf]]
    return Mesh(nodes, simp, facets, tags, radii)


# ----------------------------------------------------------------------------
# coverings


@dataclass(frozen=True)
class Chart:
    """Affine chart ``x -> center + matrix @ x`` with radii ``r < r_hat``.

    The metric bounds are suprema over the simplices meeting the inflated ball.
    """

    kind: int
    center: np.ndarray
    r: float
    r_hat: float
    matrix: np.ndarray
    index: int
    dpsi: float = 1.0
    dpsi_inv: float = 1.0
    G: float = 1.0
    G_inv: float = 1.0
    G_gamma: float = 1.0

    def local(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.linalg.solve(self.matrix, (pts - self.center).T).T

    def global_(self, x: np.ndarray) -> np.ndarray:
        return self.center + np.atleast_2d(x) @ self.matrix.T

    def local_radius(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.local(points), axis=-1)

    def in_ball(self, points: np.ndarray, radius: float | None = None) -> np.ndarray:
        rad = self.r_hat if radius is None else radius
        return self.local_radius(points) < rad

    def reflect(self, points: np.ndarray) -> np.ndarray:
        """Pull ``(x_1, ..., |x_n|)`` through the chart."""
        x = self.local(points)
        x[:, -1] = np.abs(x[:, -1])
        return self.global_(x)


@dataclass(frozen=True)
class Covering:
    mesh: Mesh
    charts: tuple[Chart, ...]
    R1: int
    R2: float
    inflation: float
    base_index: int = 1
    notes: tuple[str, ...] = ()

    def boundary_charts(self) -> list[int]:
        return [i for i, c in enumerate(self.charts) if c.kind == 1]

    def overlap_counts(self, points: np.ndarray) -> np.ndarray:
        return sum(c.in_ball(points).astype(int) for c in self.charts)

    def overlap_sum(self, points: np.ndarray) -> np.ndarray:
        """Sum over charts containing each point of ``||dpsi^{-1}|| / (r_hat - r)``."""
        out = np.zeros(len(np.atleast_2d(points)))
        for c in self.charts:
            out += c.in_ball(points) * (c.dpsi_inv / (c.r_hat - c.r))
        return out


def gamma_distance(mesh: Mesh, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distance to PhysicalGamma, nearest point on it and the facet attaining it."""
    pts = np.atleast_2d(points)
    ids = mesh.tagged_facets(PHYSICAL_GAMMA)
    if ids.size == 0:
        inf = np.full(len(pts), np.inf)
        return inf, np.full_like(pts, np.nan), -np.ones(len(pts), dtype=int)
    if mesh.dim == 1:
        g = mesh.nodes[mesh.facets[ids, 0]][:, 0]
        d = np.abs(pts[:, :1] - g[None, :])
        k = d.argmin(axis=1)
        return d[np.arange(len(pts)), k], g[k][:, None], ids[k]
    a = mesh.nodes[mesh.facets[ids, 0]]
    b = mesh.nodes[mesh.facets[ids, 1]]
    ab = b - a
    t = np.einsum("pfi,fi->pf", pts[:, None, :] - a[None], ab) / np.einsum("fi,fi->f", ab, ab)
    t = np.clip(t, 0.0, 1.0)
    proj = a[None] + t[..., None] * ab[None]
    d = np.linalg.norm(pts[:, None, :] - proj, axis=2)
    k = d.argmin(axis=1)
    rows = np.arange(len(pts))
    return d[rows, k], proj[rows, k], ids[k]


def _boundary_frame(mesh: Mesh, point: np.ndarray, facet: int, normals: np.ndarray) -> np.ndarray:
    if mesh.dim == 1:
        return np.array([[float(normals[facet][0])]])
    nrm = normals[facet].copy()
    # at a Gamma node, average the normals of the Gamma facets sharing it
    gamma = mesh.tagged_facets(PHYSICAL_GAMMA)
    near = [f for f in gamma if np.min(np.linalg.norm(mesh.nodes[mesh.facets[f]] - point, axis=1)) < 1e-12]
    if near:
        nrm = normals[near].sum(axis=0)
        nrm /= np.linalg.norm(nrm)
    tangent = np.array([nrm[1], -nrm[0]])
    return np.column_stack([tangent, nrm])


def chart_metric_bounds(mesh: Mesh, kind: int, center: np.ndarray, matrix: np.ndarray, r_hat: float) -> dict:
    """Suprema of the chart differential norms over simplices meeting the inflated ball."""
    cent = mesh.nodes[mesh.simplices].mean(axis=1)
    loc = np.linalg.solve(matrix, (mesh.nodes - center).T).T
    inside_nodes = np.linalg.norm(loc, axis=1) < r_hat
    hit = inside_nodes[mesh.simplices].any(axis=1)
    if not hit.any():
        dist = np.linalg.norm(cent - center, axis=1)
        hit = dist == dist.min()
    g = mesh.metric_tensors()[hit]
    pulled = np.einsum("ai,eab,bj->eij", matrix, g, matrix)
    ev = np.linalg.eigvalsh(pulled)
    det = np.linalg.det(pulled)
    out = {
        "dpsi": float(np.sqrt(ev[:, -1].max())),
        "dpsi_inv": float(1.0 / np.sqrt(max(ev[:, 0].min(), np.finfo(float).eps))),
        "G": float(np.sqrt(det.max())),
        "G_inv": float(np.sqrt((1.0 / det).max())),
        "G_gamma": 1.0,
    }
    if kind == 1 and mesh.dim > 1:
        tang = matrix[:, :-1]
        gg = np.einsum("ai,eab,bj->eij", tang, g, tang)
        out["G_gamma"] = float(np.sqrt(np.linalg.det(gg).max()))
    return out


def make_chart(mesh: Mesh, kind: int, center, r: float, r_hat: float, matrix=None) -> Chart:
    center = np.asarray(center, dtype=float).reshape(mesh.dim)
    matrix = np.eye(mesh.dim) if matrix is None else np.asarray(matrix, dtype=float)
    idx = int(exhaustion_index(center[None, :], mesh.radii)[0])
    bounds = chart_metric_bounds(mesh, kind, center, matrix, r_hat)
    return Chart(kind, center, float(r), float(r_hat), matrix, idx, **bounds)


def covering_from_charts(mesh: Mesh, charts: Sequence[Chart], inflation: float | None = None, notes=()) -> Covering:
    """Assemble a covering and measure R1 (node overlap) and R2 (distortion)."""
    charts = tuple(charts)
    R1 = int(sum(c.in_ball(mesh.nodes).astype(int) for c in charts).max()) if charts else 0
    R2 = 1.0
    for c in charts:
        R2 = max(R2, c.dpsi * c.dpsi_inv, math.sqrt(c.G * c.G * c.G_inv * c.G_inv))
    if inflation is None:
        inflation = max((c.r_hat / c.r for c in charts), default=1.0)
    return Covering(mesh, charts, R1, float(R2), float(inflation), notes=tuple(notes))


def mesh_size(mesh: Mesh) -> float:
    p = mesh.nodes[mesh.simplices]
    h = 0.0
    for a in range(mesh.dim + 1):
        for b in range(a + 1, mesh.dim + 1):
            h = max(h, float(np.linalg.norm(p[:, a] - p[:, b], axis=1).max()))
    return h


def _gamma_facet_size(mesh: Mesh) -> float:
    ids = mesh.tagged_facets(PHYSICAL_GAMMA)
    if ids.size == 0:
        return 0.0
    f = mesh.nodes[mesh.facets[ids]]
    return float(np.linalg.norm(f[:, 1] - f[:, 0], axis=1).max())


def build_covering(mesh: Mesh, chart_radius: float, inflation: float) -> Covering:
    """Greedy ball cover of the mesh nodes.

    Nodes closer than ``chart_radius`` to PhysicalGamma are covered by boundary
    charts centered on Gamma (orthonormal half-space frames with the last axis
    along the inward normal). Other nodes get interior charts centered at the
    node, with the inflated radius shrunk so that the inflated ball stays off
    Gamma.
    """
    if chart_radius <= 0 or inflation <= 1:
        raise MeshError("chart_radius must be positive and inflation > 1")
    h = _gamma_facet_size(mesh) if mesh.dim > 1 else mesh_size(mesh)
    limit = (inflation - 1.0) * chart_radius if mesh.dim > 1 else chart_radius
    if h >= limit:
        raise MeshError(
            f"chart radius {chart_radius} not resolvable: mesh size {h:.4g} must be below {limit:.4g}"
        )
    normals = mesh.inward_normals() if len(mesh.facets) else None
    dist, proj, fac = gamma_distance(mesh, mesh.nodes)
    centers: list[np.ndarray] = []
    radii: list[float] = []
    charts: list[Chart] = []

    def covered(p: np.ndarray) -> bool:
        return any(np.linalg.norm(p - c) < r for c, r in zip(centers, radii))

    gamma_nodes = mesh.tagged_nodes(PHYSICAL_GAMMA)
    order = list(gamma_nodes) + [i for i in range(mesh.n_nodes) if i not in set(gamma_nodes.tolist())]
    for i in order:
        p = mesh.nodes[i]
        if covered(p):
            continue
        if dist[i] < chart_radius:
            c = p if i in set(gamma_nodes.tolist()) else proj[i]
            frame = _boundary_frame(mesh, c, int(fac[i]), normals)
            charts.append(make_chart(mesh, 1, c, chart_radius, inflation * chart_radius, frame))
            centers.append(c)
            radii.append(chart_radius)
        else:
            r_hat = min(inflation * chart_radius, float(dist[i]))
            r = r_hat / inflation
            charts.append(make_chart(mesh, 0, p, r, r_hat))
            centers.append(p)
            radii.append(r)
    return covering_from_charts(mesh, charts, inflation)
