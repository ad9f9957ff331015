"""P1 assembly of the weighted forms, load vectors and the reflection extension."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .geometry import PHYSICAL_GAMMA, Covering, Mesh, MeshError, match_nodes
from .weights import PointFunction, WeightSet, checked


@dataclass(frozen=True)
class SymmetricForm:
    """Sparse symmetric form over the degrees of freedom ``dofs`` (mesh node ids).

    Only the upper triangle is stored; :attr:`matrix` mirrors it, so symmetry is
    exact to the last bit.
    """

    upper: sp.csr_matrix
    dofs: np.ndarray
    n_nodes: int
    provenance: str = "custom"

    @classmethod
    def from_matrix(cls, full, dofs, n_nodes: int, provenance: str = "custom") -> "SymmetricForm":
        return cls(sp.triu(sp.csr_matrix(full)).tocsr(), np.asarray(dofs, dtype=int), n_nodes, provenance)

    @property
    def shape(self) -> tuple[int, int]:
        return self.upper.shape

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        strict = sp.triu(self.upper, k=1)
        return (self.upper + strict.T).tocsr()

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def energy(self, u: np.ndarray) -> float:
        return float(u @ (self.matrix @ u))

    def is_zero(self) -> bool:
        return self.upper.nnz == 0 or not np.any(self.upper.data)

    def scaled(self, c: float, provenance: str | None = None) -> "SymmetricForm":
        return SymmetricForm((c * self.upper).tocsr(), self.dofs, self.n_nodes, provenance or self.provenance)

    def plus(self, other: "SymmetricForm", c: float = 1.0) -> "SymmetricForm":
        if not np.array_equal(self.dofs, other.dofs):
            raise ValueError("forms live on different degrees of freedom")
        return SymmetricForm((self.upper + c * other.upper).tocsr(), self.dofs, self.n_nodes, "custom")

    def expand(self, u: np.ndarray) -> np.ndarray:
        """Full nodal vector from reduced coefficients (zero on eliminated nodes)."""
        full = np.zeros(self.n_nodes)
        full[self.dofs] = u
        return full

    def reduce(self, u_full: np.ndarray) -> np.ndarray:
        return np.asarray(u_full)[self.dofs]

    def to_coo_text(self) -> str:
        coo = self.upper.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"# {self.provenance} {self.shape[0]} {coo.nnz}"]
        for k in order:
            lines.append(f"{self.dofs[coo.row[k]]} {self.dofs[coo.col[k]]} {coo.data[k]!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LoadVector:
    values: np.ndarray
    dofs: np.ndarray
    provenance: str = "f0 against V2"

    def __len__(self) -> int:
        return len(self.values)


def free_dofs(mesh: Mesh, dirichlet_on: Iterable[str] = ()) -> np.ndarray:
    tags = set(dirichlet_on)
    fixed = set()
    for f, t in zip(mesh.facets, mesh.facet_tags):
        if t in tags:
            fixed.update(int(i) for i in f)
    return np.array([i for i in range(mesh.n_nodes) if i not in fixed], dtype=int)


def _finish(rows, cols, vals, mesh: Mesh, dofs: np.ndarray, provenance: str) -> SymmetricForm:
    full = sp.coo_matrix((vals, (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    full.sum_duplicates()
    red = full[dofs][:, dofs]
    return SymmetricForm(sp.triu(red).tocsr(), dofs, mesh.n_nodes, provenance)


def _element_pairs(simplices: np.ndarray):
    k = simplices.shape[1]
    rows = np.repeat(simplices, k, axis=1)
    cols = np.tile(simplices, (1, k))
    return rows.ravel(), cols.ravel()


def _mask(mesh: Mesh, elements) -> np.ndarray:
    if elements is None:
        return np.ones(mesh.n_simplices, dtype=bool)
    m = np.asarray(elements)
    if m.dtype == bool:
        return m
    out = np.zeros(mesh.n_simplices, dtype=bool)
    out[m] = True
    return out


def assemble_Q(mesh: Mesh, ws: WeightSet, dirichlet_on: Iterable[str] = (), order: int = 2,
               elements=None) -> SymmetricForm:
    """``Q[u, v] = int g(grad u, grad v) dV1 + int u v dV0``."""
    quad = mesh.quadrature(order)
    sel = _mask(mesh, elements)
    pts = quad.points.reshape(-1, mesh.dim)
    V0 = checked(ws.V0, "V0", pts).reshape(quad.weights.shape)
    V1 = checked(ws.V1, "V1", pts).reshape(quad.weights.shape)
    w = quad.weights
    stiff = np.einsum("eai,eij,ebj->eab", quad.grads, quad.ginv, quad.grads) * (w * V1).sum(axis=1)[:, None, None]
    mass = np.einsum("eq,qa,qb->eab", w * V0, quad.basis, quad.basis)
    local = (stiff + mass)[sel]
    rows, cols = _element_pairs(mesh.simplices[sel])
    return _finish(rows, cols, local.ravel(), mesh, free_dofs(mesh, dirichlet_on), "Q")


def assemble_stiffness(mesh: Mesh, ws: WeightSet, dirichlet_on: Iterable[str] = (), order: int = 2) -> SymmetricForm:
    quad = mesh.quadrature(order)
    V1 = checked(ws.V1, "V1", quad.points.reshape(-1, mesh.dim)).reshape(quad.weights.shape)
    stiff = np.einsum("eai,eij,ebj->eab", quad.grads, quad.ginv, quad.grads) * (quad.weights * V1).sum(axis=1)[:, None, None]
    rows, cols = _element_pairs(mesh.simplices)
    return _finish(rows, cols, stiff.ravel(), mesh, free_dofs(mesh, dirichlet_on), "stiffness")


def assemble_weighted_mass(mesh: Mesh, coefficient: PointFunction, weight: PointFunction,
                           elements=None, dirichlet_on: Iterable[str] = (), order: int = 2,
                           provenance: str = "massV2tau") -> SymmetricForm:
    """``int c u v dV`` with ``c`` = coefficient (any sign) and ``V`` = weight."""
    quad = mesh.quadrature(order)
    sel = _mask(mesh, elements)
    pts = quad.points.reshape(-1, mesh.dim)
    c = np.asarray(coefficient(pts), dtype=float).reshape(quad.weights.shape)
    v = checked(weight, "weight", pts).reshape(quad.weights.shape)
    local = np.einsum("eq,qa,qb->eab", quad.weights * c * v, quad.basis, quad.basis)[sel]
    rows, cols = _element_pairs(mesh.simplices[sel])
    return _finish(rows, cols, local.ravel(), mesh, free_dofs(mesh, dirichlet_on), provenance)


def assemble_boundary_mass(mesh: Mesh, weight: PointFunction, tag: str = PHYSICAL_GAMMA,
                           facets=None, dirichlet_on: Iterable[str] = (), order: int = 2,
                           provenance: str = "boundaryW") -> SymmetricForm:
    """``int_Gamma u v dW`` over facets carrying ``tag`` (optionally a subset ``facets``)."""
    ids = mesh.tagged_facets(tag)
    if facets is not None:
        keep = set(np.asarray(facets, dtype=int).tolist())
        ids = np.array([i for i in ids if i in keep], dtype=int)
    dofs = free_dofs(mesh, dirichlet_on)
    if ids.size == 0:
        if facets is None:
            warnings.warn(f"no facets tagged {tag}; boundary form is zero", stacklevel=2)
        return SymmetricForm(sp.csr_matrix((len(dofs), len(dofs))), dofs, mesh.n_nodes, provenance)
    _, pts, wts, basis = mesh.facet_quadrature(tag, order, ids)
    vals = checked(weight, "boundary weight", pts.reshape(-1, mesh.dim)).reshape(wts.shape)
    local = np.einsum("fq,qa,qb->fab", wts * vals, basis, basis)
    rows, cols = _element_pairs(mesh.facets[ids])
    return _finish(rows, cols, local.ravel(), mesh, dofs, provenance)


def assemble_load(mesh: Mesh, f0: PointFunction | None, f1: PointFunction | None, ws: WeightSet,
                  dirichlet_on: Iterable[str] = (), order: int = 2) -> LoadVector:
    """``int f0 v dV2 + int_Gamma f1 v dW1`` against every P1 basis function."""
    b = np.zeros(mesh.n_nodes)
    if f0 is not None:
        quad = mesh.quadrature(order)
        pts = quad.points.reshape(-1, mesh.dim)
        vals = np.asarray(f0(pts), dtype=float) * checked(ws.V2, "V2", pts)
        local = np.einsum("eq,qa->ea", quad.weights * vals.reshape(quad.weights.shape), quad.basis)
        np.add.at(b, mesh.simplices, local)
    if f1 is not None and mesh.tagged_facets(PHYSICAL_GAMMA).size:
        ids, pts, wts, basis = mesh.facet_quadrature(PHYSICAL_GAMMA, order)
        flat = pts.reshape(-1, mesh.dim)
        vals = (np.asarray(f1(flat), dtype=float) * checked(ws.W1, "W1", flat)).reshape(wts.shape)
        local = np.einsum("fq,qa->fa", wts * vals, basis)
        np.add.at(b, mesh.facets[ids], local)
    dofs = free_dofs(mesh, dirichlet_on)
    prov = "f0 against V2" if f1 is None else ("f1 against W1" if f0 is None else "f0 against V2 + f1 against W1")
    return LoadVector(b[dofs], dofs, prov)


# ----------------------------------------------------------------------------
# P1 evaluation and norms


class P1Locator:
    """Point location and P1 interpolation on a mesh; points outside fall back to the nearest node."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self._tree = cKDTree(mesh.nodes[mesh.simplices].mean(axis=1))
        self._nodes = cKDTree(mesh.nodes)
        self._jinv = np.linalg.inv(mesh.jacobians())

    def weights(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Element, barycentric weights and an inside flag for each point."""
        mesh = self.mesh
        pts = np.atleast_2d(points)
        k = min(8, mesh.n_simplices)
        _, cand = self._tree.query(pts, k=k)
        cand = np.atleast_2d(cand).reshape(len(pts), k)
        elem = -np.ones(len(pts), dtype=int)
        bary = np.zeros((len(pts), mesh.dim + 1))
        for col in range(k):
            todo = elem < 0
            if not todo.any():
                break
            e = cand[todo, col]
            x = np.einsum("eij,ej->ei", self._jinv[e], pts[todo] - mesh.nodes[mesh.simplices[e, 0]])
            lam = np.column_stack([1 - x.sum(axis=1), x])
            ok = lam.min(axis=1) >= -1e-12
            idx = np.flatnonzero(todo)[ok]
            elem[idx] = e[ok]
            bary[idx] = lam[ok]
        inside = elem >= 0
        return elem, bary, inside

    def __call__(self, u: np.ndarray, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        elem, bary, inside = self.weights(pts)
        out = np.empty(len(pts))
        out[inside] = np.einsum("pa,pa->p", bary[inside], u[self.mesh.simplices[elem[inside]]])
        if (~inside).any():
            _, near = self._nodes.query(pts[~inside])
            out[~inside] = u[near]
        return out


def sobolev_norm(mesh: Mesh, ws: WeightSet, u: np.ndarray, q: float = 2.0, order: int = 2,
                 elements=None) -> float:
    """``(int |u|^q dV0 + int |grad u|_g^q dV1)^(1/q)`` for a P1 function on all nodes."""
    quad = mesh.quadrature(order)
    sel = _mask(mesh, elements)
    pts = quad.points.reshape(-1, mesh.dim)
    V0 = checked(ws.V0, "V0", pts).reshape(quad.weights.shape)
    V1 = checked(ws.V1, "V1", pts).reshape(quad.weights.shape)
    uq = u[mesh.simplices] @ quad.basis.T  # (E, nq)
    grad = np.einsum("ea,eai->ei", u[mesh.simplices], quad.grads)
    gnorm = np.sqrt(np.einsum("ei,eij,ej->e", grad, quad.ginv, grad))
    total = (quad.weights * V0 * np.abs(uq) ** q)[sel].sum() + ((quad.weights * V1)[sel].sum(axis=1) * gnorm[sel] ** q).sum()
    return float(total ** (1.0 / q))


# ----------------------------------------------------------------------------
# extension across Gamma


def smooth_cutoff(rho: np.ndarray, r: float, outer: float) -> np.ndarray:
    """C-infinity cutoff equal to 1 for rho <= r and 0 for rho >= outer."""
    s = np.clip((np.asarray(rho, dtype=float) - r) / (outer - r), 0.0, 1.0)

    def phi(t):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    a, b = phi(1.0 - s), phi(s)
    return a / (a + b)


@dataclass(frozen=True)
class ExtensionResult:
    values: np.ndarray  # coefficients on the ambient mesh
    omega_nodes: np.ndarray  # ambient ids of the Omega nodes
    ratio: float
    support_ok: bool
    outer_radius: tuple[float, ...]


def extend(u: np.ndarray, cov: Covering, delta: float, ambient: Mesh, q: float = 2.0,
           ws: WeightSet | None = None) -> ExtensionResult:
    """Extend a P1 function from ``cov.mesh`` to ``ambient`` by reflection through boundary charts.

    Each chart carries a cutoff equal to 1 on its ball of radius r and vanishing
    beyond ``r + (r_hat - r)/delta``; the cutoffs are normalized by
    ``max(sum, 1)``, which is the plain sum on Omega. Outside Omega only boundary
    charts contribute, each with the reflected value ``u(psi(f(psi^-1 p)))``.
    """
    if delta < 1:
        raise ValueError("delta must be at least 1")
    omega = cov.mesh
    u = np.asarray(u, dtype=float)
    if u.shape != (omega.n_nodes,):
        raise ValueError("u must have one coefficient per Omega node")
    ws = ws or WeightSet()

    covered = np.zeros(omega.n_nodes, dtype=bool)
    for c in cov.charts:
        covered |= c.in_ball(omega.nodes, c.r)
    if not covered.all():
        bad = np.flatnonzero(~covered)
        raise MeshError(f"Omega nodes outside every chart: {bad.tolist()[:20]}")

    omega_ids = match_nodes(omega.nodes, ambient.nodes)
    outside = np.ones(ambient.n_nodes, dtype=bool)
    outside[omega_ids] = False
    pts = ambient.nodes[outside]
    outer = tuple(c.r + (c.r_hat - c.r) / delta for c in cov.charts)

    total = np.zeros(len(pts))
    contrib = np.zeros(len(pts))
    locate = P1Locator(omega)
    for c, rho_d in zip(cov.charts, outer):
        zeta = smooth_cutoff(c.local_radius(pts), c.r, rho_d)
        total += zeta
        if c.kind != 1:
            continue
        hit = zeta > 0
        if hit.any():
            contrib[hit] += zeta[hit] * locate(u, c.reflect(pts[hit]))
    values = np.zeros(ambient.n_nodes)
    values[omega_ids] = u
    values[outside] = contrib / np.maximum(total, 1.0)

    support = np.zeros(len(pts), dtype=bool)
    for c, rho_d in zip(cov.charts, outer):
        if c.kind == 1:
            support |= c.local_radius(pts) < rho_d
    support_ok = bool(np.all(support[values[outside] != 0]))

    den = sobolev_norm(omega, ws, u, q)
    num = sobolev_norm(ambient, ws, values, q)
    ratio = num / den if den > 0 else 0.0
    return ExtensionResult(values, omega_ids, float(ratio), support_ok, outer)
