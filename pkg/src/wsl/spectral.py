"""Spectra of the indefinite pencil, Dirichlet spectra, embedding norms and tail functionals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.sparse.linalg import splu

from .assembly import SymmetricForm, assemble_Q, assemble_weighted_mass
from .geometry import TAGS, Mesh
from .weights import WeightSet


class SpectrumError(ValueError):
    pass


CLUSTER_RTOL = 1e-8


@dataclass(frozen=True)
class Branch:
    values: np.ndarray  # ordered away from zero: |lambda_1| <= |lambda_2| <= ...
    vectors: np.ndarray  # (ndofs, k), Q-orthonormal columns
    residuals: np.ndarray
    normalization: np.ndarray  # int tau phi^2 dV2 of the tau-normalized vector
    clusters: np.ndarray  # cluster id per eigenvalue

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Spectrum:
    negative: Branch
    positive: Branch
    dofs: np.ndarray
    n_nodes: int
    tol: float
    notes: tuple[str, ...] = ()

    def branch(self, sign: str) -> Branch:
        return self.positive if sign in ("+", "plus", "positive") else self.negative

    def eigenvalue(self, sign: str, i: int) -> float:
        """1-based access, e.g. ``eigenvalue('+', 1)`` for lambda_1^+."""
        b = self.branch(sign)
        if i > len(b):
            name = f"lambda_{i}^{'+' if b is self.positive else '-'}"
            raise SpectrumError(f"{name} was not computed")
        return float(b.values[i - 1])

    def vector(self, sign: str, i: int, tau_normalized: bool = True, full: bool = True) -> np.ndarray:
        """Eigenvector; with ``tau_normalized`` scaled so that int tau phi^2 dV2 = sign(lambda)."""
        b = self.branch(sign)
        x = b.vectors[:, i - 1].copy()
        if tau_normalized:
            x *= np.sqrt(abs(b.values[i - 1]))
        if full:
            out = np.zeros(self.n_nodes)
            out[self.dofs] = x
            return out
        return x

    def rows(self) -> list[tuple]:
        out = []
        for name, b in (("minus", self.negative), ("plus", self.positive)):
            for i in range(len(b)):
                out.append((name, i + 1, float(b.values[i]), float(b.residuals[i]), float(b.normalization[i])))
        return out


def _canonical_sign(x: np.ndarray) -> np.ndarray:
    s = x.sum()
    if abs(s) > 1e-8 * np.abs(x).sum():
        return x if s > 0 else -x
    k = int(np.argmax(np.abs(x)))
    return x if x[k] >= 0 else -x


def _clusters(values: np.ndarray, rtol: float) -> np.ndarray:
    ids = np.zeros(len(values), dtype=int)
    for i in range(1, len(values)):
        same = abs(values[i] - values[i - 1]) <= rtol * max(abs(values[i]), abs(values[i - 1]))
        ids[i] = ids[i - 1] if same else ids[i - 1] + 1
    return ids


@dataclass
class _Krylov:
    """Q-orthonormal Krylov basis of A = Q^{-1} M with full reorthogonalization."""

    Q: object
    M: object
    seed: int
    V: list = field(default_factory=list)
    QV: list = field(default_factory=list)

    def __post_init__(self):
        self.solve = splu(self.Q.tocsc()).solve
        self.rng = np.random.default_rng(self.seed)
        self.n = self.Q.shape[0]

    def _orth(self, w: np.ndarray) -> np.ndarray:
        if self.V:
            V = np.column_stack(self.V)
            QV = np.column_stack(self.QV)
            for _ in range(2):
                w = w - V @ (QV.T @ w)
        return w

    def _push(self, w: np.ndarray, scale: float) -> bool:
        qw = self.Q @ w
        nrm2 = float(w @ qw)
        if nrm2 <= (1e-10 * scale) ** 2:
            return False
        nrm = np.sqrt(nrm2)
        self.V.append(w / nrm)
        self.QV.append(qw / nrm)
        return True

    def grow(self, steps: int) -> None:
        for _ in range(steps):
            if len(self.V) >= self.n:
                return
            if not self.V:
                w = self._orth(self.rng.standard_normal(self.n))
                self._push(w, 0.0)
                continue
            v = self.V[-1]
            w = self.solve(self.M @ v)
            scale = np.sqrt(abs(float(w @ (self.Q @ w)))) or 1.0
            w = self._orth(w)
            while not self._push(w, scale):
                # invariant subspace found: restart with a fresh direction
                w = self._orth(self.rng.standard_normal(self.n))
                scale = 1.0

    def ritz(self):
        V = np.column_stack(self.V)
        T = V.T @ (self.M @ V)
        T = 0.5 * (T + T.T)
        mu, Y = la.eigh(T)
        return mu, V @ Y


def _residuals(Q, M, X: np.ndarray, mu: np.ndarray, solve=None) -> np.ndarray:
    """Relative residual ``||Q^{-1} M x - mu x||_Q / (|mu| ||x||_Q)`` per column."""
    if X.shape[1] == 0:
        return np.zeros(0)
    solve = solve or splu(Q.tocsc()).solve
    AX = np.column_stack([solve(M @ X[:, i]) for i in range(X.shape[1])])
    R = AX - X * mu
    num = np.sqrt(np.abs(np.einsum("ij,ij->j", R, Q @ R)))
    den = np.sqrt(np.abs(np.einsum("ij,ij->j", X, Q @ X)))
    return num / (np.abs(mu) * den)


def _extreme_pairs(Q, M, count: int, tol: float, seed: int, sides=("+", "-")):
    """Extreme eigenpairs of ``M x = mu Q x`` for the requested signs of mu."""
    n = Q.shape[0]
    kr = _Krylov(Q, M, seed)
    step = max(10, 2 * count)
    kr.grow(min(n, 2 * count + 20))
    while True:
        mu, X = kr.ritz()
        thr = 1e-12 * max(np.abs(mu).max(), np.finfo(float).tiny)
        done = True
        picked = {}
        for side in sides:
            if side == "+":
                idx = np.flatnonzero(mu > thr)[::-1][:count]
            else:
                idx = np.flatnonzero(mu < -thr)[:count]
            picked[side] = idx
            if len(kr.V) >= n:
                continue
            if len(idx) == 0:
                continue  # no eigenvalue of this sign visible at the extreme
            res = _residuals(Q, M, X[:, idx], mu[idx], kr.solve)
            if len(idx) < count or np.any(res > tol):
                done = False
        if done or len(kr.V) >= n:
            return {s: (mu[i], X[:, i]) for s, i in picked.items()}, len(kr.V)
        before = len(kr.V)
        kr.grow(step)
        if len(kr.V) == before:
            return {s: (mu[i], X[:, i]) for s, i in picked.items()}, len(kr.V)


def solve_pencil(Q: SymmetricForm, Mtau: SymmetricForm, count_per_branch: int = 4, tol: float = 1e-10,
                 seed: int = 0) -> Spectrum:
    """Extreme eigenvalues of ``Q x = lambda M_tau x`` on both branches.

    Lanczos iteration on ``A = Q^{-1} M_tau`` in the Q inner product; the
    extreme Ritz values mu give ``lambda = 1/mu``.
    """
    if not np.array_equal(Q.dofs, Mtau.dofs):
        raise SpectrumError("Q and M_tau live on different degrees of freedom")
    if Mtau.is_zero():
        raise SpectrumError("no spectrum: the tau-weighted mass form vanishes identically")
    pairs, dim = _extreme_pairs(Q.matrix, Mtau.matrix, count_per_branch, tol, seed)
    notes = [f"Krylov dimension {dim} of {Q.shape[0]}"]
    branches = {}
    for side in ("-", "+"):
        mu, X = pairs[side]
        if len(mu) == 0:
            notes.append(f"tau is one-signed: the {'negative' if side == '-' else 'positive'} branch is empty")
        lam = 1.0 / mu if len(mu) else np.zeros(0)
        order = np.argsort(np.abs(lam), kind="stable")
        lam, X = lam[order], X[:, order]
        X = np.column_stack([_canonical_sign(X[:, i]) for i in range(X.shape[1])]) if X.shape[1] else X
        res = _residuals(Q.matrix, Mtau.matrix, X, 1.0 / lam) if len(lam) else np.zeros(0)
        mt = Mtau.matrix
        normv = np.array([abs(lam[i]) * float(X[:, i] @ (mt @ X[:, i])) for i in range(len(lam))])
        if np.any(np.abs(normv) < 1e-10):
            notes.append("eigenvector near the null cone of the tau form; kept Q-normalized")
        branches[side] = Branch(lam, X, res, normv, _clusters(lam, CLUSTER_RTOL))
    return Spectrum(branches["-"], branches["+"], Q.dofs, Q.n_nodes, tol, tuple(notes))


def neumann_forms(mesh: Mesh, ws: WeightSet, dirichlet_on=(), order: int = 2):
    Q = assemble_Q(mesh, ws, dirichlet_on, order)
    Mtau = assemble_weighted_mass(mesh, ws.tau, ws.V2, dirichlet_on=dirichlet_on, order=order)
    return Q, Mtau


def dirichlet_spectrum(meshN: Mesh, ws: WeightSet, count: int = 4, tol: float = 1e-10, seed: int = 0,
                       order: int = 2) -> Spectrum:
    """Spectrum with zero boundary values on every boundary facet of N; needs tau >= delta > 0 on N."""
    pts = meshN.quadrature(order).points.reshape(-1, meshN.dim)
    tau = np.asarray(ws.tau(pts), dtype=float)
    if tau.min() <= 0:
        k = int(np.argmin(tau))
        raise SpectrumError(
            f"hypothesis tau >= delta > 0 in N violated: tau = {tau[k]:.6g} at {pts[k].tolist()}"
        )
    Q, Mtau = neumann_forms(meshN, ws, dirichlet_on=TAGS, order=order)
    spec = solve_pencil(Q, Mtau, count, tol, seed)
    return Spectrum(spec.negative, spec.positive, spec.dofs, spec.n_nodes, tol,
                    spec.notes + (f"delta = min tau on N = {tau.min():.6g}",))


def _largest_ratio(Q: SymmetricForm, M: SymmetricForm, tol: float, seed: int) -> float:
    if not np.array_equal(Q.dofs, M.dofs):
        raise SpectrumError("forms live on different degrees of freedom")
    if M.is_zero():
        return 0.0
    pairs, _ = _extreme_pairs(Q.matrix, M.matrix, 1, tol, seed, sides=("+",))
    mu = pairs["+"][0]
    return float(max(mu[0], 0.0)) if len(mu) else 0.0


def operator_norm_embedding(Q: SymmetricForm, massV2: SymmetricForm, tol: float = 1e-12, seed: int = 0) -> float:
    """Best constant C in ``||u||_{2,V2} <= C ||u||_{1,2,V0,V1}``."""
    return float(np.sqrt(_largest_ratio(Q, massV2, tol, seed)))


def tail_functional(Q: SymmetricForm, massV2_on_tail: SymmetricForm, m: int | None = None,
                    tol: float = 1e-12, seed: int = 0) -> float:
    """``sigma_m``: the embedding norm restricted to the tail mass (0 for an empty tail)."""
    return float(np.sqrt(_largest_ratio(Q, massV2_on_tail, tol, seed)))


def trace_tail_functional(Q: SymmetricForm, boundary_mass_on_tail: SymmetricForm, m: int | None = None,
                          tol: float = 1e-12, seed: int = 0) -> float:
    """Trace analogue of :func:`tail_functional` with a boundary mass on Gamma^m."""
    return float(np.sqrt(_largest_ratio(Q, boundary_mass_on_tail, tol, seed)))


def tail_sequence(mesh: Mesh, ws: WeightSet, boundary: bool = False, tol: float = 1e-12, seed: int = 0) -> list[float]:
    """``[sigma_0, sigma_1, ..., sigma_M]`` with M the largest exhaustion index."""
    from .assembly import assemble_boundary_mass
    from .geometry import PHYSICAL_GAMMA

    Q = assemble_Q(mesh, ws)
    out = []
    for m in range(0, mesh.max_index + 1):
        if boundary:
            ids = mesh.tagged_facets(PHYSICAL_GAMMA)
            sel = ids[mesh.facet_index[ids] > m]
            B = assemble_boundary_mass(mesh, ws.W, PHYSICAL_GAMMA, facets=sel, provenance="boundaryW")
            out.append(trace_tail_functional(Q, B, m, tol, seed))
        else:
            M = assemble_weighted_mass(mesh, lambda p: np.ones(len(p)), ws.V2, elements=mesh.element_index > m,
                                       provenance="massV2")
            out.append(tail_functional(Q, M, m, tol, seed))
    return out
