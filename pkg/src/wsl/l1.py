"""Fredholm alternative solver and the solution-by-approximation scheme for L1 data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .assembly import LoadVector, SymmetricForm, assemble_Q, assemble_load, assemble_weighted_mass, sobolev_norm
from .geometry import Mesh, exhaustion_index
from .weights import WeightSet, checked

DENSE_LIMIT = 400


class ResonanceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveOutcome:
    status: str  # Unique | Resonant
    solution: np.ndarray | None  # reduced coefficients
    basis: np.ndarray  # E_lambda, tau-normalized columns (empty when Unique)
    orthogonality: np.ndarray  # r_v = load . v per basis vector
    residual: float  # normwise backward error of the linear solve, nan when no solution
    shift: float
    nearest: float  # closest eigenvalue found
    notes: tuple[str, ...] = ()

    @property
    def solved(self) -> bool:
        return self.solution is not None


def _pencil_values(Q: SymmetricForm, Mtau: SymmetricForm, lam: float, k: int = 6):
    """Eigenpairs of ``Q x = lambda M_tau x`` nearest to ``lam`` as (lambdas, Q-orthonormal vectors)."""
    n = Q.shape[0]
    if n <= DENSE_LIMIT:
        mu, X = la.eigh(Mtau.dense(), Q.dense())
    else:
        sigma = 1.0 / lam if lam != 0 else 0.0
        mu, X = eigsh(Mtau.matrix.tocsc(), k=min(k, n - 2), M=Q.matrix.tocsc(), sigma=sigma, which="LM")
    keep = np.abs(mu) > 1e-13 * max(np.abs(mu).max(), np.finfo(float).tiny)
    return 1.0 / mu[keep], X[:, keep]


def eigenspace(lam: float, Q: SymmetricForm, Mtau: SymmetricForm, cluster_tol: float = 1e-6) -> np.ndarray:
    """Q-orthonormal basis of the eigenvalue cluster at ``lam`` (empty if lam is off the spectrum)."""
    vals, X = _pencil_values(Q, Mtau, lam)
    hit = np.abs(vals - lam) <= cluster_tol * np.maximum(np.abs(vals), 1.0)
    B = X[:, hit]
    if B.shape[1] > 1:
        # re-orthonormalize in the Q inner product
        G = B.T @ (Q.matrix @ B)
        L = np.linalg.cholesky(0.5 * (G + G.T))
        B = np.linalg.solve(L, B.T).T
    return B


def valid_shift(lam: float, tau_sup: float) -> float:
    """Shift c with ``lambda c > 0`` and ``lambda (tau + c) >= sign(lambda) lambda ||tau||``."""
    if lam == 0:
        return 0.0
    return float(np.sign(lam) * 2.0 * max(tau_sup, 1.0))


def _backward_error(A, anorm: float, u: np.ndarray, b: np.ndarray) -> float:
    """``||A u - b|| / (||A||_1 ||u|| + ||b||)``, zero for a zero system."""
    den = anorm * np.linalg.norm(u) + np.linalg.norm(b)
    return float(np.linalg.norm(A @ u - b) / den) if den > 0 else 0.0


def fredholm_solve(Q: SymmetricForm, Mtau: SymmetricForm, lam: float, load: LoadVector, tol: float = 1e-8,
                   cluster_tol: float = 1e-6, massV2: SymmetricForm | None = None, tau_sup: float = 1.0,
                   shift: float | None = None) -> SolveOutcome:
    """Solve ``Q[u, v] - lam (tau u, v)_V2 = load(v)`` or certify resonance.

    The operator is written as ``Q_c - lam M_{tau + c}`` with ``Q_c = Q + lam c M_V2``;
    c is recorded. At an eigenvalue the data must be orthogonal to E_lambda and the
    solution is fixed by Q-orthogonality to E_lambda.
    """
    b = np.asarray(load.values, dtype=float)
    if len(b) != Q.shape[0]:
        raise ValueError("load and form dimensions differ")
    c = valid_shift(lam, tau_sup) if shift is None else float(shift)
    if lam != 0 and lam * c <= 0:
        raise ValueError("shift must satisfy lambda c > 0")
    if massV2 is not None and c != 0:
        Qc = Q.matrix + (lam * c) * massV2.matrix
        Mc = Mtau.matrix + c * massV2.matrix
        A = (Qc - lam * Mc).tocsc()
    else:
        A = (Q.matrix - lam * Mtau.matrix).tocsc()
    notes = [f"shift c = {c:.6g}"]
    anorm = float(abs(A).sum(axis=0).max()) if A.nnz else 0.0

    if lam == 0:
        u = splu(A).solve(b)
        res = _backward_error(A, anorm, u, b)
        return SolveOutcome("Unique", u, np.zeros((len(b), 0)), np.zeros(0), res, c, float("inf"), tuple(notes))

    vals, X = _pencil_values(Q, Mtau, lam)
    gap = np.abs(vals - lam) / np.maximum(np.abs(vals), 1.0)
    k = int(np.argmin(gap)) if len(gap) else -1
    nearest = float(vals[k]) if k >= 0 else float("inf")
    g = float(gap[k]) if k >= 0 else float("inf")
    if cluster_tol < g <= 10 * cluster_tol:
        raise ResonanceError(f"ambiguous resonance: relative gap {g:.3e} to eigenvalue {nearest:.12g} "
                             f"is within ten times the cluster tolerance {cluster_tol:.1e}")
    if g > cluster_tol:
        u = splu(A).solve(b)
        res = _backward_error(A, anorm, u, b)
        return SolveOutcome("Unique", u, np.zeros((len(b), 0)), np.zeros(0), res, c, nearest, tuple(notes))

    E = eigenspace(lam, Q, Mtau, cluster_tol)
    Etau = E * np.sqrt(abs(nearest))
    r = Etau.T @ b
    scale = max(1.0, float(np.max(np.abs(b))) if len(b) else 1.0)
    if np.any(np.abs(r) > tol * scale):
        notes.append("data not orthogonal to the eigenspace")
        return SolveOutcome("Resonant", None, Etau, r, float("nan"), c, nearest, tuple(notes))
    QE = np.asarray(Q.matrix @ E)
    K = sp.bmat([[A, sp.csr_matrix(QE)], [sp.csr_matrix(QE.T), None]]).tocsc()
    sol = splu(K).solve(np.concatenate([b, np.zeros(E.shape[1])]))
    u, mu = sol[: len(b)], sol[len(b):]
    # mu absorbs the eigenspace component of b, already bounded by the gate above;
    # the residual measures the solve against the compatible data b - Q E mu
    res = _backward_error(A, anorm, u, b - QE @ mu)
    return SolveOutcome("Resonant", u, Etau, r, res, c, nearest, tuple(notes))


def dense_fredholm(Q: SymmetricForm, Mtau: SymmetricForm, lam: float, b: np.ndarray, E: np.ndarray | None = None):
    """Dense oracle: direct solve, or the Q-orthogonal least-squares solution at an eigenvalue."""
    A = Q.dense() - lam * Mtau.dense()
    if E is None or E.shape[1] == 0:
        return np.linalg.solve(A, b)
    QE = Q.dense() @ E
    K = np.block([[A, QE], [QE.T, np.zeros((E.shape[1], E.shape[1]))]])
    return np.linalg.solve(K, np.concatenate([b, np.zeros(E.shape[1])]))[: len(b)]


def resonance_scan(Q: SymmetricForm, Mtau: SymmetricForm, lams: Sequence[float], eigenvalues: Sequence[float],
                   cluster_tol: float = 1e-6) -> list[tuple[float, str, bool]]:
    """Classify each lambda; returns (lambda, status, agrees with the eigenvalue list)."""
    ev = np.asarray(eigenvalues, dtype=float)
    b = LoadVector(np.zeros(Q.shape[0]), Q.dofs)
    out = []
    for lam in lams:
        status = fredholm_solve(Q, Mtau, float(lam), b, cluster_tol=cluster_tol).status
        expected = bool(len(ev)) and bool(np.any(np.abs(ev - lam) <= cluster_tol * np.maximum(np.abs(ev), 1.0)))
        out.append((float(lam), status, (status == "Resonant") == expected))
    return out


# ----------------------------------------------------------------------------
# solution by approximation


@dataclass
class ApproxSolution:
    stages: list = field(default_factory=list)  # dicts: stage, level, l1_distance, norms, residual, removed
    solutions: list = field(default_factory=list)
    limit: np.ndarray | None = None
    differences: dict = field(default_factory=dict)  # q -> successive norm differences
    residual: float = float("nan")
    q_list: tuple[float, ...] = ()
    status: str = "Unique"

    def norm_history(self, q: float) -> np.ndarray:
        return np.array([s["norms"][q] for s in self.stages])

    def boundedness_ratio(self, q: float) -> float:
        h = self.norm_history(q)
        return float(h.max() / np.median(h))


def power_schedule(base: float) -> Callable[[int], float]:
    return lambda j: float(base) ** j


def approximant(f0: Callable, mesh: Mesh, level: float, j: int) -> Callable:
    """``f_{0,j}``: f0 clamped to [-level, level] and set to zero outside D_j."""
    def f(points: np.ndarray) -> np.ndarray:
        vals = np.clip(np.asarray(f0(points), dtype=float), -level, level)
        idx = exhaustion_index(points, mesh.radii)
        return np.where(idx <= j, vals, 0.0)
    return f


def l1_distance(mesh: Mesh, ws: WeightSet, f: Callable, g: Callable, order: int = 2) -> float:
    quad = mesh.quadrature(order)
    pts = quad.points.reshape(-1, mesh.dim)
    v2 = checked(ws.V2, "V2", pts)
    diff = np.abs(np.asarray(f(pts), dtype=float) - np.asarray(g(pts), dtype=float))
    return float((quad.weights.ravel() * v2 * diff).sum())


def project_load(b: np.ndarray, E: np.ndarray, massV2: SymmetricForm) -> tuple[np.ndarray, np.ndarray]:
    """Remove the E_lambda component of discrete data: ``b - sum (b . e_i) M e_i`` with e_i M-orthonormal."""
    if E.shape[1] == 0:
        return b.copy(), np.zeros(0)
    M = massV2.matrix
    G = E.T @ (M @ E)
    L = np.linalg.cholesky(0.5 * (G + G.T))
    e = np.linalg.solve(L, E.T).T
    coef = e.T @ b
    return b - M @ (e @ coef), coef


def approximate_solve(f0: Callable, f1: Callable | None, lam: float, stages: int, mesh: Mesh, ws: WeightSet,
                      q_list: Sequence[float] = (1.2, 1.4), schedule: Callable[[int], float] = power_schedule(2.0),
                      dirichlet_on=(), tol: float = 1e-8, cluster_tol: float = 1e-6) -> ApproxSolution:
    """Solve with truncated data ``f_{0,j}`` for j = 1..stages and record W^{1,q} norms."""
    if stages < 2:
        raise ValueError("at least two stages are required")
    Q = assemble_Q(mesh, ws, dirichlet_on)
    Mtau = assemble_weighted_mass(mesh, ws.tau, ws.V2, dirichlet_on=dirichlet_on)
    MV2 = assemble_weighted_mass(mesh, lambda p: np.ones(len(p)), ws.V2, dirichlet_on=dirichlet_on,
                                 provenance="massV2")
    pts = mesh.quadrature(2).points.reshape(-1, mesh.dim)
    tau_sup = float(np.max(np.abs(ws.tau(pts))))
    out = ApproxSolution(q_list=tuple(q_list))
    E = np.zeros((Q.shape[0], 0))
    if lam != 0:
        E = eigenspace(lam, Q, Mtau, cluster_tol)
        if E.shape[1]:
            out.status = "Resonant"
    for j in range(1, stages + 1):
        level = schedule(j)
        fj = approximant(f0, mesh, level, j)
        load = assemble_load(mesh, fj, f1, ws, dirichlet_on)
        b, removed = project_load(load.values, E, MV2)
        res = fredholm_solve(Q, Mtau, lam, LoadVector(b, load.dofs, load.provenance), tol, cluster_tol,
                             MV2, tau_sup)
        if not res.solved:
            raise RuntimeError(f"stage {j} could not be solved although the data were projected: {res.notes}")
        u = Q.expand(res.solution)
        norms = {q: sobolev_norm(mesh, ws, u, q) for q in q_list}
        out.stages.append({"stage": j, "level": level, "l1_distance": l1_distance(mesh, ws, fj, f0),
                           "norms": norms, "residual": res.residual, "removed": removed})
        out.solutions.append(u)
    out.limit = out.solutions[-1]
    out.differences = {q: np.abs(np.diff(out.norm_history(q))) for q in q_list}
    out.residual = out.stages[-1]["residual"]
    return out
