"""Reference quadrature rules on intervals and triangles."""

from __future__ import annotations

import numpy as np


def gauss_interval(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of degree ``order``."""
    npts = max(1, (order + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def simplex_rule(dim: int, order: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on the reference simplex.

    Returns barycentric-free reference coordinates of shape ``(nq, dim)`` and
    weights summing to the reference volume (1 for the interval, 1/2 for the
    triangle).
    """
    if order < 1:
        raise ValueError("quadrature order must be at least 1")
    if dim == 1:
        x, w = gauss_interval(order)
        return x[:, None], w
    if dim == 2:
        if order <= 2:
            pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
            return pts, np.full(3, 1 / 6)
        # collapsed (Duffy) tensor rule for higher orders
        x, wx = gauss_interval(order + 1)
        s, t = np.meshgrid(x, x, indexing="ij")
        ws = np.outer(wx, wx)
        pts = np.column_stack([s.ravel(), (t * (1 - s)).ravel()])
        return pts, (ws * (1 - s)).ravel()
    raise ValueError(f"unsupported dimension {dim}")


def p1_basis(ref_points: np.ndarray) -> np.ndarray:
    """P1 shape functions at reference points, shape ``(nq, dim + 1)``."""
    return np.column_stack([1.0 - ref_points.sum(axis=1), ref_points])
