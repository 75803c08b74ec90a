"""Moving weighted least-squares fits on scattered grid data.

Used where node values must be differentiated at off-grid points: boundary
traces (one-sided fits at boundary nodes) and the gradient-map inversion of
the Legendre pipeline. The weight (1 - (r/rho)^2)^3 is smooth and compactly
supported, so the fitted value varies smoothly with the evaluation point,
and a degree-q fit reproduces polynomial data of degree <= q exactly.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import ResolutionError

__all__ = ["LocalPolyFit"]


def _monomials(degree):
    return [(i, j) for s in range(degree + 1) for i in range(s + 1) for j in [s - i]]


class LocalPolyFit:
    def __init__(self, points, values, degree=4, radius=None, h=None):
        self.points = np.asarray(points, float)
        self.values = np.asarray(values, float)
        self.degree = degree
        self.tree = cKDTree(self.points)
        if radius is None:
            if h is None:
                raise ValueError("need radius or lattice spacing h")
            radius = (2.6 if degree <= 2 else 3.2) * h
        self.radius = float(radius)
        self.expo = np.array(_monomials(degree))
        self.ncoef = len(self.expo)

    def _coeffs(self, z):
        rho = self.radius
        for _ in range(6):
            idx = self.tree.query_ball_point(z, rho)
            if len(idx) >= int(1.25 * self.ncoef):
                break
            rho *= 1.4
        else:
            raise ResolutionError(f"not enough data around {z} for a local fit")
        pts = self.points[idx]
        xi = (pts - z) / rho
        r2 = np.einsum("ij,ij->i", xi, xi)
        wgt = np.sqrt(np.clip(1.0 - r2, 0.0, None) ** 3 + 1e-10)
        Amat = (xi[:, 0][:, None] ** self.expo[:, 0]) * (xi[:, 1][:, None] ** self.expo[:, 1])
        coef, *_ = np.linalg.lstsq(Amat * wgt[:, None], self.values[idx] * wgt, rcond=None)
        return coef, rho

    def fit_at(self, z):
        """(value, gradient, hessian) of the local polynomial at z."""
        z = np.asarray(z, float)
        coef, rho = self._coeffs(z)
        c = {(i, j): coef[k] for k, (i, j) in enumerate(self.expo)}
        val = c[(0, 0)]
        grad = np.array([c[(1, 0)], c[(0, 1)]]) / rho
        hess = np.array([
            [2.0 * c[(2, 0)], c[(1, 1)]],
            [c[(1, 1)], 2.0 * c[(0, 2)]],
        ]) / rho ** 2
        return val, grad, hess

    def invert_gradient(self, y, x0, tol=1e-12, max_iter=40):
        """Solve grad(x) = y by Newton from x0; returns (x, hess at x)."""
        y = np.asarray(y, float)
        x = np.asarray(x0, float).copy()
        scale = 1.0 + float(np.linalg.norm(y))
        hess = None
        for _ in range(max_iter):
            _, g, hess = self.fit_at(x)
            r = y - g
            if np.linalg.norm(r) <= tol * scale:
                break
            step = np.linalg.solve(hess, r)
            norm = np.linalg.norm(step)
            if norm > self.radius:
                step *= self.radius / norm
            x = x + step
        return x, hess
