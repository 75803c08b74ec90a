"""Numerical Legendre transform and the dual form of the curvature equation.

The discrete conjugate is the brute-force sup over primal nodes,

    u*(y) = max_x (x . y - u(x)),

evaluated on a uniform dual grid covering the bounding box of the gradient
samples Du(Omega); membership in the dual domain is decided by the convex
hull of the gradient cloud, shrunk by a margin of dual spacings. The brute
sup is piecewise affine (its pointwise error is O(h^2) for uniformly convex
data) and anchors the involution, Fenchel and gradient-inversion checks.

Dual second derivatives cannot come from differencing a piecewise affine
surface, so the dual-equation residual builds its fields through the
gradient map instead: for each dual node y, Newton inversion of a smooth
local polynomial fit of u gives x(y) = Du*(y) and the primal Hessian
H(x(y)), whence

    det D^2 u*(y) = 1/det H,     U*(y) = H / det H,
    w*(y) = G(det H) - det H G'(det H),

and only the second differences of the w* field are taken on the dual
grid. The fit reproduces quadratics exactly, so the residual vanishes to
rounding for quadratic data, and the identity being tested,

    U*^ij w*_ij = -f(Du*) det D^2 u*,

retains independent dual-side content through the grid differencing of w*.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from . import discrete_ops as dops
from .discrete_ops import ScalarField
from .errors import DomainError, ResolutionError
from .local_fit import LocalPolyFit

__all__ = ["DualField", "legendre_transform", "dual_equation_residual", "dual_functional"]


@dataclass
class DualField:
    y1: np.ndarray                # dual grid axes
    y2: np.ndarray
    ustar: np.ndarray             # (m1, m2)
    argmax: np.ndarray            # flat primal node index of the attaining point
    mask: np.ndarray              # inside the shrunken gradient hull
    hull_eq: np.ndarray           # A y + b <= 0 rows of the gradient hull
    dx: float
    dy: float

    @property
    def spacing(self):
        return max(self.dx, self.dy)

    def grid(self):
        return np.meshgrid(self.y1, self.y2, indexing="ij")

    def mask_with_margin(self, margin):
        Y1, Y2 = self.grid()
        pts = np.stack([Y1, Y2], axis=-1)
        vals = pts @ self.hull_eq[:, :2].T + self.hull_eq[:, 2]
        return np.all(vals <= -margin, axis=-1)

    def conjugate_at(self, points):
        """Biconjugate (u*)* evaluated at the given primal points."""
        Y1, Y2 = self.grid()
        ys = np.column_stack([Y1.ravel(), Y2.ravel()])
        vals = self.ustar.ravel()
        points = np.atleast_2d(points)
        out = np.empty(len(points))
        block = max(1, int(2e7 // max(len(ys), 1)))
        for s in range(0, len(points), block):
            chunk = points[s: s + block]
            out[s: s + block] = np.max(chunk @ ys.T - vals, axis=1)
        return out

    def gradient(self):
        """Centered-difference Du* on the dual grid (NaN at the frame)."""
        g1 = np.full_like(self.ustar, np.nan)
        g2 = np.full_like(self.ustar, np.nan)
        g1[1:-1, :] = (self.ustar[2:, :] - self.ustar[:-2, :]) / (2 * self.dx)
        g2[:, 1:-1] = (self.ustar[:, 2:] - self.ustar[:, :-2]) / (2 * self.dy)
        return g1, g2


def legendre_transform(u, dual_res=64, convexity_tol=1e-8):
    """Brute-force discrete conjugate of u on a dual grid of dual_res^2 nodes."""
    dd = u.dd
    T = dops.differentiate(u)
    lo = float(np.min(T.eig_min()))
    if lo < -convexity_tol * (1.0 + float(np.max(np.abs(T.hess)))):
        raise DomainError(f"u is not discretely convex (min Hessian eigenvalue {lo:g})")
    g = T.grad
    hull = ConvexHull(g)
    y1 = np.linspace(g[:, 0].min(), g[:, 0].max(), dual_res)
    y2 = np.linspace(g[:, 1].min(), g[:, 1].max(), dual_res)
    dx = float(y1[1] - y1[0])
    dy = float(y2[1] - y2[0])

    X = dd.pts_all
    vals = u.values
    Y1, Y2 = np.meshgrid(y1, y2, indexing="ij")
    ys = np.column_stack([Y1.ravel(), Y2.ravel()])
    ustar = np.empty(len(ys))
    amax = np.empty(len(ys), dtype=np.int64)
    block = max(1, int(2e7 // len(X)))
    for s in range(0, len(ys), block):
        scores = ys[s: s + block] @ X.T - vals
        amax[s: s + block] = np.argmax(scores, axis=1)
        ustar[s: s + block] = scores[np.arange(len(scores)), amax[s: s + block]]

    # hull rows normalized so the offset margin is a geometric distance
    eq = hull.equations.copy()
    nrm = np.linalg.norm(eq[:, :2], axis=1, keepdims=True)
    eq /= nrm
    df = DualField(
        y1=y1, y2=y2,
        ustar=ustar.reshape(dual_res, dual_res),
        argmax=amax.reshape(dual_res, dual_res),
        mask=None, hull_eq=eq, dx=dx, dy=dy,
    )
    df.mask = df.mask_with_margin(df.spacing)
    return df


def _f_evaluator(f, dd):
    if callable(f):
        return lambda pts: np.asarray(f(pts[:, 0], pts[:, 1]), float)
    from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

    if isinstance(f, ScalarField):
        vals = f.values
        pts = dd.pts_all
    else:
        vals = np.asarray(f, float)
        pts = dd.pts_int if len(vals) == dd.n_int else dd.pts_all
    lin = LinearNDInterpolator(pts, vals)
    near = NearestNDInterpolator(pts, vals)

    def ev(q):
        out = lin(q)
        bad = ~np.isfinite(out)
        if np.any(bad):
            out[bad] = near(q[bad])
        return out

    return ev


def _dual_pipeline(u, G, dual_res, margin_factor):
    """Shared dual-side fields through the gradient-map inversion.

    Returns the DualField plus, on the working mask (margin_factor dual
    spacings inside the gradient hull): x(y), det D^2 u(x(y)), w*(y).
    """
    dd = u.dd
    df = legendre_transform(u, dual_res)
    work = df.mask_with_margin(margin_factor * df.spacing)
    fit = LocalPolyFit(dd.pts_all, u.values, degree=4, h=dd.h)
    Y1, Y2 = df.grid()
    idx = np.nonzero(work)
    xs = np.empty((len(idx[0]), 2))
    det_p = np.empty(len(idx[0]))
    for k, (i, j) in enumerate(zip(*idx)):
        y = np.array([Y1[i, j], Y2[i, j]])
        x0 = dd.pts_all[df.argmax[i, j]]
        x, H = fit.invert_gradient(y, x0)
        xs[k] = x
        det_p[k] = H[0, 0] * H[1, 1] - H[0, 1] ** 2
    if np.any(det_p <= 0):
        raise DomainError("gradient inversion met a nonconvex local fit")
    wstar = G.g(det_p) - det_p * G.w(det_p)
    return df, work, xs, det_p, wstar


def dual_equation_residual(u, w, f, G, dual_res=48, full_output=False):
    """Sup norm of U*^ij w*_ij + f(Du*) det D^2 u* over interior dual nodes.

    Checked on dual nodes at least 3 dual spacings inside the gradient hull;
    fewer than 10 such nodes raises a resolution error. w is accepted for
    signature compatibility with the primal pair; the dual fields are built
    from u alone.
    """
    dd = u.dd
    T = dops.differentiate(u)
    dmin = float(np.min(T.det))
    if dmin <= 0:
        raise DomainError(f"need det D^2 u bounded away from 0, got min {dmin:g}")
    df, work, xs, det_p, wstar = _dual_pipeline(u, G, dual_res, margin_factor=1.5)

    W = np.full(df.ustar.shape, np.nan)
    W[work] = wstar
    DET = np.full(df.ustar.shape, np.nan)
    DET[work] = det_p
    X1 = np.full(df.ustar.shape, np.nan)
    X2 = np.full(df.ustar.shape, np.nan)
    X1[work] = xs[:, 0]
    X2[work] = xs[:, 1]

    eligible = df.mask_with_margin(3.0 * df.spacing)
    ii, jj = np.nonzero(eligible)
    keep = (ii >= 1) & (ii < W.shape[0] - 1) & (jj >= 1) & (jj < W.shape[1] - 1)
    ii, jj = ii[keep], jj[keep]
    if len(ii) < 10:
        raise ResolutionError(
            f"only {len(ii)} dual nodes 3 spacings inside the mask; refine the dual grid")

    dx, dy = df.dx, df.dy
    wxx = (W[ii + 1, jj] - 2 * W[ii, jj] + W[ii - 1, jj]) / dx ** 2
    wyy = (W[ii, jj + 1] - 2 * W[ii, jj] + W[ii, jj - 1]) / dy ** 2
    wxy = (W[ii + 1, jj + 1] - W[ii + 1, jj - 1] - W[ii - 1, jj + 1]
           + W[ii - 1, jj - 1]) / (4 * dx * dy)

    fev = _f_evaluator(f, dd)
    fvals = fev(np.column_stack([X1[ii, jj], X2[ii, jj]]))

    # U* = cof((D^2 u)^{-1}) = D^2 u / det D^2 u at x(y); rebuild from the fit
    fit = LocalPolyFit(dd.pts_all, u.values, degree=4, h=dd.h)
    res = np.empty(len(ii))
    for k in range(len(ii)):
        x = np.array([X1[ii[k], jj[k]], X2[ii[k], jj[k]]])
        _, _, H = fit.fit_at(x)
        d = H[0, 0] * H[1, 1] - H[0, 1] ** 2
        Ustar = H / d
        dual_det = 1.0 / d
        res[k] = (Ustar[0, 0] * wxx[k] + 2.0 * Ustar[0, 1] * wxy[k]
                  + Ustar[1, 1] * wyy[k] + fvals[k] * dual_det)
    resid = float(np.max(np.abs(res)))
    if not np.isfinite(resid):
        raise ResolutionError("dual residual hit undefined nodes; refine the dual grid")
    if full_output:
        return resid, {"dual_field": df, "nodes": (ii, jj), "residuals": res,
                       "wstar": W, "det_primal": DET}
    return resid


def dual_functional(u, f, G, dual_res=64):
    """Quadrature of J*(u*) over the masked dual grid.

    J* = int G([det D^2 u*]^{-1}) det D^2 u* - int f(Du*)(y . Du* - u*) det D^2 u*,
    with [det D^2 u*]^{-1} = det D^2 u(x(y)) through the gradient map.
    """
    dd = u.dd
    df, work, xs, det_p, _ = _dual_pipeline(u, G, dual_res, margin_factor=1.0)
    Y1, Y2 = df.grid()
    ii, jj = np.nonzero(work)
    ys = np.column_stack([Y1[ii, jj], Y2[ii, jj]])
    ustar = df.ustar[ii, jj]
    fev = _f_evaluator(f, dd)
    fvals = fev(xs)
    geom = G.g(det_p) / det_p
    pairing = np.einsum("ij,ij->i", ys, xs) - ustar
    cell = df.dx * df.dy
    return float(cell * np.sum(geom - fvals * pairing / det_p))
