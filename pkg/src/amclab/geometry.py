"""Uniformly convex planar domains, Shortley-Weller grids and barriers.

A domain is described by a strictly convex defining function rho with
rho < 0 inside, rho = 0 on the boundary and D rho != 0 there; disks and
ellipses use

    rho(x, y) = (x^2/a^2 + y^2/b^2 - 1) / 2,

so D^2 rho = diag(1/a^2, 1/b^2) >= eta I with eta = 1/max(a,b)^2.

The grid is a Shortley-Weller layout: interior nodes are lattice points
with rho < 0; boundary nodes are the intersections of lattice lines with
the boundary, and interior nodes adjacent to the boundary record the cut
distances used by the one-sided difference stencils. Boundary nodes carry
the outward normal, the (Gauss) curvature of the boundary and an arclength
quadrature weight. Only n = 2 is gridded.

The barrier of a boundary datum phi is

    utilde = phi + mu (e^rho - 1),   uhat = phi - mu (e^rho - 1),

with mu found by a doubling search until the discrete Hessian of utilde
has minimum eigenvalue >= eps at every interior node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BarrierError, DomainError, GridError

__all__ = [
    "ConvexDomain",
    "DiscreteDomain",
    "Barrier",
    "build_grid",
    "boundary_geometry",
    "build_barrier",
]

# neighbor direction order: +x, -x, +y, -y
_DIRS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])


class ConvexDomain:
    """Disk or ellipse with analytic defining function and boundary geometry."""

    def __init__(self, kind, a, b):
        if a <= 0 or b <= 0:
            raise DomainError("semi-axes must be positive")
        self.kind = kind
        self.a = float(a)
        self.b = float(b)
        self.eta = 1.0 / max(a, b) ** 2

    @classmethod
    def disk(cls, R=1.0):
        return cls("disk", R, R)

    @classmethod
    def ellipse(cls, a, b):
        return cls("ellipse", a, b)

    def rho(self, x, y):
        return 0.5 * (np.asarray(x) ** 2 / self.a ** 2 + np.asarray(y) ** 2 / self.b ** 2 - 1.0)

    def grad_rho(self, x, y):
        return np.stack([np.asarray(x) / self.a ** 2, np.asarray(y) / self.b ** 2], axis=-1)

    def hess_rho(self, x, y):
        h = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape + (2, 2))
        h[..., 0, 0] = 1.0 / self.a ** 2
        h[..., 1, 1] = 1.0 / self.b ** 2
        return h

    @property
    def char_size(self):
        return 2.0 * min(self.a, self.b)

    @property
    def diam(self):
        return 2.0 * max(self.a, self.b)

    def bbox(self):
        return (-self.a, self.a, -self.b, self.b)

    def boundary_point(self, t):
        t = np.asarray(t, float)
        return np.stack([self.a * np.cos(t), self.b * np.sin(t)], axis=-1)

    def boundary_angle(self, x, y):
        return np.arctan2(np.asarray(y) / self.b, np.asarray(x) / self.a)

    def curvature(self, t):
        a, b = self.a, self.b
        return a * b / (a ** 2 * np.sin(t) ** 2 + b ** 2 * np.cos(t) ** 2) ** 1.5

    def normal(self, x, y):
        g = self.grad_rho(x, y)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def line_cut(self, p, axis, direction):
        """Boundary crossing from inside point p along +-axis; returns (point, dist)."""
        a2 = self.a ** 2 if axis == 0 else self.b ** 2
        other = p[1] if axis == 0 else p[0]
        o2 = self.b ** 2 if axis == 0 else self.a ** 2
        disc = a2 * (1.0 - other ** 2 / o2)
        if disc < 0:
            raise GridError("lattice line does not meet the boundary")
        root = math.sqrt(disc) * (1.0 if direction > 0 else -1.0)
        q = np.array(p, float)
        q[axis] = root
        dist = abs(root - p[axis])
        return q, dist

    def dist_to_boundary(self, pts):
        pts = np.atleast_2d(pts)
        if self.kind == "disk":
            return self.a - np.hypot(pts[:, 0], pts[:, 1])
        # Newton projection along the gradient of rho; the inscribed-circle
        # bound min(a,b) - |p| covers points near the center where D rho -> 0
        q = pts.copy()
        with np.errstate(divide="ignore", invalid="ignore"):
            for _ in range(3):
                r = self.rho(q[:, 0], q[:, 1])
                g = self.grad_rho(q[:, 0], q[:, 1])
                q = q - (r / np.einsum("ij,ij->i", g, g))[:, None] * g
            d = np.linalg.norm(pts - q, axis=1)
        fallback = np.maximum(min(self.a, self.b) - np.hypot(pts[:, 0], pts[:, 1]), 0.0)
        return np.where(np.isfinite(d), d, fallback)

    def __repr__(self):
        if self.kind == "disk":
            return f"ConvexDomain.disk(R={self.a:g})"
        return f"ConvexDomain.ellipse(a={self.a:g}, b={self.b:g})"


def boundary_geometry(domain, x):
    """Normal, Gauss curvature and defining-function data at a boundary point."""
    x = np.asarray(x, float)
    r = float(domain.rho(x[0], x[1]))
    if abs(r) > 1e-8:
        raise DomainError(f"point {x} is not on the boundary (rho = {r:g})")
    t = float(domain.boundary_angle(x[0], x[1]))
    return {
        "nu": domain.normal(x[0], x[1]),
        "K": float(domain.curvature(t)),
        "rho": r,
        "grad": domain.grad_rho(x[0], x[1]),
        "hess": domain.hess_rho(x[0], x[1]),
    }


@dataclass
class DiscreteDomain:
    domain: ConvexDomain
    h: float
    pts_int: np.ndarray          # (n_int, 2)
    ij_int: np.ndarray           # lattice indices of interior nodes
    pts_bnd: np.ndarray          # (n_bnd, 2)
    bnd_t: np.ndarray
    bnd_nu: np.ndarray
    bnd_K: np.ndarray
    bnd_arcw: np.ndarray
    nbr_kind: np.ndarray         # (n_int, 4): 0 interior, 1 boundary
    nbr_idx: np.ndarray          # (n_int, 4)
    nbr_dist: np.ndarray         # (n_int, 4)
    quad_w: np.ndarray           # (n_int,) clipped cell areas
    depth: np.ndarray            # (n_int,) distance to the boundary
    _ij_lookup: dict = field(repr=False, default=None)
    _stencils: object = field(default=None, repr=False)
    _lattice: object = field(default=None, repr=False)

    @property
    def n_int(self):
        return len(self.pts_int)

    @property
    def n_bnd(self):
        return len(self.pts_bnd)

    @property
    def n_total(self):
        return self.n_int + self.n_bnd

    @property
    def pts_all(self):
        return np.vstack([self.pts_int, self.pts_bnd])

    def interior_index(self, i, j):
        if self._ij_lookup is None:
            self._ij_lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(self.ij_int)}
        return self._ij_lookup.get((i, j), -1)

    def sample(self, fn):
        """Evaluate fn(x, y) on all nodes (interior first, then boundary)."""
        p = self.pts_all
        return np.asarray(fn(p[:, 0], p[:, 1]), float)

    def sample_boundary(self, fn):
        return np.asarray(fn(self.pts_bnd[:, 0], self.pts_bnd[:, 1]), float)

    def sample_interior(self, fn):
        return np.asarray(fn(self.pts_int[:, 0], self.pts_int[:, 1]), float)

    def depth_mask(self, min_depth):
        return self.depth >= min_depth


def build_grid(domain, h):
    """Shortley-Weller grid for the domain at lattice spacing h."""
    if not 0 < h <= domain.char_size / 2.0:
        raise GridError(
            f"spacing h = {h:g} is too coarse for a domain of size {domain.char_size:g}"
        )
    xmin, xmax, ymin, ymax = domain.bbox()
    imin, imax = math.floor(xmin / h) - 1, math.ceil(xmax / h) + 1
    jmin, jmax = math.floor(ymin / h) - 1, math.ceil(ymax / h) + 1
    ii = np.arange(imin, imax + 1)
    jj = np.arange(jmin, jmax + 1)
    XX, YY = np.meshgrid(ii * h, jj * h, indexing="ij")
    RHO = domain.rho(XX, YY)
    on_bnd = np.abs(RHO) <= 1e-13
    inside = (RHO < 0) & ~on_bnd

    ni, nj = len(ii), len(jj)
    idx_grid = -np.ones((ni, nj), dtype=np.int64)
    int_i, int_j = np.nonzero(inside)
    n_int = len(int_i)
    if n_int == 0:
        raise GridError("domain too thin for this spacing: no interior nodes")
    idx_grid[int_i, int_j] = np.arange(n_int)
    pts_int = np.column_stack([XX[int_i, int_j], YY[int_i, int_j]])
    ij_int = np.column_stack([ii[int_i], jj[int_j]])

    bnd_pts = []
    bnd_key = {}

    def register_bnd(q):
        key = (round(q[0], 12), round(q[1], 12))
        k = bnd_key.get(key)
        if k is None:
            k = len(bnd_pts)
            bnd_key[key] = k
            bnd_pts.append((q[0], q[1]))
        return k

    nbr_kind = np.zeros((n_int, 4), dtype=np.int8)
    nbr_idx = np.zeros((n_int, 4), dtype=np.int64)
    nbr_dist = np.full((n_int, 4), h, dtype=float)

    cut_any = np.zeros(n_int, dtype=bool)
    for d, (di, dj) in enumerate(_DIRS):
        nb = idx_grid[int_i + di, int_j + dj]
        nbr_idx[:, d] = nb
        cut_any |= nb < 0

    for k in np.nonzero(cut_any)[0]:
        gi, gj = int_i[k], int_j[k]
        p = pts_int[k]
        for d, (di, dj) in enumerate(_DIRS):
            ni_, nj_ = gi + di, gj + dj
            if idx_grid[ni_, nj_] >= 0:
                continue
            # neighbor lattice point is outside or exactly on the boundary: cut
            axis = 0 if di != 0 else 1
            direction = di + dj
            if on_bnd[ni_, nj_]:
                q = np.array([XX[ni_, nj_], YY[ni_, nj_]])
                dist = h
            else:
                q, dist = domain.line_cut(p, axis, direction)
                if dist > h:
                    dist = h  # grazing configuration; clamp to the lattice step
            nbr_kind[k, d] = 1
            nbr_idx[k, d] = register_bnd(q)
            nbr_dist[k, d] = max(dist, 1e-12)

    pts_bnd = np.asarray(bnd_pts, float)
    if len(pts_bnd) < 8:
        raise GridError("domain too thin for this spacing: boundary is under-resolved")
    bnd_t = domain.boundary_angle(pts_bnd[:, 0], pts_bnd[:, 1])
    bnd_nu = domain.normal(pts_bnd[:, 0], pts_bnd[:, 1])
    bnd_K = domain.curvature(bnd_t)

    order = np.argsort(bnd_t)
    sorted_pts = pts_bnd[order]
    chord = np.linalg.norm(sorted_pts - np.roll(sorted_pts, 1, axis=0), axis=1)
    w_sorted = 0.5 * (chord + np.roll(chord, -1))
    bnd_arcw = np.empty(len(pts_bnd))
    bnd_arcw[order] = w_sorted

    tau = np.minimum(nbr_dist / h, 1.0)
    quad_w = (h * 0.5 * (tau[:, 0] + tau[:, 1])) * (h * 0.5 * (tau[:, 2] + tau[:, 3]))
    depth = domain.dist_to_boundary(pts_int)

    return DiscreteDomain(
        domain=domain, h=h, pts_int=pts_int, ij_int=ij_int, pts_bnd=pts_bnd,
        bnd_t=np.asarray(bnd_t, float), bnd_nu=np.asarray(bnd_nu, float),
        bnd_K=np.asarray(bnd_K, float), bnd_arcw=bnd_arcw,
        nbr_kind=nbr_kind, nbr_idx=nbr_idx, nbr_dist=nbr_dist,
        quad_w=quad_w, depth=depth,
    )


@dataclass
class Barrier:
    mu: float
    eps: float                    # attained Hessian floor of utilde
    phi: Callable
    dd: DiscreteDomain
    values_tilde: np.ndarray      # utilde on all nodes
    values_hat: np.ndarray
    min_eig_tilde: float
    max_eig_hat: float
    f_tilde: Optional[np.ndarray] = None   # L[utilde] at interior nodes
    f_tilde_norm: Optional[float] = None

    def utilde(self, x, y):
        r = self.dd.domain.rho(x, y)
        return self.phi(x, y) + self.mu * (np.exp(r) - 1.0)

    def uhat(self, x, y):
        r = self.dd.domain.rho(x, y)
        return self.phi(x, y) - self.mu * (np.exp(r) - 1.0)


def build_barrier(dd, phi, eps=1e-3, G=None, p=4.0, side="convex", mu_cap=1e8):
    """Doubling search for the barrier phi + mu (e^rho - 1).

    mu doubles from 1 until the discrete Hessian of utilde has minimum
    eigenvalue >= eps at every interior node (side='convex'); side='both'
    additionally requires the concave companion uhat to satisfy
    max eigenvalue <= -eps. If G is given, the generalized affine mean
    curvature of utilde and its L^p norm are evaluated discretely.
    """
    from . import discrete_ops as dops

    if eps <= 0:
        raise BarrierError("convexity margin eps must be positive")
    rho_all = dd.sample(lambda x, y: dd.domain.rho(x, y))
    phi_all = dd.sample(phi)
    base = np.exp(rho_all) - 1.0

    mu = 1.0
    while True:
        vt = phi_all + mu * base
        Tt = dops.differentiate(dops.ScalarField(dd, vt))
        lo_t = float(np.min(Tt.eig_min()))
        ok = lo_t >= eps
        hi_h = np.inf
        if side == "both":
            vh = phi_all - mu * base
            Th = dops.differentiate(dops.ScalarField(dd, vh))
            hi_h = float(np.max(Th.eig_max()))
            ok = ok and hi_h <= -eps
        if ok:
            break
        mu *= 2.0
        if mu > mu_cap:
            raise BarrierError(
                f"barrier search exhausted at mu > {mu_cap:g}; pathological boundary data"
            )

    vt = phi_all + mu * base
    vh = phi_all - mu * base
    Tt = dops.differentiate(dops.ScalarField(dd, vt))
    Th = dops.differentiate(dops.ScalarField(dd, vh))
    bar = Barrier(
        mu=mu, eps=eps, phi=phi, dd=dd,
        values_tilde=vt, values_hat=vh,
        min_eig_tilde=float(np.min(Tt.eig_min())),
        max_eig_hat=float(np.max(Th.eig_max())),
    )
    if G is not None:
        wt = G.w(np.maximum(Tt.det, 1e-300))
        w_field = np.zeros(dd.n_total)
        w_field[: dd.n_int] = wt
        w_field[dd.n_int:] = G.w(np.maximum(
            _boundary_det_estimate(dd, Tt), 1e-300))
        ft = dops.apply_L(Tt, dops.ScalarField(dd, w_field))
        bar.f_tilde = ft
        bar.f_tilde_norm = dops.lp_norm(dd, ft, p)
    return bar


def _boundary_det_estimate(dd, T):
    """Nearest-interior-node determinant, used only to close w on the boundary."""
    from scipy.spatial import cKDTree

    tree = cKDTree(dd.pts_int)
    _, idx = tree.query(dd.pts_bnd)
    return T.det[idx]
