"""Finite-difference operators on Shortley-Weller grids.

All derivative operators act on full value vectors (interior nodes first,
boundary nodes appended) and produce values at interior nodes:

    Dx, Dy     second-order first derivatives (3-point, non-uniform at cuts)
    Dxx, Dyy   second derivatives (3-point, exact on quadratics)
    Dxy        4-point centered stencil where the diagonal lattice neighbors
               are interior; otherwise the symmetrized composition of the
               one-sided first-derivative operators

The cofactor of the 2x2 Hessian is formed by the swap identity
U = [[u_yy, -u_xy], [-u_xy, u_xx]], and the linearized operator is applied
pointwise as U11 w_xx + 2 U12 w_xy + U22 w_yy.

Interior quadrature is node-wise midpoint with cell areas clipped by the
cut distances; boundary integrals use the arclength weights carried by the
grid. Summation order is fixed, so results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ResolutionError

__all__ = [
    "ScalarField",
    "TensorField",
    "differentiate",
    "apply_L",
    "norms",
    "lp_norm",
    "boundary_lp_norm",
    "sobolev4_mass",
    "get_stencils",
    "operator_matrix",
    "divergence_operator_matrix",
]


class ScalarField:
    """Grid-aligned values, one per interior + boundary node."""

    def __init__(self, dd, values):
        values = np.asarray(values, float)
        if values.shape != (dd.n_total,):
            raise DomainError(
                f"field needs {dd.n_total} values (interior + boundary), got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("field values must be finite")
        self.dd = dd
        self.values = values

    @classmethod
    def from_function(cls, dd, fn):
        return cls(dd, dd.sample(fn))

    @classmethod
    def from_parts(cls, dd, interior, boundary):
        v = np.concatenate([np.asarray(interior, float), np.asarray(boundary, float)])
        return cls(dd, v)

    @property
    def interior(self):
        return self.values[: self.dd.n_int]

    @property
    def boundary(self):
        return self.values[self.dd.n_int:]


@dataclass
class TensorField:
    dd: object
    grad: np.ndarray      # (n_int, 2)
    hess: np.ndarray      # (n_int, 3): xx, xy, yy
    det: np.ndarray       # (n_int,)
    cof: np.ndarray       # (n_int, 3): U11, U12, U22

    def eig_min(self):
        a, b, c = self.hess[:, 0], self.hess[:, 1], self.hess[:, 2]
        mean = 0.5 * (a + c)
        rad = np.sqrt(0.25 * (a - c) ** 2 + b ** 2)
        return mean - rad

    def eig_max(self):
        a, b, c = self.hess[:, 0], self.hess[:, 1], self.hess[:, 2]
        mean = 0.5 * (a + c)
        rad = np.sqrt(0.25 * (a - c) ** 2 + b ** 2)
        return mean + rad

    def cof_min_eig(self):
        a, b, c = self.cof[:, 0], self.cof[:, 1], self.cof[:, 2]
        mean = 0.5 * (a + c)
        rad = np.sqrt(0.25 * (a - c) ** 2 + b ** 2)
        return mean - rad


def lattice_index(dd):
    """Dense lattice -> interior-index grid with a 2-cell margin; cached."""
    if dd._lattice is None:
        ij = dd.ij_int
        i0, j0 = int(ij[:, 0].min()) - 2, int(ij[:, 1].min()) - 2
        ni = int(ij[:, 0].max()) - i0 + 5
        nj = int(ij[:, 1].max()) - j0 + 5
        grid = -np.ones((ni, nj), dtype=np.int64)
        grid[ij[:, 0] - i0, ij[:, 1] - j0] = np.arange(dd.n_int)
        dd._lattice = (grid, i0, j0)
    return dd._lattice


class Stencils:
    def __init__(self, dd):
        self.dd = dd
        n_int, n_tot, h = dd.n_int, dd.n_total, dd.h
        self.idx_grid, self.i0, self.j0 = lattice_index(dd)

        def cols(d):
            k = dd.nbr_idx[:, d].copy()
            k[dd.nbr_kind[:, d] == 1] += n_int
            return k

        rows = np.arange(n_int)
        he, hw = dd.nbr_dist[:, 0], dd.nbr_dist[:, 1]
        hn, hs = dd.nbr_dist[:, 2], dd.nbr_dist[:, 3]
        cE, cW, cN, cS = cols(0), cols(1), cols(2), cols(3)

        def first(hp, hm, cp, cm):
            data = np.concatenate([
                -hp / (hm * (hm + hp)),
                (hp - hm) / (hm * hp),
                hm / (hp * (hm + hp)),
            ])
            r = np.concatenate([rows, rows, rows])
            c = np.concatenate([cm, rows, cp])
            return sp.csr_matrix((data, (r, c)), shape=(n_int, n_tot))

        def second(hp, hm, cp, cm):
            data = np.concatenate([
                2.0 / (hm * (hm + hp)),
                -2.0 / (hm * hp),
                2.0 / (hp * (hm + hp)),
            ])
            r = np.concatenate([rows, rows, rows])
            c = np.concatenate([cm, rows, cp])
            return sp.csr_matrix((data, (r, c)), shape=(n_int, n_tot))

        self.Dx = first(he, hw, cE, cW)
        self.Dy = first(hn, hs, cN, cS)
        self.Dxx = second(he, hw, cE, cW)
        self.Dyy = second(hn, hs, cN, cS)

        # one-sided interior-only first derivatives for compositions
        self.Dx_out = self._outer_derivative(axis=0)
        self.Dy_out = self._outer_derivative(axis=1)
        self.Dxy = self._build_dxy()

    def _nbr(self, i, j):
        return int(self.idx_grid[i - self.i0, j - self.j0])

    def _outer_derivative(self, axis):
        """d/dx (axis 0) or d/dy (axis 1) referencing interior nodes only."""
        dd = self.dd
        h = dd.h
        n_int = dd.n_int
        g, i0, j0 = self.idx_grid, self.i0, self.j0
        ij = dd.ij_int
        step = np.array([1, 0]) if axis == 0 else np.array([0, 1])
        kp = g[ij[:, 0] + step[0] - i0, ij[:, 1] + step[1] - j0]
        km = g[ij[:, 0] - step[0] - i0, ij[:, 1] - step[1] - j0]
        centered = (kp >= 0) & (km >= 0)

        rc = np.nonzero(centered)[0]
        rows = [np.repeat(rc, 2)]
        colsa = [np.column_stack([km[rc], kp[rc]]).ravel()]
        data = [np.tile([-0.5 / h, 0.5 / h], len(rc))]

        for k in np.nonzero(~centered)[0]:
            i, j = ij[k]
            if kp[k] >= 0:
                kpp = self._nbr(i + 2 * step[0], j + 2 * step[1])
                if kpp >= 0:
                    rows.append([k, k, k]); colsa.append([k, kp[k], kpp])
                    data.append([-1.5 / h, 2.0 / h, -0.5 / h])
                else:
                    rows.append([k, k]); colsa.append([k, kp[k]])
                    data.append([-1.0 / h, 1.0 / h])
            elif km[k] >= 0:
                kmm = self._nbr(i - 2 * step[0], j - 2 * step[1])
                if kmm >= 0:
                    rows.append([k, k, k]); colsa.append([k, km[k], kmm])
                    data.append([1.5 / h, -2.0 / h, 0.5 / h])
                else:
                    rows.append([k, k]); colsa.append([k, km[k]])
                    data.append([1.0 / h, -1.0 / h])
            # isolated column: empty row
        rows = np.concatenate([np.asarray(r, np.int64) for r in rows])
        colsa = np.concatenate([np.asarray(c, np.int64) for c in colsa])
        data = np.concatenate([np.asarray(d, float) for d in data])
        return sp.csr_matrix((data, (rows, colsa)), shape=(n_int, n_int))

    def _build_dxy(self):
        dd = self.dd
        n_int, n_tot, h = dd.n_int, dd.n_total, dd.h
        g, i0, j0 = self.idx_grid, self.i0, self.j0
        ij = dd.ij_int
        ne = g[ij[:, 0] + 1 - i0, ij[:, 1] + 1 - j0]
        nw = g[ij[:, 0] - 1 - i0, ij[:, 1] + 1 - j0]
        se = g[ij[:, 0] + 1 - i0, ij[:, 1] - 1 - j0]
        sw = g[ij[:, 0] - 1 - i0, ij[:, 1] - 1 - j0]
        full = (ne >= 0) & (nw >= 0) & (se >= 0) & (sw >= 0)

        rows_f = np.nonzero(full)[0]
        c = 1.0 / (4.0 * h * h)
        r = np.repeat(rows_f, 4)
        cgrid = np.column_stack([ne[full], sw[full], nw[full], se[full]]).ravel()
        vals = np.tile([c, c, -c, -c], len(rows_f))
        A = sp.csr_matrix((vals, (r, cgrid)), shape=(n_int, n_tot))

        # composition fallback: 0.5 (Dx_out Dy + Dy_out Dx) rows
        rest = np.nonzero(~full)[0]
        if len(rest) > 0:
            sel = sp.csr_matrix(
                (np.ones(len(rest)), (np.arange(len(rest)), rest)),
                shape=(len(rest), n_int),
            )
            comp = 0.5 * (sel @ self.Dx_out @ self.Dy + sel @ self.Dy_out @ self.Dx)
            expand = sp.csr_matrix(
                (np.ones(len(rest)), (rest, np.arange(len(rest)))),
                shape=(n_int, len(rest)),
            )
            A = A + expand @ comp
        return A.tocsr()


def get_stencils(dd):
    if dd._stencils is None:
        dd._stencils = Stencils(dd)
    return dd._stencils


def differentiate(u):
    """Gradient, Hessian, Hessian determinant and cofactor at interior nodes."""
    st = get_stencils(u.dd)
    v = u.values
    gx, gy = st.Dx @ v, st.Dy @ v
    hxx, hyy, hxy = st.Dxx @ v, st.Dyy @ v, st.Dxy @ v
    det = hxx * hyy - hxy ** 2
    cof = np.column_stack([hyy, -hxy, hxx])
    return TensorField(
        dd=u.dd,
        grad=np.column_stack([gx, gy]),
        hess=np.column_stack([hxx, hxy, hyy]),
        det=det,
        cof=cof,
    )


def apply_L(T, w):
    """Linearized operator U11 w_xx + 2 U12 w_xy + U22 w_yy at interior nodes."""
    st = get_stencils(w.dd)
    v = w.values
    return T.cof[:, 0] * (st.Dxx @ v) + 2.0 * T.cof[:, 1] * (st.Dxy @ v) + T.cof[:, 2] * (st.Dyy @ v)


def operator_matrix(dd, c11, c12, c22):
    """Sparse matrix of w -> c11 w_xx + 2 c12 w_xy + c22 w_yy (interior rows)."""
    st = get_stencils(dd)
    return (
        sp.diags(c11) @ st.Dxx + 2.0 * sp.diags(c12) @ st.Dxy + sp.diags(c22) @ st.Dyy
    ).tocsr()


def divergence_operator_matrix(dd, U):
    """Divergence-form w -> d_i(U^ij d_j w), legitimate since U is divergence free."""
    st = get_stencils(dd)
    F1 = sp.diags(U[:, 0]) @ st.Dx + sp.diags(U[:, 1]) @ st.Dy
    F2 = sp.diags(U[:, 1]) @ st.Dx + sp.diags(U[:, 2]) @ st.Dy
    return (st.Dx_out @ F1 + st.Dy_out @ F2).tocsr()


def lp_norm(dd, values, p):
    """Interior L^p norm by clipped-cell midpoint quadrature (p = inf allowed)."""
    values = np.asarray(values, float)
    if values.shape[0] == dd.n_total:
        values = values[: dd.n_int]
    if np.isinf(p):
        return float(np.max(np.abs(values)))
    return float(np.sum(dd.quad_w * np.abs(values) ** p) ** (1.0 / p))


def boundary_lp_norm(dd, values_b, p):
    values_b = np.asarray(values_b, float)
    if np.isinf(p):
        return float(np.max(np.abs(values_b)))
    return float(np.sum(dd.bnd_arcw * np.abs(values_b) ** p) ** (1.0 / p))


def norms(field, p):
    """Interior L^p norm of a field (spec operation)."""
    return lp_norm(field.dd, field.values, p)


def integrate(dd, values):
    values = np.asarray(values, float)
    if values.shape[0] == dd.n_total:
        values = values[: dd.n_int]
    return float(np.sum(dd.quad_w * values))


def sobolev4_mass(u, p, eps, center=(0.0, 0.0)):
    """Mass of |D^4 u|^p outside radius eps, via centered fourth differences.

    |D^4 u| = |u_xxxx| + 2 |u_xxyy| + |u_yyyy| on nodes whose uniform 5-point
    stencils in both axes stay interior; needs eps >= 4h.
    """
    dd = u.dd
    h = dd.h
    if eps < 4.0 * h:
        raise ResolutionError(f"exclusion radius {eps:g} < 4h = {4*h:g}")
    g, i0, j0 = lattice_index(dd)

    # dense lattice embedding of interior values
    V = np.full(g.shape, np.nan)
    mask = g >= 0
    V[mask] = u.interior[g[mask]]

    def shift(A, di, dj):
        return np.roll(np.roll(A, -di, axis=0), -dj, axis=1)

    uxxxx = (shift(V, -2, 0) - 4 * shift(V, -1, 0) + 6 * V - 4 * shift(V, 1, 0) + shift(V, 2, 0)) / h ** 4
    uyyyy = (shift(V, 0, -2) - 4 * shift(V, 0, -1) + 6 * V - 4 * shift(V, 0, 1) + shift(V, 0, 2)) / h ** 4
    # second x-difference of the second y-difference
    d2y = shift(V, 0, -1) - 2 * V + shift(V, 0, 1)
    uxxyy = (shift(d2y, -1, 0) - 2 * d2y + shift(d2y, 1, 0)) / h ** 4

    dens = np.abs(uxxxx) + 2.0 * np.abs(uxxyy) + np.abs(uyyyy)
    ok = mask & np.isfinite(dens)

    ki = dd.ij_int[:, 0] - i0
    kj = dd.ij_int[:, 1] - j0
    r = np.hypot(dd.pts_int[:, 0] - center[0], dd.pts_int[:, 1] - center[1])
    eligible = ok[ki, kj] & (r > eps)
    return float(np.sum(dd.quad_w[eligible] * dens[ki, kj][eligible] ** p))
