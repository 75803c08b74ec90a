"""Dirichlet Monge-Ampere solver: det D^2 u = g with u = phi on the boundary.

Damped Newton on F(u) = det D^2 u - g. The linearization of the determinant
is the cofactor matrix U, so each step solves the linearized Monge-Ampere
operator U^ij (du)_ij = -(det D^2 u - g). Ellipticity through nonconvex
iterates is kept by clamping the Hessian eigenvalues at eig_floor inside
the linearization only. The warm start solves the arithmetic-geometric
surrogate Laplace(u) = 2 sqrt(g).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import discrete_ops as dops
from .discrete_ops import ScalarField
from .errors import ConvergenceError, DomainError

__all__ = ["MAConfig", "MAReport", "solve_ma"]


@dataclass
class MAConfig:
    tol: float = 1e-8             # residual inf-norm on det D^2 u - g
    max_iter: int = 50
    eig_floor: float = 1e-6       # eigenvalue clamp inside the linearization
    ls_shrink: float = 0.5
    lin_rtol: float = 1e-10

    def __post_init__(self):
        if self.tol <= 0 or self.eig_floor <= 0:
            raise DomainError("tolerance and eigenvalue floor must be positive")


@dataclass
class MAReport:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    lin_residuals: list = field(default_factory=list)
    min_eig: float = np.nan       # unclamped Hessian eigenvalue floor at exit
    success: bool = False
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "residuals": self.residuals,
            "lin_residuals": self.lin_residuals,
            "min_eig": self.min_eig,
            "success": self.success,
            "warnings": self.warnings,
        }


def _clamped_cofactor(T, floor):
    """Cofactor of the Hessian with eigenvalues clamped at floor (2x2)."""
    a, b, c = T.hess[:, 0], T.hess[:, 1], T.hess[:, 2]
    mean = 0.5 * (a + c)
    rad = np.sqrt(0.25 * (a - c) ** 2 + b ** 2)
    lo, hi = mean - rad, mean + rad
    lo_c, hi_c = np.maximum(lo, floor), np.maximum(hi, floor)
    # eigenvector angle: [cos t, sin t] for lo along (a - hi, ... ) basis
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = np.where(rad > 0, rad, 1.0)
        ca = 0.5 * (a - c) / denom          # cos(2t)
        sa = b / denom                      # sin(2t)
    # reconstructed clamped Hessian entries
    axx = mean_c = 0.5 * (lo_c + hi_c)
    diff = 0.5 * (hi_c - lo_c)
    hxx = mean_c + diff * ca
    hyy = mean_c - diff * ca
    hxy = diff * sa
    return np.column_stack([hyy, -hxy, hxx])


def solve_ma(dd, g, phi, cfg=None, u0=None):
    """Solve det D^2 u = g, u = phi on the boundary; returns (u, MAReport).

    g is an interior-node array (or ScalarField); raises DomainError when g
    is negative anywhere; isolated zeros are tolerated with a warning since
    the linearization clamp keeps the steps elliptic.
    """
    cfg = cfg or MAConfig()
    if isinstance(g, ScalarField):
        g = g.interior
    g = np.asarray(g, float)
    if g.shape != (dd.n_int,):
        raise DomainError("g must give one value per interior node")
    report = MAReport()
    if np.any(g < 0):
        raise DomainError("g must be positive (det D^2 u = g needs g > 0)")
    if np.any(g == 0):
        report.warnings.append("g vanishes at isolated nodes; problem is degenerate there")

    phi_b = dd.sample_boundary(phi)
    st = dops.get_stencils(dd)
    ones = np.ones(dd.n_int)
    zeros = np.zeros(dd.n_int)

    if u0 is None:
        # warm start: Laplace(u) = 2 sqrt(g)
        A = dops.operator_matrix(dd, ones, zeros, ones)
        Aii, Aib = A[:, : dd.n_int], A[:, dd.n_int:]
        rhs = 2.0 * np.sqrt(g) - Aib @ phi_b
        ui = spla.spsolve(Aii.tocsc(), rhs)
        u_vals = np.concatenate([ui, phi_b])
    else:
        u_vals = u0.values.copy() if isinstance(u0, ScalarField) else np.asarray(u0, float).copy()
        u_vals[dd.n_int:] = phi_b

    u = ScalarField(dd, u_vals)
    T = dops.differentiate(u)
    res = float(np.max(np.abs(T.det - g)))
    report.residuals.append(res)

    for it in range(cfg.max_iter):
        if res <= cfg.tol:
            report.success = True
            break
        F = T.det - g
        U = _clamped_cofactor(T, cfg.eig_floor)
        A = dops.operator_matrix(dd, U[:, 0], U[:, 1], U[:, 2])
        Aii = A[:, : dd.n_int].tocsc()
        lu = spla.splu(Aii)
        du = lu.solve(-F)
        lin_res = float(np.max(np.abs(Aii @ du + F)) / (1.0 + np.max(np.abs(F))))
        report.lin_residuals.append(lin_res)

        t = 1.0
        best = (np.inf, None, None)
        while True:
            trial = u.values.copy()
            trial[: dd.n_int] += t * du
            u_try = ScalarField(dd, trial)
            T_try = dops.differentiate(u_try)
            res_try = float(np.max(np.abs(T_try.det - g)))
            if res_try < best[0]:
                best = (res_try, u_try, T_try)
            if res_try <= (1.0 - 0.25 * t) * res or t < 1e-6:
                break
            t *= cfg.ls_shrink
        if best[0] >= res * (1.0 - 1e-12):
            # rounding floor of the determinant evaluation reached
            report.warnings.append(f"stagnated at residual {res:g}")
            report.iterations = it
            break
        res, u, T = best
        report.residuals.append(res)
        report.iterations = it + 1
    else:
        report.success = res <= cfg.tol

    report.min_eig = float(np.min(T.eig_min()))
    if not report.success:
        raise ConvergenceError(
            f"Monge-Ampere Newton stalled at residual {res:g} after "
            f"{report.iterations} iterations", report)
    return u, report
