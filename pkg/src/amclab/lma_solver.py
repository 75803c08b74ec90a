"""Linearized Monge-Ampere solver: U^ij w_ij = f with w = psi on the boundary.

Nondivergence-form discretization with the shared stencils; the linear
system is nonsymmetric and solved by sparse LU plus one step of iterative
refinement. Since the cofactor matrix is divergence free, the divergence
form d_i(U^ij d_j w) is an equivalent discretization and is available as a
cross-check mode: disagreement between the two beyond the truncation level
flags a bug.

The report carries the raw material for the maximum-principle monitors:
sup and inf of w and psi, the fraction of diagonally dominant stencil rows,
and the Aleksandrov-Bakelman-Pucci load ||f / (det U)^(1/n)||_{L^n}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import discrete_ops as dops
from .discrete_ops import ScalarField
from .errors import ConvergenceError, EllipticityError

__all__ = ["LMAReport", "solve_lma"]


@dataclass
class LMAReport:
    min_eig_U: float = np.nan
    achieved_residual: float = np.nan
    dominant_fraction: float = np.nan
    sup_w: float = np.nan
    min_w: float = np.nan
    sup_psi: float = np.nan
    min_psi: float = np.nan
    abp_load: float = np.nan      # ||f / (det U)^(1/n)||_{L^n}
    abp_load_plus: float = np.nan  # same with f^+ only
    mode: str = "nondivergence"

    def to_dict(self):
        return {k: getattr(self, k) for k in (
            "min_eig_U", "achieved_residual", "dominant_fraction", "sup_w",
            "min_w", "sup_psi", "min_psi", "abp_load", "abp_load_plus", "mode")}


def solve_lma(dd, U, f, psi, mode="nondivergence", rtol=1e-10):
    """Solve U^ij w_ij = f, w = psi on the boundary; returns (w, LMAReport).

    U is a TensorField (its cofactor entries are used); f an interior-node
    array or ScalarField; psi a boundary sampler.
    """
    if isinstance(f, ScalarField):
        f = f.interior
    f = np.asarray(f, float)
    cof_lo = U.cof_min_eig()
    k = int(np.argmin(cof_lo))
    report = LMAReport(min_eig_U=float(cof_lo[k]), mode=mode)
    if cof_lo[k] <= 0:
        raise EllipticityError(
            f"cofactor matrix not positive definite at node {k} "
            f"(x = {dd.pts_int[k]}, min eig = {cof_lo[k]:g})", node=k)

    if mode == "nondivergence":
        A = dops.operator_matrix(dd, U.cof[:, 0], U.cof[:, 1], U.cof[:, 2])
    elif mode == "divergence":
        A = dops.divergence_operator_matrix(dd, U.cof)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    psi_b = dd.sample_boundary(psi)
    Aii = A[:, : dd.n_int].tocsc()
    rhs = f - A[:, dd.n_int:] @ psi_b
    lu = spla.splu(Aii)
    wi = lu.solve(rhs)
    wi += lu.solve(rhs - Aii @ wi)          # one refinement pass
    scale = 1.0 + float(np.max(np.abs(f)))
    res = float(np.max(np.abs(Aii @ wi - rhs)))
    report.achieved_residual = res / scale
    if res > 1e-9 * scale:
        raise ConvergenceError(
            f"linear solve stagnated: residual {res:g} > 1e-9 * (1 + ||f||)", report)

    # diagonal dominance of the assembled rows (cross terms can break it)
    Aabs = abs(A[:, : dd.n_int])
    diag = np.abs(Aii.diagonal())
    offsum = np.asarray(Aabs.sum(axis=1)).ravel() - diag + \
        np.asarray(abs(A[:, dd.n_int:]).sum(axis=1)).ravel()
    report.dominant_fraction = float(np.mean(diag >= offsum * (1.0 - 1e-12)))

    w = ScalarField.from_parts(dd, wi, psi_b)
    report.sup_w = float(np.max(w.values))
    report.min_w = float(np.min(w.values))
    report.sup_psi = float(np.max(psi_b))
    report.min_psi = float(np.min(psi_b))
    detU = U.cof[:, 0] * U.cof[:, 2] - U.cof[:, 1] ** 2
    dload = np.clip(detU, 1e-300, None) ** 0.5  # (det U)^(1/n) with n = 2
    report.abp_load = dops.lp_norm(dd, f / dload, 2)
    report.abp_load_plus = dops.lp_norm(dd, np.maximum(f, 0.0) / dload, 2)
    return w, report
