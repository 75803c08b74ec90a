"""Runtime monitors mirroring the a priori estimate structure.

The quantities tracked on a solved (or exact) pair (u, w):

  - L^1 mass of det D^2 u, sup |u|, the det range, the w range, sup |Du|
  - the energy J[u] = int G(det D^2 u) - int u f
  - the ABP bound with its explicit constant diam(Omega)/(n omega_n^(1/n)):
        sup w <= sup psi + C_abp ||f / d^((n-1)/n)||_{L^n},
    its f^+ counterpart bounding w from below, and its dual analogue for
    w* = G(d) - d G'(d) on the gradient image of the domain
  - an Aleksandrov monitor ||u|| <= ||phi|| + 2 diam (int det)^(1/n)
    (safe factor 2 replacing the dimensional constant)
  - boundary traces: u_nu, the tangential-second-difference cofactor entry
    U^nunu, the curvature term K u_nu^(n-1) and the remainder E, plus the
    residual of the flux identity U^ij (u - utilde)_j nu_i =
    U^nunu (u - utilde)_nu

None of the paper-style universal constants are asserted numerically; the
two explicit-constant inequalities and the safe-factor monitors are, with
a discretization tolerance proportional to h.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import discrete_ops as dops
from .discrete_ops import ScalarField
from .errors import DomainError
from .geometry import build_barrier
from .gfun import invert_w_many
from .local_fit import LocalPolyFit

__all__ = [
    "BoundLedger", "TraceTable", "functional_J", "bound_report",
    "boundary_traces", "barrier_check", "concavity_gap",
]

OMEGA_2 = np.pi            # unit-ball volume in the plane


@dataclass
class TraceTable:
    u_nu: np.ndarray
    utilde_nu: np.ndarray
    U_nunu: np.ndarray
    K_unu_pow: np.ndarray
    E: np.ndarray
    nunu_residual: np.ndarray

    def to_dict(self):
        return {
            "u_nu_range": [float(self.u_nu.min()), float(self.u_nu.max())],
            "U_nunu_range": [float(self.U_nunu.min()), float(self.U_nunu.max())],
            "E_max_abs": float(np.max(np.abs(self.E))),
            "nunu_residual_max": float(np.max(self.nunu_residual)),
        }


@dataclass
class BoundLedger:
    int_det: float
    sup_abs_u: float
    det_min: float
    det_max: float
    w_min: float
    w_max: float
    sup_abs_Du: float
    grad_argmax_depth: float
    J: float
    sup_psi: float
    min_psi: float
    abp_constant: float
    abp_upper_slack: float
    abp_lower_slack: float
    abp_dual_slack: float
    aleksandrov_slack: float
    tolerance: float
    violations: list = field(default_factory=list)
    traces: TraceTable = None

    def to_dict(self):
        d = {k: getattr(self, k) for k in (
            "int_det", "sup_abs_u", "det_min", "det_max", "w_min", "w_max",
            "sup_abs_Du", "grad_argmax_depth", "J", "sup_psi", "min_psi",
            "abp_constant", "abp_upper_slack", "abp_lower_slack",
            "abp_dual_slack", "aleksandrov_slack", "tolerance")}
        d["violations"] = list(self.violations)
        if self.traces is not None:
            d["traces"] = self.traces.to_dict()
        return d


def functional_J(u, f, G):
    """J[u] = int G(det D^2 u) dx - int u f dx by node quadrature."""
    dd = u.dd
    T = dops.differentiate(u)
    if np.any(T.det <= 0):
        k = int(np.argmin(T.det))
        raise DomainError(f"det D^2 u <= 0 at node {k} (x = {dd.pts_int[k]})")
    if isinstance(f, ScalarField):
        f = f.interior
    f = np.asarray(f, float)
    return dops.integrate(dd, G.g(T.det)) - dops.integrate(dd, u.interior * f)


def _cloud_diameter(pts):
    from scipy.spatial import ConvexHull

    try:
        hv = pts[ConvexHull(pts).vertices]
    except Exception:
        hv = pts
    return float(np.max(np.linalg.norm(hv[:, None, :] - hv[None, :, :], axis=2)))


def bound_report(u, w, f, prob, barrier=None):
    """Fill the diagnostic ledger and check the explicit-constant estimates."""
    dd, G = prob.dd, prob.G
    if isinstance(f, ScalarField):
        f = f.interior
    f = np.asarray(f, float)
    T = dops.differentiate(u)
    det = T.det
    if np.any(det <= 0):
        k = int(np.argmin(det))
        raise DomainError(f"det D^2 u <= 0 at node {k}; ledger needs a convex solve")
    psi_b = w.boundary
    grad_norm = np.linalg.norm(T.grad, axis=1)
    k_grad = int(np.argmax(grad_norm))

    diam = dd.domain.diam
    n = 2
    C_abp = diam / (n * OMEGA_2 ** (1.0 / n))
    tol = 5.0 * dd.h * (1.0 + float(np.max(np.abs(psi_b))) + float(np.max(np.abs(f))))

    root_d = np.sqrt(det)
    abp_term = C_abp * dops.lp_norm(dd, f / root_d, n)
    abp_term_plus = C_abp * dops.lp_norm(dd, np.maximum(f, 0.0) / root_d, n)
    sup_w = float(np.max(w.values))
    min_w = float(np.min(w.values))
    upper_slack = float(np.max(psi_b)) + abp_term - sup_w
    lower_slack = min_w - (float(np.min(psi_b)) - abp_term_plus)

    # dual ABP: w* on the gradient image, boundary values through (G')^{-1}(psi)
    wstar_int = G.g(det) - det * G.w(det)
    d_b = invert_w_many(G, psi_b)
    wstar_b = G.g(d_b) - d_b * G.w(d_b)
    diam_star = _cloud_diameter(T.grad)
    C_dual = diam_star / (n * OMEGA_2 ** (1.0 / n))
    dual_slack = float(np.max(wstar_b)) + C_dual * dops.lp_norm(dd, f, n) \
        - float(np.max(wstar_int))

    int_det = dops.integrate(dd, det)
    phi_b = u.boundary
    alek_slack = float(np.max(np.abs(phi_b))) + 2.0 * diam * int_det ** 0.5 \
        - float(np.max(np.abs(u.values)))

    if barrier is None:
        barrier = build_barrier(dd, prob.phi, side="convex")
    traces = boundary_traces(u, dd, barrier)

    ledger = BoundLedger(
        int_det=int_det,
        sup_abs_u=float(np.max(np.abs(u.values))),
        det_min=float(det.min()), det_max=float(det.max()),
        w_min=min_w, w_max=sup_w,
        sup_abs_Du=float(grad_norm[k_grad]),
        grad_argmax_depth=float(dd.depth[k_grad]),
        J=functional_J(u, f, G),
        sup_psi=float(np.max(psi_b)), min_psi=float(np.min(psi_b)),
        abp_constant=C_abp,
        abp_upper_slack=upper_slack,
        abp_lower_slack=lower_slack,
        abp_dual_slack=dual_slack,
        aleksandrov_slack=alek_slack,
        tolerance=tol,
        traces=traces,
    )
    for name, slack in (("abp_upper", upper_slack), ("abp_lower", lower_slack),
                        ("aleksandrov", alek_slack)):
        if slack < -tol:
            ledger.violations.append(
                f"{name} estimate violated by {-slack:g} (tolerance {tol:g})")
    return ledger


def boundary_traces(u, dd, barrier):
    """Per boundary node: u_nu, utilde_nu, U^nunu, K u_nu^(n-1), E, and the
    residual of the flux identity against the barrier."""
    fit_u = LocalPolyFit(dd.pts_all, u.values, degree=2, h=dd.h)
    fit_t = LocalPolyFit(dd.pts_all, barrier.values_tilde, degree=2, h=dd.h)
    dom = dd.domain
    nb = dd.n_bnd
    u_nu = np.empty(nb)
    ut_nu = np.empty(nb)
    U_nunu = np.empty(nb)
    resid = np.empty(nb)

    dt = 1e-4
    a, b = dom.a, dom.b
    phi = barrier.phi             # u restricted to the boundary equals phi
    for k in range(nb):
        pb = dd.pts_bnd[k]
        nu = dd.bnd_nu[k]
        _, gu, Hu = fit_u.fit_at(pb)
        _, gt, _ = fit_t.fit_at(pb)
        u_nu[k] = gu @ nu
        ut_nu[k] = gt @ nu

        # second arclength derivative of the boundary values of u
        t = dd.bnd_t[k]
        gp = np.array([-a * np.sin(t), b * np.cos(t)])
        gpp = np.array([-a * np.cos(t), -b * np.sin(t)])
        sp = np.linalg.norm(gp)
        spp = (gp @ gpp) / sp
        Fv = [float(phi(a * np.cos(t + s), b * np.sin(t + s))) for s in (-dt, 0.0, dt)]
        Ft = (Fv[2] - Fv[0]) / (2 * dt)
        Ftt = (Fv[2] - 2 * Fv[1] + Fv[0]) / dt ** 2
        F_ss = (Ftt * sp - Ft * spp) / sp ** 3
        U_nunu[k] = F_ss + dd.bnd_K[k] * u_nu[k]

        U_fit = np.array([[Hu[1, 1], -Hu[0, 1]], [-Hu[0, 1], Hu[0, 0]]])
        lhs = nu @ (U_fit @ (gu - gt))
        rhs = U_nunu[k] * (u_nu[k] - ut_nu[k])
        resid[k] = abs(lhs - rhs)

    K_unu = dd.bnd_K * u_nu            # K u_nu^(n-1) with n = 2
    return TraceTable(
        u_nu=u_nu, utilde_nu=ut_nu, U_nunu=U_nunu,
        K_unu_pow=K_unu, E=U_nunu - K_unu, nunu_residual=resid,
    )


@dataclass
class BarrierCheckResult:
    status: str                   # "pass" | "fail" | "inconclusive"
    mu: float
    worst_node: int
    worst_gap: float


def barrier_check(u, barrier, dd, delta=None, tol=None, mu_cap=1e8):
    """Verify u >= phi + mu(e^rho - 1) - tol on the boundary band.

    mu comes from a doubling search until det D^2 v dominates the discrete
    determinant of u on the band core and v <= u on the band's inner edge;
    exhaustion reports inconclusive. The core excludes nodes within 2h of
    either band interface: one-sided determinants there see stencil
    crossings, and for fields with slope discontinuities those spikes would
    inflate mu until any violation is masked. The final pointwise
    verification of u >= v - tol runs on the whole band.
    """
    h = dd.h
    delta = 5.0 * h if delta is None else delta
    if delta < 2.0 * h:
        raise DomainError("band width delta must be at least 2h")
    if tol is None:
        tol = 1e-8 * (1.0 + float(np.max(np.abs(u.values))))
    band = dd.depth <= delta
    edge = band & (dd.depth >= delta - h)
    if not np.any(edge):
        edge = band
    core = band & (dd.depth >= 2.0 * h) & (dd.depth <= delta - 2.0 * h)
    if not np.any(core):
        core = band
    T_u = dops.differentiate(u)
    det_target = float(np.max(T_u.det[core]))

    rho_all = dd.sample(lambda x, y: dd.domain.rho(x, y))
    phi_all = np.empty(dd.n_total)
    phi_all[dd.n_int:] = u.boundary
    phi_all[: dd.n_int] = barrier.phi(dd.pts_int[:, 0], dd.pts_int[:, 1])
    base = np.exp(rho_all) - 1.0

    mu = max(barrier.mu, 1.0)
    while mu <= mu_cap:
        v = phi_all + mu * base
        T_v = dops.differentiate(ScalarField(dd, v))
        dets_ok = np.all(T_v.det[band] >= det_target)
        edge_ok = np.all(v[: dd.n_int][edge] <= u.interior[edge])
        if dets_ok and edge_ok:
            gap = u.interior[band] - v[: dd.n_int][band]
            k = int(np.argmin(gap))
            nodes = np.nonzero(band)[0]
            if gap[k] >= -tol:
                return BarrierCheckResult("pass", mu, int(nodes[k]), float(gap[k]))
            return BarrierCheckResult("fail", mu, int(nodes[k]), float(gap[k]))
        mu *= 2.0
    return BarrierCheckResult("inconclusive", mu, -1, np.nan)


def concavity_gap(A, B, G):
    """G'(det B) cof(B):(A-B) - [G(det A) - G(det B)] for SPD 2x2 pairs.

    Nonnegative whenever G satisfies A1; supports batched (N, 2, 2) input.
    """
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    single = A.ndim == 2
    A = A.reshape(-1, 2, 2)
    B = B.reshape(-1, 2, 2)
    detA = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    detB = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    for M, dM in ((A, detA), (B, detB)):
        if np.any(dM <= 0) or np.any(M[:, 0, 0] <= 0) or np.any(np.abs(M[:, 0, 1] - M[:, 1, 0]) > 1e-12):
            raise DomainError("inputs must be symmetric positive definite")
    rep = None
    try:
        from .gfun import check_conditions

        rep = check_conditions(G)
    except Exception:
        pass
    if rep is not None and rep.a1.passed is False:
        raise DomainError("G does not satisfy A1; the gap has no sign")
    cofB = np.empty_like(B)
    cofB[:, 0, 0] = B[:, 1, 1]
    cofB[:, 1, 1] = B[:, 0, 0]
    cofB[:, 0, 1] = -B[:, 0, 1]
    cofB[:, 1, 0] = -B[:, 1, 0]
    pairing = np.einsum("nij,nij->n", cofB, A - B)
    gap = G.w(detB) * pairing - (G.g(detA) - G.g(detB))
    return float(gap[0]) if single else gap
