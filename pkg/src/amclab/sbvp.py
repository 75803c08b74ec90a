"""Coupled solver for the second boundary value problem.

The fourth-order problem U^ij w_ij = f, w = G'(det D^2 u), u = phi and
w = psi on the boundary splits into a Monge-Ampere equation for u and a
linearized Monge-Ampere equation for w. The outer iteration alternates the
two solves with damping:

    w0 = harmonic extension of psi
    repeat: g = (G')^{-1}(w_k); u_k = solve_ma(g, phi);
            what = solve_lma(U(u_k), f, psi);
            w_{k+1} = (1 - lambda) w_k + lambda what

until max(r1, r2) <= tol (1 + ||f||_inf) with

    r1 = || U^ij w_ij - f ||_inf   over interior nodes >= 2h from the boundary
    r2 = || w - G'(det D^2 u) ||_inf

If the direct iteration diverges, a homotopy in f (f_t = t f, adaptive t
ladder) restarts it from the last convergent stage. Transient nonpositive
w values are clamped inside (G')^{-1} and flagged; a persistent nonpositive
what is reported as positivity breakdown, which is the expected failure
mode when the coercivity condition B2 fails and f > 0 is large.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from . import discrete_ops as dops
from .discrete_ops import ScalarField
from .errors import ConvergenceError, DomainError
from .gfun import check_conditions, invert_w_many
from .lma_solver import solve_lma
from .ma_solver import MAConfig, solve_ma

__all__ = ["SBVPProblem", "SolveReport", "PositivityBreakdown", "solve_sbvp", "residuals"]

W_CLAMP = 1e-10


class PositivityBreakdown(ConvergenceError):
    """w = G'(det D^2 u) lost positivity during the iteration."""


@dataclass
class SBVPProblem:
    G: object
    dd: object
    f: np.ndarray                 # interior values of the curvature datum
    phi: Callable
    psi: Callable
    p: float = 4.0                # reporting exponent, p > n

    def __post_init__(self):
        if isinstance(self.f, ScalarField):
            self.f = self.f.interior
        self.f = np.asarray(self.f, float)
        if self.f.shape != (self.dd.n_int,):
            raise DomainError("f must give one value per interior node")
        psi_b = self.dd.sample_boundary(self.psi)
        if psi_b.min() <= 0:
            raise DomainError(f"need min psi > 0 on the boundary, got {psi_b.min():g}")
        if self.p <= 2:
            raise DomainError("reporting exponent p must exceed the dimension n = 2")
        self.conditions = check_conditions(self.G)
        if self.conditions.a1.passed is False:
            raise DomainError("G violates A1; the functional is not concave")
        self.condition_warnings = [
            name for name, r in self.conditions.rows()[1:] if r.passed is not True
        ]

    @property
    def f_inf(self):
        return float(np.max(np.abs(self.f))) if self.f.size else 0.0


@dataclass
class SolveReport:
    outer_iterations: int = 0
    r1_history: list = field(default_factory=list)
    r2_history: list = field(default_factory=list)
    damping: float = 0.5
    continuation_steps: list = field(default_factory=list)
    clamp_events: int = 0
    positivity_breakdown: bool = False
    worst_node: int = -1
    success: bool = False
    tol: float = np.nan
    condition_warnings: list = field(default_factory=list)
    ledger: dict = field(default_factory=dict)
    note: str = ("outer fixed-point convergence is an empirical property of this "
                 "artifact, not a theorem of the underlying theory")

    def to_dict(self):
        return {
            "outer_iterations": self.outer_iterations,
            "r1_history": self.r1_history,
            "r2_history": self.r2_history,
            "damping": self.damping,
            "continuation_steps": self.continuation_steps,
            "clamp_events": self.clamp_events,
            "positivity_breakdown": self.positivity_breakdown,
            "worst_node": self.worst_node,
            "success": self.success,
            "tol": self.tol,
            "condition_warnings": self.condition_warnings,
            "ledger": self.ledger,
            "note": self.note,
        }


def residuals(u, w, prob, return_node=False, f=None):
    """(r1, r2) for fields on prob's grid; det <= 0 makes r2 infinite."""
    dd = prob.dd
    if f is None:
        f = prob.f
    T = dops.differentiate(u)
    mask = dd.depth_mask(2.0 * dd.h)
    r1 = float(np.max(np.abs(dops.apply_L(T, w)[mask] - f[mask])))
    bad = np.nonzero(T.det <= 0)[0]
    if bad.size:
        node = int(bad[np.argmin(T.det[bad])])
        r2, r2_node = np.inf, node
    else:
        diff = np.abs(w.interior - prob.G.w(T.det))
        r2_node = int(np.argmax(diff))
        r2 = float(diff[r2_node])
    if return_node:
        return r1, r2, r2_node
    return r1, r2


def _harmonic_extension(dd, psi):
    ones = np.ones(dd.n_int)
    A = dops.operator_matrix(dd, ones, np.zeros(dd.n_int), ones)
    psi_b = dd.sample_boundary(psi)
    wi = spla.spsolve(A[:, : dd.n_int].tocsc(), -A[:, dd.n_int:] @ psi_b)
    return ScalarField.from_parts(dd, wi, psi_b)


def _fixed_point(prob, f, tol_abs, max_outer, damping, report, w=None, u=None,
                 breakdown_patience=3):
    """Damped alternation at a fixed right side f; updates report in place."""
    dd, G = prob.dd, prob.G
    if w is None:
        w = _harmonic_extension(dd, prob.psi)
    ma_cfg = MAConfig(tol=max(5e-9, 0.01 * tol_abs))
    wmax = G.w_range()[1]
    hi = wmax if np.isfinite(wmax) else np.inf
    nonpos_streak = 0
    best_metric = np.inf

    low_clamps = 0
    for it in range(max_outer):
        wi = w.interior
        clamped = (wi < W_CLAMP) | (wi > hi)
        if np.any(clamped):
            report.clamp_events += int(np.sum(clamped))
            low_clamps += int(np.sum(wi < W_CLAMP))
            wi = np.clip(wi, W_CLAMP, hi)
        g = invert_w_many(G, wi)
        u, ma_rep = solve_ma(dd, g, prob.phi, ma_cfg, u0=u)
        T = dops.differentiate(u)
        what, _ = solve_lma(dd, T, f, prob.psi)
        if np.min(what.interior) <= 0.0:
            nonpos_streak += 1
            report.worst_node = int(np.argmin(what.interior))
            if nonpos_streak >= breakdown_patience:
                report.positivity_breakdown = True
                raise PositivityBreakdown(
                    f"w lost positivity at node {report.worst_node} "
                    f"(x = {dd.pts_int[report.worst_node]})", report)
        else:
            nonpos_streak = 0
        new_vals = w.values.copy()
        new_vals[: dd.n_int] = (1.0 - damping) * wi + damping * what.interior
        w = ScalarField(dd, new_vals)

        r1, r2 = residuals(u, w, prob, f=f)
        report.r1_history.append(r1)
        report.r2_history.append(r2)
        report.outer_iterations += 1
        metric = max(r1, r2)
        best_metric = min(best_metric, metric)
        if metric <= tol_abs:
            if np.min(w.interior) <= 0.0:
                report.positivity_breakdown = True
                raise PositivityBreakdown("converged to nonpositive w", report)
            return u, w
        if not np.isfinite(metric) or metric > 1e4 * (best_metric + 1.0):
            raise ConvergenceError(f"outer iteration diverged (residual {metric:g})", report)
    if low_clamps > 0 or nonpos_streak > 0:
        # w kept falling through the positivity floor; the cycle never settles
        report.positivity_breakdown = True
        raise PositivityBreakdown(
            f"w repeatedly lost positivity ({low_clamps} clamped evaluations) "
            f"without convergence in {max_outer} outer iterations", report)
    raise ConvergenceError(
        f"no convergence in {max_outer} outer iterations "
        f"(last residuals r1 = {report.r1_history[-1]:g}, r2 = {report.r2_history[-1]:g})",
        report)


def solve_sbvp(prob, tol=1e-6, max_outer=60, damping=0.5, continuation=True):
    """Solve the coupled problem; returns (u, w, SolveReport).

    On divergence of the direct iteration, continuation in f is attempted:
    f_t = t f with an adaptive ladder t: 0 -> 1 warm-starting each stage.
    """
    report = SolveReport(damping=damping, tol=tol,
                         condition_warnings=prob.condition_warnings)
    tol_abs = tol * (1.0 + prob.f_inf)
    try:
        u, w = _fixed_point(prob, prob.f, tol_abs, max_outer, damping, report)
    except PositivityBreakdown:
        raise
    except ConvergenceError as exc:
        if not continuation:
            raise
        report = SolveReport(damping=damping, tol=tol,
                             condition_warnings=prob.condition_warnings)
        u, w = _continuation_solve(prob, tol_abs, max_outer, damping, report)
    report.success = True
    _fill_ledger(prob, u, w, report)
    return u, w, report


def _continuation_solve(prob, tol_abs, max_outer, damping, report):
    t, step = 0.0, 0.25
    u = w = None
    while True:
        t_try = min(1.0, t + step)
        stage = SolveReport(damping=damping)
        try:
            u_try, w_try = _fixed_point(
                prob, t_try * prob.f, tol_abs, max_outer, damping, stage,
                w=w, u=u)
        except PositivityBreakdown as exc:
            report.continuation_steps.append({"t": t_try, "ok": False, "breakdown": True})
            report.positivity_breakdown = True
            report.worst_node = stage.worst_node
            if step <= 1.0 / 64.0:
                raise PositivityBreakdown(str(exc), report)
            step *= 0.5
            continue
        except ConvergenceError:
            report.continuation_steps.append({"t": t_try, "ok": False, "breakdown": False})
            if step <= 1.0 / 64.0:
                raise ConvergenceError(
                    f"continuation stalled at t = {t:g} (step {step:g})", report)
            step *= 0.5
            continue
        u, w, t = u_try, w_try, t_try
        report.continuation_steps.append({"t": t, "ok": True, "breakdown": False})
        report.r1_history += stage.r1_history
        report.r2_history += stage.r2_history
        report.outer_iterations += stage.outer_iterations
        report.clamp_events += stage.clamp_events
        if t >= 1.0:
            return u, w
        step = min(step * 1.5, 1.0 - t)


def _fill_ledger(prob, u, w, report):
    try:
        from . import diagnostics

        ledger = diagnostics.bound_report(u, w, prob.f, prob)
        report.ledger = ledger.to_dict()
    except Exception as exc:   # ledger is best effort; never mask a solve
        report.ledger = {"error": repr(exc)}
