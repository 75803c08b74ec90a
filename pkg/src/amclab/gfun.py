"""Strictly concave potentials G and their structural conditions.

The operator under study couples a convex potential u with w = G'(det D^2 u),
where G: (0, inf) -> R is smooth, strictly increasing and strictly concave.
Built-in families:

    power    G(d) = (d^theta - 1)/theta,  theta < 1/n, theta != 0
    log      G(d) = log d                  (Abreu case, theta -> 0 limit)
    loglog   G(d) = log d / log log(d + exp(exp(4n)))
    tabulated  monotone-cubic interpolation of sorted (d, G) samples

The structural conditions checked by `check_conditions`:

    A1:  w'(d) + (1 - 1/n) w(d)/d <= 0          (pointwise)
    A2:  d w(d) >= c > 0 for all d >= 1         (limit as d -> inf)
    A3:  d^(1-1/n) w(d) -> inf as d -> 0
    B2:  G(d) - d G'(d) -> inf as d -> inf      (coercivity of the dual w*)

Closed-form verdicts are used for the built-in kinds; the tabulated kind
falls back to a three-point trend test on log-spaced horizons and reports
"inconclusive" when the trend does not settle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import DomainError, RangeError

__all__ = [
    "GFunction",
    "EvalBundle",
    "CheckResult",
    "ConditionReport",
    "eval_bundle",
    "invert_w",
    "check_conditions",
]


@dataclass(frozen=True)
class EvalBundle:
    G: float
    w: float
    wp: float
    wstar: float


class GFunction:
    """Concave potential with derived quantities w = G', w' = G'', w* = G - dG'."""

    def __init__(self, kind, n, theta=None, table=None):
        if n < 2 or int(n) != n:
            raise DomainError(f"dimension n must be an integer >= 2, got {n}")
        self.kind = kind
        self.n = int(n)
        self.theta = theta
        self._pchip = None
        self._table = None
        if kind == "power":
            if theta is None or theta == 0.0:
                raise DomainError("power kind needs theta != 0 (use kind='log' for theta = 0)")
            if theta >= 1.0 / n:
                raise DomainError(f"power kind requires theta < 1/n = {1.0/n}, got {theta}")
        elif kind == "log":
            self.theta = 0.0
        elif kind == "loglog":
            # shift log(E) = e^{4n}; E itself overflows, all arithmetic stays in log domain
            self._logE = float(np.exp(4.0 * self.n))
        elif kind == "tabulated":
            d, g = np.asarray(table[0], float), np.asarray(table[1], float)
            if d.ndim != 1 or d.shape != g.shape or d.size < 4:
                raise DomainError("tabulated kind needs >= 4 aligned (d, G) samples")
            if np.any(d <= 0) or np.any(np.diff(d) <= 0):
                raise DomainError("tabulated d samples must be positive and strictly increasing")
            slopes = np.diff(g) / np.diff(d)
            if np.any(slopes <= 0):
                raise DomainError("tabulated G must be strictly increasing")
            if np.any(np.diff(slopes) >= 0):
                raise DomainError("tabulated G must be strictly concave (decreasing slopes)")
            self._table = (d, g)
            self._pchip = PchipInterpolator(d, g, extrapolate=False)
            self._pchip_d1 = self._pchip.derivative(1)
            self._pchip_d2 = self._pchip.derivative(2)
        else:
            raise DomainError(f"unknown G kind {kind!r}")

    # -- constructors ------------------------------------------------------

    @classmethod
    def power(cls, theta, n):
        return cls("power", n, theta=theta)

    @classmethod
    def log(cls, n):
        return cls("log", n)

    @classmethod
    def loglog(cls, n):
        return cls("loglog", n)

    @classmethod
    def tabulated(cls, d, g, n):
        return cls("tabulated", n, table=(d, g))

    # -- pointwise evaluation ---------------------------------------------

    def _check_domain(self, d):
        d = np.asarray(d, float)
        if np.any(~np.isfinite(d)) or np.any(d <= 0.0):
            raise DomainError("G is only defined for d > 0")
        if self.kind == "tabulated":
            lo, hi = self._table[0][0], self._table[0][-1]
            if np.any(d < lo) or np.any(d > hi):
                raise RangeError(
                    f"tabulated G covers [{lo:g}, {hi:g}]; extrapolation refused", lo, hi
                )
        return d

    def g(self, d):
        d = self._check_domain(d)
        if self.kind == "power":
            return (d ** self.theta - 1.0) / self.theta
        if self.kind == "log":
            return np.log(d)
        if self.kind == "loglog":
            L2 = self._loglog_L2(d)
            return np.log(d) / L2
        return self._pchip(d)

    def w(self, d):
        d = self._check_domain(d)
        if self.kind == "power":
            return d ** (self.theta - 1.0)
        if self.kind == "log":
            return 1.0 / d
        if self.kind == "loglog":
            L1, L2 = self._loglog_L1L2(d)
            # full derivative; the exp(-L1) terms underflow to 0 for any float d
            dL2 = np.exp(-L1) / L1
            return 1.0 / (d * L2) - np.log(d) * dL2 / L2 ** 2
        return self._pchip_d1(d)

    def wp(self, d):
        d = self._check_domain(d)
        if self.kind == "power":
            return (self.theta - 1.0) * d ** (self.theta - 2.0)
        if self.kind == "log":
            return -1.0 / d ** 2
        if self.kind == "loglog":
            L1, L2 = self._loglog_L1L2(d)
            dL1 = np.exp(-L1)
            dL2 = dL1 / L1
            d2L2 = -(dL1 ** 2) * (L1 + 1.0) / L1 ** 2
            ld = np.log(d)
            return (
                -1.0 / (d ** 2 * L2)
                - 2.0 * dL2 / (d * L2 ** 2)
                - ld * (d2L2 / L2 ** 2 - 2.0 * dL2 ** 2 / L2 ** 3)
            )
        return self._pchip_d2(d)

    def wstar(self, d):
        """Dual potential value w* = G(d) - d G'(d)."""
        d = self._check_domain(d)
        return self.g(d) - d * self.w(d)

    def _loglog_L1L2(self, d):
        L1 = np.logaddexp(np.log(d), self._logE)
        return L1, np.log(L1)

    def _loglog_L2(self, d):
        return self._loglog_L2_from(np.log(d))

    def _loglog_L2_from(self, logd):
        return np.log(np.logaddexp(logd, self._logE))

    # -- inverse of w ------------------------------------------------------

    def w_range(self):
        """Attainable (inf, sup) of w over the evaluable domain."""
        if self.kind in ("power", "log"):
            return 0.0, np.inf
        if self.kind == "loglog":
            return 0.0, np.inf
        d = self._table[0]
        vals = self._pchip_d1(d)
        return float(vals.min()), float(vals.max())

    def invert_w(self, s):
        """Solve w(d) = s for d > 0 (closed form where available)."""
        s = float(s)
        if not np.isfinite(s) or s <= 0.0:
            raise DomainError("w only takes positive values; need s > 0")
        if self.kind == "power":
            return s ** (1.0 / (self.theta - 1.0))
        if self.kind == "log":
            return 1.0 / s
        if self.kind == "loglog":
            # w is strictly decreasing; bracket in log d and refine by Newton
            f = lambda t: self.w(np.exp(t)) - s
            lo, hi = -700.0, 700.0
            if f(lo) < 0 or f(hi) > 0:
                raise RangeError("s outside the attainable range of w", 0.0, np.inf)
            t = brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)
            d = float(np.exp(t))
            for _ in range(3):
                d -= (self.w(d) - s) / self.wp(d)
            return d
        lo, hi = self.w_range()
        dlo, dhi = self._table[0][0], self._table[0][-1]
        if s < lo or s > hi:
            raise RangeError(
                f"s = {s:g} outside attained w range [{lo:g}, {hi:g}]", lo, hi
            )
        return float(brentq(lambda d: float(self._pchip_d1(d)) - s, dlo, dhi,
                            xtol=1e-15, rtol=8.9e-16))

    def __repr__(self):
        if self.kind == "power":
            return f"GFunction.power(theta={self.theta}, n={self.n})"
        return f"GFunction.{self.kind}(n={self.n})"


# -- operations -------------------------------------------------------------


def eval_bundle(G, d):
    """Evaluate {G, w, w', w*} at a single d > 0; w* computed as G - d*w."""
    gd = float(G.g(d))
    wd = float(G.w(d))
    return EvalBundle(G=gd, w=wd, wp=float(G.wp(d)), wstar=gd - float(d) * wd)


def invert_w(G, s):
    d = G.invert_w(s)
    if abs(G.w(d) - s) > 1e-12 * abs(s):
        raise RangeError(f"inverse of w did not verify at s = {s:g}")
    return d


def invert_w_many(G, s):
    """Vectorized (G')^{-1}; closed forms for power/log, Newton for loglog."""
    s = np.asarray(s, float)
    if np.any(s <= 0):
        raise DomainError("w only takes positive values; need s > 0")
    if G.kind == "power":
        return s ** (1.0 / (G.theta - 1.0))
    if G.kind == "log":
        return 1.0 / s
    if G.kind == "loglog":
        d = 1.0 / (4.0 * G.n * s)
        for _ in range(4):
            d = d - (G.w(d) - s) / G.wp(d)
        return d
    return np.array([G.invert_w(v) for v in np.atleast_1d(s)])


@dataclass
class CheckResult:
    passed: Optional[bool]          # None = inconclusive
    witness_d: float
    witness_value: float
    note: str = ""

    @property
    def verdict(self):
        if self.passed is None:
            return "INCONCLUSIVE"
        return "PASS" if self.passed else "FAIL"


@dataclass
class ConditionReport:
    a1: CheckResult
    a2: CheckResult
    a3: CheckResult
    b2: CheckResult

    def rows(self):
        return [("A1", self.a1), ("A2", self.a2), ("A3", self.a3), ("B2", self.b2)]

    def summary(self):
        lines = []
        for name, r in self.rows():
            lines.append(
                f"{name}: {r.verdict}  (d = {r.witness_d:.6g}, value = {r.witness_value:.6g})"
                + (f"  [{r.note}]" if r.note else "")
            )
        return "\n".join(lines)


def _trend_verdict(q, to_infinity):
    """Three-point trend test: does q1, q2, q3 (at growing horizons) head to
    infinity (to_infinity=True) or stay bounded away from 0 (False, A2-style)?

    Returns (passed|None, limit_estimate)."""
    q1, q2, q3 = q
    d1, d2 = q2 - q1, q3 - q2
    if to_infinity:
        if d2 > 0 and d2 >= 0.5 * d1 and q3 > q2:
            return True, np.inf
        if d1 != d2:
            aitken = q3 - d2 ** 2 / (d2 - d1)
            if abs(d2) < 0.95 * abs(d1):
                return False, aitken
        return None, q3
    # bounded-below test for d*w
    if q3 <= 0:
        return False, q3
    if q3 >= q2 * (1.0 - 1e-9):
        return True, q3
    if d1 != d2 and abs(d2) < 0.95 * abs(d1):
        aitken = q3 - d2 ** 2 / (d2 - d1)
        if aitken > 1e-12 * q1:
            return True, aitken
        return False, max(aitken, 0.0)
    return None, q3


def check_conditions(G, d_grid=None, limit_horizon=1e8):
    """Produce a ConditionReport for A1 (pointwise), A2, A3 and B2 (limits).

    A1 is checked pointwise on d_grid; the limits use closed-form analysis for
    the built-in kinds and a three-point log-spaced trend test for tabulated
    data. Uncertain limits are flagged inconclusive, never passed.
    """
    if d_grid is None:
        d_grid = np.geomspace(1e-6, 1e6, 241)
    d_grid = np.asarray(d_grid, float)
    if np.any(d_grid <= 0):
        raise DomainError("d_grid must be positive")
    if limit_horizon < d_grid.max():
        raise DomainError("limit_horizon must reach beyond max(d_grid)")
    n = G.n
    ex = 1.0 - 1.0 / n

    if G.kind == "tabulated":
        lo, hi = G._table[0][0], G._table[0][-1]
        grid = d_grid[(d_grid >= lo) & (d_grid <= hi)]
        if grid.size == 0:
            grid = np.geomspace(lo, hi, 64)
    else:
        grid = d_grid

    # A1 pointwise
    q = np.array([G.wp(d) + ex * G.w(d) / d for d in grid])
    scale = max(1.0, float(np.max(np.abs(q))))
    i = int(np.argmax(q))
    a1 = CheckResult(bool(q[i] <= 1e-12 * scale), float(grid[i]), float(q[i]))
    if G.kind == "tabulated" and d_grid.min() < lo:
        a1.note = "inconclusive below table range (no data as d -> 0)"

    H = limit_horizon
    if G.kind == "power":
        th = G.theta
        if th > 0:
            a2 = CheckResult(True, 1.0, 1.0, "closed form: d*w = d^theta >= 1 for d >= 1")
            b2 = CheckResult(True, H, float(G.wstar(H)), "closed form: w* ~ d^theta -> inf")
        else:
            a2 = CheckResult(False, H, float(H ** th), "closed form: d*w = d^theta -> 0")
            b2 = CheckResult(False, H, float(G.wstar(H)),
                             f"closed form: w* -> {-1.0/th:g} bounded")
        a3 = CheckResult(True, float(grid.min()), float(grid.min() ** (th - 1.0 / n)),
                         "closed form: d^(1-1/n)*w = d^(theta-1/n) -> inf")
    elif G.kind == "log":
        a2 = CheckResult(True, 1.0, 1.0, "closed form: d*w = 1")
        b2 = CheckResult(True, H, float(np.log(H) - 1.0), "closed form: w* = log d - 1 -> inf")
        a3 = CheckResult(True, float(grid.min()), float(grid.min() ** (-1.0 / n)),
                         "closed form: d^(1-1/n)/d = d^(-1/n) -> inf")
    elif G.kind == "loglog":
        a2 = CheckResult(False, H, float(H * G.w(H)),
                         "closed form: d*w ~ 1/loglog(d + shift) -> 0 as d -> inf")
        b2 = CheckResult(True, H, float(G.wstar(H)),
                         "closed form: w* ~ (log d - 1)/loglog -> inf")
        a3 = CheckResult(True, float(grid.min()),
                         float(grid.min() ** ex * G.w(grid.min())),
                         "closed form: d^(1-1/n)*w ~ d^(-1/n)/loglog -> inf")
    else:
        Ht = min(H, hi)
        hs = np.array([Ht ** (1.0 / 9.0), Ht ** (1.0 / 3.0), Ht])
        hs = np.clip(hs, lo, hi)
        dw = np.array([h * G.w(h) for h in hs])
        ok, lim = _trend_verdict(dw, to_infinity=False)
        note = "three-point trend on d*w toward the horizon"
        if Ht < H:
            note += " (capped at table max)"
        a2 = CheckResult(ok, float(hs[-1]), float(lim if np.isfinite(lim) else dw[-1]), note)
        ws = np.array([G.wstar(h) for h in hs])
        ok, lim = _trend_verdict(ws, to_infinity=True)
        b2 = CheckResult(ok, float(hs[-1]), float(ws[-1]), "three-point trend on w*")
        ls = np.array([lo * 1.0000001, lo * 8.0, lo * 64.0])[::-1]
        ls = np.clip(ls, lo, hi)
        a3q = np.array([l ** ex * G.w(l) for l in ls])
        ok, lim = _trend_verdict(a3q, to_infinity=True)
        a3 = CheckResult(ok, float(ls[-1]), float(a3q[-1]),
                         "three-point trend toward table min (no data below)")

    # attach the A2 constant c (used by the Remark-style lower bound on w*)
    if a2.passed:
        mask = grid >= 1.0
        if np.any(mask):
            c = float(min((d * G.w(d) for d in grid[mask])))
            a2.witness_value = min(a2.witness_value, c) if np.isfinite(a2.witness_value) else c
    return ConditionReport(a1=a1, a2=a2, a3=a3, b2=b2)
