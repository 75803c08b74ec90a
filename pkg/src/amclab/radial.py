"""Closed-form radial solutions u = r^alpha and the radial form of the operator.

For u = v(r) with v(r) = r^alpha, 1 < alpha < 2, in dimension n:

    det D^2 u = v'' (v'/r)^(n-1) = alpha^n (alpha - 1) r^((alpha-2) n)
    w = (det D^2 u)^(theta-1)  = [alpha^n (alpha-1)]^(theta-1) r^((alpha-2) n (theta-1))
    U^ij w_ij = [W'(v')^(n-1)]' / r^(n-1)

which produces the power laws

    W'(v')^(n-1) = C1 r^((alpha-2)(n theta - 1) + n - 2)
    f            = C2 r^((alpha-2)(n theta - 1) - 2)

The three parameter families (by the admissible range of theta):

    case i:    n/2 < p < n,   alpha = 1 + (n-p)/(2(3p-n)), theta = (n/p - 1)/(2n)
    case ii:   theta < -1/n,  alpha = 2n theta/(n theta - 1)   (f constant)
    case iii:  -1/n <= theta < 0, alpha = (4 - 5n theta)/(4(1 - n theta))

C1 and C2 are computed numerically at construction and validated at a second
radius; the fourth radial derivative scales like r^(alpha-4), which drives the
Sobolev blow-up profiles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import DomainError

__all__ = ["RadialSolution", "make_case", "radial_operator", "blowup_profile"]

RMIN = 1e-6


def _guard_r(r):
    r = np.asarray(r, float)
    if np.any(r < RMIN * (1.0 - 1e-9)):
        raise DomainError(f"radial samplers are guarded below r = {RMIN:g}")
    return r


@dataclass
class RadialSolution:
    n: int
    theta: float
    alpha: float
    case: str
    C1: float = field(init=False)
    C2: float = field(init=False)

    def __post_init__(self):
        n, th, al = self.n, self.theta, self.alpha
        if not (1.0 < al < 2.0):
            raise DomainError(f"need 1 < alpha < 2, got alpha = {al:g}")
        if not th < 1.0:
            raise DomainError(f"need theta < 1, got theta = {th:g}")
        self.det0 = al ** n * (al - 1.0)           # det D^2 u = det0 * r^((alpha-2)n)
        self.w0 = self.det0 ** (th - 1.0)
        self.e_det = (al - 2.0) * n
        self.e_w = (al - 2.0) * n * (th - 1.0)
        self.e_flux = (al - 2.0) * (n * th - 1.0) + n - 2.0
        self.e_f = (al - 2.0) * (n * th - 1.0) - 2.0
        self.C1 = self._fit_power(self._flux, self.e_flux, 0.5, 0.25)
        self.C2 = self._fit_power(self._f_by_diff, self.e_f, 0.5, 0.3, rtol=1e-6)

    # closed-form samplers ---------------------------------------------------

    def u(self, r):
        return _guard_r(r) ** self.alpha

    v = u

    def du(self, r):
        r = _guard_r(r)
        return self.alpha * r ** (self.alpha - 1.0)

    def det(self, r):
        return self.det0 * _guard_r(r) ** self.e_det

    def w(self, r):
        return self.w0 * _guard_r(r) ** self.e_w

    def f(self, r):
        return self.C2 * _guard_r(r) ** self.e_f

    def d4u(self, r):
        al = self.alpha
        return al * (al - 1.0) * (al - 2.0) * (al - 3.0) * _guard_r(r) ** (al - 4.0)

    # internals ---------------------------------------------------------------

    def _wprime(self, r):
        return self.w0 * self.e_w * _guard_r(r) ** (self.e_w - 1.0)

    def _flux(self, r):
        return self._wprime(r) * self.du(r) ** (self.n - 1)

    def _f_by_diff(self, r):
        # Richardson-extrapolated central difference of the flux
        h = 1e-4 * r
        d1 = (self._flux(r + h) - self._flux(r - h)) / (2 * h)
        d2 = (self._flux(r + h / 2) - self._flux(r - h / 2)) / h
        return (4.0 * d2 - d1) / 3.0 / r ** (self.n - 1)

    def _fit_power(self, fn, exponent, r0, r1, rtol=1e-8):
        c = fn(r0) / r0 ** exponent
        c_check = fn(r1) / r1 ** exponent
        if abs(c_check - c) > rtol * max(abs(c), abs(c_check)):
            raise DomainError(
                f"power-law fit for exponent {exponent:g} failed to validate: "
                f"{c:.12g} at r={r0:g} vs {c_check:.12g} at r={r1:g}"
            )
        return float(c)


def make_case(case, n, parameter):
    """Construct the closed-form solution family for case 'i', 'ii' or 'iii'.

    parameter is p for case i and theta for cases ii/iii; the admissible
    ranges are enforced with the violated inequality quoted in the error.
    """
    n = int(n)
    if n < 2:
        raise DomainError("need dimension n >= 2")
    if case == "i":
        p = float(parameter)
        if not (n / 2.0 < p < n):
            raise DomainError(f"case i requires n/2 < p < n, got p = {p:g} (n = {n})")
        alpha = 1.0 + (n - p) / (2.0 * (3.0 * p - n))
        theta = (n / p - 1.0) / (2.0 * n)
    elif case == "ii":
        theta = float(parameter)
        if not theta < -1.0 / n:
            raise DomainError(f"case ii requires theta < -1/n = {-1.0/n:g}, got {theta:g}")
        alpha = 2.0 * n * theta / (n * theta - 1.0)
    elif case == "iii":
        theta = float(parameter)
        if not (-1.0 / n <= theta < 0.0):
            raise DomainError(
                f"case iii requires -1/n <= theta < 0 with 1/n = {1.0/n:g}, got {theta:g}"
            )
        alpha = (4.0 - 5.0 * n * theta) / (4.0 * (1.0 - n * theta))
    else:
        raise DomainError(f"unknown case {case!r}; expected 'i', 'ii' or 'iii'")
    return RadialSolution(n=n, theta=theta, alpha=alpha, case=case)


def _d1(y, h):
    """Second-order first derivative on a uniform grid (one-sided at the ends)."""
    out = np.empty_like(y)
    out[1:-1] = (y[2:] - y[:-2]) / (2 * h)
    out[0] = (-3 * y[0] + 4 * y[1] - y[2]) / (2 * h)
    out[-1] = (3 * y[-1] - 4 * y[-2] + y[-3]) / (2 * h)
    return out


def _d2(y, h):
    out = np.empty_like(y)
    out[1:-1] = (y[2:] - 2 * y[1:-1] + y[:-2]) / h ** 2
    out[0] = (2 * y[0] - 5 * y[1] + 4 * y[2] - y[3]) / h ** 2
    out[-1] = (2 * y[-1] - 5 * y[-2] + 4 * y[-3] - y[-4]) / h ** 2
    return out


def radial_operator(v, W, n, r):
    """Discrete radial operator: f = [W'(v')^(n-1)]'/r^(n-1), det = v''(v'/r)^(n-1).

    v, W are samples on the strictly positive uniform grid r; returns (f, det).
    """
    r = np.asarray(r, float)
    v = np.asarray(v, float)
    W = np.asarray(W, float)
    if np.any(r <= 0):
        raise DomainError("radial grid must be strictly positive")
    dr = np.diff(r)
    h = dr[0]
    if not np.allclose(dr, h, rtol=1e-8):
        raise DomainError("radial grid must be uniformly spaced")
    vp = _d1(v, h)
    flux = _d1(W, h) * vp ** (n - 1)
    f = _d1(flux, h) / r ** (n - 1)
    det = _d2(v, h) * (vp / r) ** (n - 1)
    return f, det


def blowup_profile(sol, p, eps_seq):
    """Masses int_{eps<r<1} |v''''|^p r^(n-1) dr for decreasing eps values.

    Quadrature of the analytic fourth derivative of r^alpha; returns
    (masses, fitted log-log slope of mass vs eps).
    """
    eps_seq = np.asarray(eps_seq, float)
    if np.any(eps_seq < RMIN):
        raise DomainError(f"epsilon values must be >= {RMIN:g}")
    if np.any(np.diff(eps_seq) >= 0):
        raise DomainError("epsilon sequence must be strictly decreasing")
    c = abs(sol.alpha * (sol.alpha - 1.0) * (sol.alpha - 2.0) * (sol.alpha - 3.0))
    expo = p * (sol.alpha - 4.0) + sol.n - 1.0
    masses = np.array(
        [quad(lambda r: c ** p * r ** expo, e, 1.0, limit=200)[0] for e in eps_seq]
    )
    slope = float(np.polyfit(np.log(eps_seq), np.log(masses), 1)[0])
    return masses, slope
