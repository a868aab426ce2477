"""Scaled cumulant Lambda(theta) = nu (E[exp(theta S)] - 1), its Legendre
transform, the tilt map x -> theta_x, and the path and finite-dimensional
rate functionals built from it.

All rate values are extended reals: divergence is ``math.inf``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .distributions import BorelLaw, ClusterSizeLaw, DomainError

THETA_XTOL = 1e-12
SMALL_X = 1e-8
_BOUNDARY_GAP = 1e-12
_GRID_FLOOR = -50.0
_BIG = 1e300


@dataclass(frozen=True)
class ScalarRate:
    nu: float
    law: ClusterSizeLaw

    def __post_init__(self):
        if not self.nu > 0:
            raise DomainError("immigrant intensity must be positive")

    @property
    def mean(self) -> float:
        """The zero of the rate function, nu E[S]."""
        return self.nu * self.law.mean

    def cgf(self, theta: float) -> float:
        m = self.law.mgf(theta)
        return math.inf if math.isinf(m) else self.nu * (m - 1.0)

    def cgf_derivative(self, theta: float) -> float:
        return self.nu * self.law.mgf_derivative(theta)

    def tilt(self, x: float) -> float:
        theta, _ = _solve_tilt(self, x)
        return theta

    def legendre(self, x: float) -> float:
        return legendre(self, x)


def cgf(rate: ScalarRate, theta: float) -> float:
    """Lambda(theta); +inf outside the effective domain."""
    return rate.cgf(theta)


def _solve_tilt(rate: ScalarRate, x: float) -> tuple[float, bool]:
    """Root of Lambda'(theta) = x; the flag is True when the root would lie
    past the domain supremum and theta0 itself is returned."""
    if not x > 0:
        raise DomainError("the tilt is defined for x > 0 only")
    if x == rate.mean:
        return 0.0, False
    target = x / rate.nu
    law = rate.law

    def g(theta):
        d = law.mgf_derivative(theta)
        return min(d, _BIG) - target

    theta0, closed = law.domain_sup()
    if math.isfinite(theta0):
        hi = theta0 - _BOUNDARY_GAP
        if g(hi) < 0:
            return theta0, True
    else:
        hi = 1.0
        while g(hi) <= 0:
            hi *= 2.0
    lo = min(hi, 0.0) - 1.0
    while g(lo) >= 0:
        lo = 2.0 * lo - 1.0
    return brentq(g, lo, hi, xtol=THETA_XTOL, maxiter=500), False


def tilt(rate: ScalarRate, x: float) -> float:
    """theta_x: the unique theta below the domain supremum with Lambda'(theta) = x."""
    return rate.tilt(x)


def legendre(rate: ScalarRate, x: float) -> float:
    """Lambda*(x) = sup_theta (theta x - Lambda(theta)), by root-finding on the tilt."""
    x = float(x)
    if x < 0:
        return math.inf
    if x == 0:
        return float(rate.nu)
    if x == rate.mean:
        return 0.0
    if x < SMALL_X:
        if isinstance(rate.law, BorelLaw):
            return hawkes_rate(rate.nu, rate.law.mu, x)
        theta0, _ = rate.law.domain_sup()
        grid = np.linspace(_GRID_FLOOR, min(theta0, 0.0), 5001)
        return max(th * x - rate.cgf(th) for th in grid)
    theta, boundary = _solve_tilt(rate, x)
    return theta * x - rate.cgf(theta)


def hawkes_tilt(nu, mu, x):
    """Closed-form theta_x for Borel cluster sizes: the root of
    E[exp(theta S)] = x / (nu + mu x)."""
    x = np.asarray(x, dtype=float)
    phi = x / (nu + mu * x)
    with np.errstate(divide="ignore"):
        out = np.log(phi) - mu * (phi - 1.0)
    return float(out) if out.ndim == 0 else out


def hawkes_rate(nu, mu, x):
    """Closed-form Hawkes rate: x theta_x + nu - nu x / (nu + mu x) for x > 0,
    nu at 0 and +inf for negative x. Vectorised over ``x``."""
    if not nu > 0:
        raise DomainError("immigrant intensity must be positive")
    if not 0 < mu < 1:
        raise DomainError("branching mean must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    pos = np.where(x > 0, x, 1.0)
    val = pos * hawkes_tilt(nu, mu, pos) + nu - nu * pos / (nu + mu * pos)
    out = np.where(x > 0, val, np.where(x == 0, float(nu), math.inf))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PiecewiseLinearPath:
    """Continuous path through (breakpoints[j], values[j]); starts at (0, 0), ends at s = 1."""

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        s = np.asarray(self.breakpoints, dtype=float)
        x = np.asarray(self.values, dtype=float)
        if s.ndim != 1 or s.shape != x.shape or s.size < 2:
            raise ValueError("need matching breakpoints and values, at least two of each")
        if s[0] != 0.0 or s[-1] != 1.0 or np.any(np.diff(s) <= 0):
            raise ValueError("breakpoints must increase strictly from 0 to 1")
        if x[0] != 0.0:
            raise ValueError("paths start at value 0")
        object.__setattr__(self, "breakpoints", tuple(map(float, s)))
        object.__setattr__(self, "values", tuple(map(float, x)))

    @classmethod
    def linear(cls, slope: float) -> "PiecewiseLinearPath":
        return cls((0.0, 1.0), (0.0, float(slope)))

    def __call__(self, s):
        return np.interp(s, self.breakpoints, self.values)


def _increment_sum(rate: ScalarRate, ds, dx) -> float:
    total = 0.0
    for a, b in zip(ds, dx):
        if a == 0.0:
            term = 0.0 if b == 0.0 else math.inf
        else:
            term = a * legendre(rate, b / a)
        total += term
        if math.isinf(total):
            return math.inf
    return total


def path_rate(rate: ScalarRate, f: PiecewiseLinearPath) -> float:
    """J(f) = integral of Lambda*(f'(s)) over [0, 1] for a piecewise-linear path."""
    s = np.asarray(f.breakpoints)
    x = np.asarray(f.values)
    return _increment_sum(rate, np.diff(s).tolist(), np.diff(x).tolist())


def finite_dim_rate(rate: ScalarRate, times, values) -> float:
    """sum_j (t_j - t_{j-1}) Lambda*((x_j - x_{j-1}) / (t_j - t_{j-1})), with t_0 = x_0 = 0."""
    t = np.asarray(times, dtype=float)
    x = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.shape != x.shape or t.size == 0:
        raise ValueError("need matching, non-empty times and values")
    if t[0] < 0 or t[-1] > 1 or np.any(np.diff(t) <= 0):
        raise ValueError("times must increase strictly within [0, 1]")
    t = np.concatenate([[0.0], t])
    x = np.concatenate([[0.0], x])
    return _increment_sum(rate, np.diff(t).tolist(), np.diff(x).tolist())


def interpolant(rate: ScalarRate, times, values) -> PiecewiseLinearPath:
    """Piecewise-linear path through (t_j, x_j); continued at the mean slope after t_n."""
    t = [0.0] + [float(v) for v in times]
    x = [0.0] + [float(v) for v in values]
    if t[1] == 0.0:
        t, x = t[1:], x[1:]
    if t[-1] < 1.0:
        x.append(x[-1] + rate.mean * (1.0 - t[-1]))
        t.append(1.0)
    return PiecewiseLinearPath(tuple(t), tuple(x))
