"""Cluster-size laws: the Borel law of a Poisson(mu) Galton-Watson total
progeny, and explicit finite pmf tables.

Every law exposes its moment generating function ``E[exp(theta S)]``, the
derivative ``E[S exp(theta S)]`` and the supremum of the effective domain.
Divergent values are returned as ``math.inf``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

DEFAULT_SIZE_CAP = 10**7

_ROOT_TOL = 1e-13
_ROOT_MAXITER = 200


class DomainError(ValueError):
    """A parameter lies outside the domain where the law is defined."""


class ClusterSizeCapError(RuntimeError):
    """A simulated cluster grew past the configured size cap."""


def _check_mu(mu: float) -> float:
    mu = float(mu)
    if not 0.0 < mu < 1.0:
        raise DomainError(f"branching mean must lie in (0, 1), got {mu!r}")
    return mu


def borel_logpmf(mu, k):
    """Log of the Borel pmf; vectorised over ``k``."""
    mu = _check_mu(mu)
    k = np.asarray(k)
    if np.any(k < 1):
        raise DomainError("cluster sizes start at 1")
    kf = k.astype(float)
    return -kf * mu + (kf - 1.0) * np.log(kf * mu) - gammaln(kf + 1.0)


def borel_pmf(mu, k):
    """P(S = k) = exp(-k mu) (k mu)^(k-1) / k!, evaluated in log space."""
    out = np.exp(borel_logpmf(mu, k))
    return float(out) if np.ndim(out) == 0 else out


def _borel_log_mgf(mu: float, theta: float) -> float:
    # Solve u - mu (e^u - 1) = theta for u = log phi on (-inf, -log mu].
    # The left side is concave and increasing there, so Newton started at a
    # point with negative residual climbs monotonically to the smaller root.
    # A bisection bracket guards against rounding near the double root at
    # theta0 where convergence is only linear.
    theta0 = mu - 1.0 - math.log(mu)
    if theta > theta0:
        return math.inf
    hi = -math.log(mu)
    if theta == theta0:
        return hi
    lo = theta - mu
    u = lo
    for _ in range(_ROOT_MAXITER):
        eu = math.exp(u)
        g = u - mu * (eu - 1.0) - theta
        if g == 0.0:
            return u
        if g < 0.0:
            lo = u
        else:
            hi = u
        step = g / (1.0 - mu * eu)
        nxt = u - step
        if not lo <= nxt <= hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - u) <= _ROOT_TOL * max(1.0, abs(u)) or hi - lo <= _ROOT_TOL:
            return nxt
        u = nxt
    return u


class ClusterSizeLaw:
    """Common interface of the cluster-size laws (support in {1, 2, ...})."""

    def pmf(self, k):
        raise NotImplementedError

    def mgf(self, theta: float) -> float:
        raise NotImplementedError

    def mgf_derivative(self, theta: float) -> float:
        raise NotImplementedError

    def domain_sup(self) -> tuple[float, bool | None]:
        raise NotImplementedError

    @property
    def mean(self) -> float:
        return self.mgf_derivative(0.0)

    def sample(self, rng: np.random.Generator, size: int, cap: int = DEFAULT_SIZE_CAP) -> np.ndarray:
        raise NotImplementedError

    def tilted(self, theta: float) -> "ClusterSizeLaw":
        """The law with pmf ``exp(theta k) p_k / mgf(theta)``."""
        raise NotImplementedError


@dataclass(frozen=True)
class BorelLaw(ClusterSizeLaw):
    """Total progeny of a Galton-Watson tree with Poisson(mu) offspring."""

    mu: float

    def __post_init__(self):
        object.__setattr__(self, "mu", _check_mu(self.mu))

    @property
    def theta0(self) -> float:
        return self.mu - 1.0 - math.log(self.mu)

    def pmf(self, k):
        return borel_pmf(self.mu, k)

    def mgf(self, theta: float) -> float:
        theta = float(theta)
        if theta == self.theta0:
            return 1.0 / self.mu
        return math.exp(_borel_log_mgf(self.mu, theta))

    def mgf_derivative(self, theta: float) -> float:
        theta = float(theta)
        if theta >= self.theta0:
            return math.inf
        phi = self.mgf(theta)
        denom = 1.0 - self.mu * phi
        if denom <= 0.0:
            return math.inf
        return phi / denom

    def domain_sup(self):
        return self.theta0, True

    @property
    def mean(self) -> float:
        return 1.0 / (1.0 - self.mu)

    def sample(self, rng, size, cap=DEFAULT_SIZE_CAP):
        # Generation by generation: a frontier of n individuals has
        # Poisson(n mu) children in total.
        total = np.ones(size, dtype=np.int64)
        frontier = np.ones(size, dtype=np.int64)
        active = np.arange(size)
        while active.size:
            kids = rng.poisson(self.mu * frontier[active])
            total[active] += kids
            frontier[active] = kids
            if total[active].max(initial=0) > cap:
                raise ClusterSizeCapError(f"cluster exceeded {cap} points (mu={self.mu})")
            active = active[kids > 0]
        return total

    def tilted(self, theta):
        # exp(theta k) p_k / phi(theta) is again Borel, with mean offspring
        # mu * phi(theta), because phi = exp(theta) exp(mu (phi - 1)).
        if theta >= self.theta0:
            raise DomainError("tilting requires theta below the domain supremum")
        return BorelLaw(self.mu * self.mgf(theta))


@dataclass(frozen=True)
class TablePmf(ClusterSizeLaw):
    """Explicit pmf over k = 1..kmax; ``probabilities[i]`` is P(S = i + 1)."""

    probabilities: tuple[float, ...]
    _logp: np.ndarray = field(init=False, repr=False, compare=False)
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise DomainError("pmf table must be a non-empty 1-d sequence")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DomainError("pmf entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise DomainError(f"pmf table sums to {p.sum()!r}, not 1")
        p = p / p.sum()
        object.__setattr__(self, "probabilities", tuple(float(v) for v in p))
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "_logp", np.log(p))
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", cdf)

    @property
    def kmax(self) -> int:
        return len(self.probabilities)

    def pmf(self, k):
        k = np.asarray(k)
        if np.any(k < 1):
            raise DomainError("cluster sizes start at 1")
        p = np.asarray(self.probabilities)
        out = np.where(k <= self.kmax, p[np.clip(k, 1, self.kmax) - 1], 0.0)
        return float(out) if out.ndim == 0 else out

    def _logsum(self, theta, weight_log=None):
        ks = np.arange(1, self.kmax + 1, dtype=float)
        terms = self._logp + theta * ks
        if weight_log is not None:
            terms = terms + weight_log
        with np.errstate(over="ignore"):
            return float(np.exp(logsumexp(terms)))

    def mgf(self, theta):
        return self._logsum(float(theta))

    def mgf_derivative(self, theta):
        return self._logsum(float(theta), np.log(np.arange(1, self.kmax + 1)))

    def domain_sup(self):
        return math.inf, None

    def sample(self, rng, size, cap=DEFAULT_SIZE_CAP):
        u = rng.random(size)
        return np.searchsorted(self._cdf, u, side="right").astype(np.int64) + 1

    def tilted(self, theta):
        logw = self._logp + theta * np.arange(1, self.kmax + 1)
        return TablePmf(tuple(np.exp(logw - logsumexp(logw))))


def sample_cluster_size(law: ClusterSizeLaw, rng: np.random.Generator, cap: int = DEFAULT_SIZE_CAP) -> int:
    """Draw one cluster size.

    Borel laws grow an explicit Galton-Watson tree: individuals wait in a
    frontier queue, each one draws its Poisson(mu) children and enqueues them.
    """
    if isinstance(law, BorelLaw):
        queue = deque([0])
        total = 1
        while queue:
            queue.popleft()
            kids = int(rng.poisson(law.mu))
            total += kids
            if total > cap:
                raise ClusterSizeCapError(f"cluster exceeded {cap} points (mu={law.mu})")
            queue.extend([0] * kids)
        return total
    return int(law.sample(rng, 1, cap)[0])


def mgf(law: ClusterSizeLaw, theta: float) -> float:
    return law.mgf(theta)


def mgf_derivative(law: ClusterSizeLaw, theta: float) -> float:
    return law.mgf_derivative(theta)


def domain_sup(law: ClusterSizeLaw) -> tuple[float, bool | None]:
    """``(theta0, closed)``: sup of the effective domain and whether it is attained."""
    return law.domain_sup()
