"""Spatial Poisson cluster / spatial Hawkes processes in R^d, ball counts and
void-probability estimation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .distributions import DEFAULT_SIZE_CAP, BorelLaw, ClusterSizeLaw, DomainError
from .simulate import TemporalKernel, grow_clusters, _frozen
from ._stats import Estimate, proportion_estimate
from ._streams import PILOT, as_generator, generator, run_blocks

MARGIN_TOL = 1e-4
N_PILOT = 10_000


def omega_d(d: int, r: float) -> float:
    """Volume of the d-dimensional ball of radius r."""
    if d < 1 or r < 0:
        raise DomainError("need d >= 1 and r >= 0")
    if r == 0:
        return 0.0
    return math.exp(d * math.log(r) + 0.5 * d * math.log(math.pi) - gammaln(1 + 0.5 * d))


def _directions(rng, n, d):
    v = rng.standard_normal((n, d))
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    return v / norm


def uniform_in_ball(rng, n: int, d: int, radius: float) -> np.ndarray:
    """Uniform points in b(0, radius): radius U^(1/d) times a uniform direction."""
    u = rng.random(n)
    return radius * u[:, None] ** (1.0 / d) * _directions(rng, n, d)


class SpatialKernel:
    def sample(self, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Gaussian(SpatialKernel):
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("gaussian kernel needs sigma > 0")

    def sample(self, rng, n, d):
        return self.sigma * rng.standard_normal((n, d))


@dataclass(frozen=True)
class UniformBall(SpatialKernel):
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise DomainError("uniform-ball kernel needs rho > 0")

    def sample(self, rng, n, d):
        return uniform_in_ball(rng, n, d, self.rho)


@dataclass(frozen=True)
class SpatialSpec:
    """Spatial cluster process. A one-sided ``TemporalKernel`` is accepted
    when d = 1, which reproduces the temporal model on the line."""

    d: int
    nu: float
    mu: float
    kernel: SpatialKernel | TemporalKernel
    size_law: ClusterSizeLaw | None = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError("dimension must be a positive integer")
        if not self.nu > 0:
            raise DomainError("immigrant intensity must be positive")
        if not 0.0 < self.mu < 1.0:
            raise DomainError("branching mean must lie in (0, 1)")
        if isinstance(self.kernel, TemporalKernel) and self.d != 1:
            raise DomainError("one-sided kernels are only defined for d = 1")
        if self.size_law is None:
            object.__setattr__(self, "size_law", BorelLaw(self.mu))
        elif isinstance(self.size_law, BorelLaw) and self.size_law.mu != self.mu:
            raise DomainError("Borel size law must share the spec's branching mean")

    def displace(self, rng, n):
        if isinstance(self.kernel, TemporalKernel):
            return self.kernel.sample(rng, n)[:, None]
        return self.kernel.sample(rng, n, self.d)

    @property
    def intensity(self) -> float:
        return self.nu * self.size_law.mean


@dataclass(frozen=True)
class SpatialRealization:
    spec: SpatialSpec
    r: float
    R: float
    immigrants: np.ndarray
    points: np.ndarray
    generations: np.ndarray
    cluster_ids: np.ndarray
    parents: np.ndarray

    @property
    def radii(self) -> np.ndarray:
        """Per-cluster radius L: largest distance of a point to its immigrant."""
        out = np.zeros(len(self.immigrants))
        dist = np.linalg.norm(self.points - self.immigrants[self.cluster_ids], axis=1)
        np.maximum.at(out, self.cluster_ids, dist)
        return out

    def __len__(self):
        return int(self.points.shape[0])


def cluster_radii(spec: SpatialSpec, n: int, rng, cap: int = DEFAULT_SIZE_CAP) -> np.ndarray:
    pos, _, cid, _ = grow_clusters(np.zeros((n, spec.d)), spec.displace, spec.size_law, as_generator(rng), cap)
    out = np.zeros(n)
    np.maximum.at(out, cid, np.linalg.norm(pos, axis=1))
    return out


def margin_from_radii(radii, nu: float, d: int, r: float, tol: float = MARGIN_TOL) -> float:
    """Smallest R (a pilot radius, or 0) with
    nu E[((L + r)^d - r^d) 1{L > R}] / omega_d(r) < tol."""
    L = np.sort(np.asarray(radii, dtype=float))
    contrib = ((L + r) ** d - r**d) * nu / (L.size * omega_d(d, r))
    # tail[j] = sum of contributions from radii strictly above L[j-1]
    tail = np.concatenate([np.cumsum(contrib[::-1])[::-1], [0.0]])
    if tail[0] < tol or L[-1] == 0:
        return 0.0
    # R = L[j] drops every radius <= L[j]
    q = tail[np.searchsorted(L, L, side="right")]
    return float(L[np.argmax(q < tol)])


def default_margin(spec: SpatialSpec, r: float, rng, n_pilot: int = N_PILOT, tol: float = MARGIN_TOL,
                   cap: int = DEFAULT_SIZE_CAP) -> float:
    return margin_from_radii(cluster_radii(spec, n_pilot, rng, cap), spec.nu, spec.d, r, tol)


def simulate_spatial(spec: SpatialSpec, r: float, R: float | None, rng, cap: int = DEFAULT_SIZE_CAP) -> SpatialRealization:
    """Immigrants Poisson(nu) on b(0, r + R), each grown into a full cluster."""
    if not r > 0:
        raise DomainError("observation radius must be positive")
    rng = as_generator(rng)
    if R is None:
        R = default_margin(spec, r, rng, cap=cap)
    if R < 0:
        raise DomainError("margin R must be nonnegative")
    k = rng.poisson(spec.nu * omega_d(spec.d, r + R))
    centers = uniform_in_ball(rng, k, spec.d, r + R)
    pos, gen, cid, par = grow_clusters(centers, spec.displace, spec.size_law, rng, cap)
    return SpatialRealization(spec, float(r), float(R), _frozen(centers), _frozen(pos), _frozen(gen),
                              _frozen(cid), _frozen(par))


def count_in_ball(realization: SpatialRealization, r: float) -> int:
    """Number of points with Euclidean norm <= r."""
    if r > realization.r:
        raise ValueError("radius exceeds the observation radius")
    if r < 0:
        return 0
    return int(np.count_nonzero(np.linalg.norm(realization.points, axis=1) <= r))


def ball_counts_batch(spec: SpatialSpec, r: float, R: float, n: int, rng, cap: int = DEFAULT_SIZE_CAP) -> np.ndarray:
    """N(b(0, r)) in ``n`` independent copies of X_{r,R}."""
    rng = as_generator(rng)
    k = rng.poisson(spec.nu * omega_d(spec.d, r + R), n)
    centers = uniform_in_ball(rng, int(k.sum()), spec.d, r + R)
    rep = np.repeat(np.arange(n), k)
    pos, _, cid, _ = grow_clusters(centers, spec.displace, spec.size_law, rng, cap)
    inside = np.einsum("ij,ij->i", pos, pos) <= r * r
    return np.bincount(rep[cid[inside]], minlength=n)


def _seed_of(rng) -> int:
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(as_generator(rng).integers(0, 2**63))


def estimate_void(spec: SpatialSpec, r: float, R: float | None, n_reps: int, rng,
                  threads: int = 1, key: tuple[int, ...] = (0,), cap: int = DEFAULT_SIZE_CAP) -> Estimate:
    """Fraction of independent replications with an empty ball b(0, r).

    ``rng`` is a seed or a generator (from which a seed is drawn). The
    returned slope is -log(v_hat) / omega_d(r), with target nu.
    """
    if n_reps < 1:
        raise ValueError("need at least one replication")
    seed = _seed_of(rng)
    if R is None:
        R = default_margin(spec, r, generator(seed, PILOT, *key), cap=cap)
    empties = run_blocks(lambda g, n: int(np.count_nonzero(ball_counts_batch(spec, r, R, n, g, cap) == 0)),
                         n_reps, seed, key, threads)
    return proportion_estimate(sum(empties), n_reps, r, omega_d(spec.d, r), target=spec.nu)


def empty_space(v_hat: float, volume: float | None = None) -> tuple[float, float | None]:
    """``(e_hat, diagnostic)`` with e_hat = 1 - v_hat and diagnostic
    log(log(1 / e_hat)) / volume (None when undefined or no volume given)."""
    if not 0.0 <= v_hat <= 1.0:
        raise ValueError("v_hat must lie in [0, 1]")
    e = 1.0 - v_hat
    diag = None
    if volume is not None and 0.0 < e < 1.0:
        # log(1/e) = -log1p(-v) keeps precision when v is tiny
        diag = math.log(-math.log1p(-v_hat)) / volume
    return e, diag


def write_realization_csv(realization: SpatialRealization, path) -> None:
    d = realization.spec.d
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster_id", "generation"] + [f"x_{i + 1}" for i in range(d)])
        for c, g, p in zip(realization.cluster_ids.tolist(), realization.generations.tolist(),
                           realization.points.tolist()):
            w.writerow([c, g] + [format(v, ".17g") for v in p])
