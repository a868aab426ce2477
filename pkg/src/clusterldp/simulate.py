"""Temporal Poisson cluster and Hawkes processes, simulated through their
cluster (immigrant plus branching) representation.

Single realizations are immutable objects holding flat, time-sorted event
arrays. The ``*_batch`` helpers produce only the counts needed by the
Monte Carlo harness, for many independent replications at once.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .distributions import (
    DEFAULT_SIZE_CAP,
    BorelLaw,
    ClusterSizeCapError,
    ClusterSizeLaw,
    DomainError,
)
from ._streams import as_generator

MARGIN_TOL = 1e-4
N_PILOT = 10_000


# --- offspring displacement kernels -------------------------------------


class TemporalKernel:
    """Normalised offspring displacement density on (0, inf)."""

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(TemporalKernel):
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError("exponential kernel needs beta > 0")

    def sample(self, rng, n):
        return rng.exponential(1.0 / self.beta, n)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, self.beta * np.exp(-self.beta * np.abs(x)), 0.0)

    @property
    def mean(self):
        return 1.0 / self.beta


@dataclass(frozen=True)
class UniformOn(TemporalKernel):
    """Uniform displacement on (0, b)."""

    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise DomainError("uniform kernel needs b > 0")

    def sample(self, rng, n):
        return self.b * (1.0 - rng.random(n))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x > 0) & (x <= self.b), 1.0 / self.b, 0.0)

    @property
    def mean(self):
        return 0.5 * self.b


@dataclass(frozen=True)
class TablePdf(TemporalKernel):
    """Piecewise-constant density: ``density[i]`` holds on ``(edges[i], edges[i+1]]``."""

    edges: tuple[float, ...]
    density: tuple[float, ...]
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if e.ndim != 1 or d.shape != (e.size - 1,) or e.size < 2:
            raise DomainError("need len(edges) == len(density) + 1 >= 2")
        if e[0] < 0 or np.any(np.diff(e) <= 0):
            raise DomainError("edges must be increasing and start at t >= 0")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise DomainError("density must be finite and nonnegative")
        mass = np.diff(e) * d
        if abs(mass.sum() - 1.0) > 1e-9:
            raise DomainError(f"density integrates to {mass.sum()!r}, not 1")
        object.__setattr__(self, "edges", tuple(map(float, e)))
        object.__setattr__(self, "density", tuple(map(float, d)))
        object.__setattr__(self, "_cdf", np.concatenate([[0.0], np.cumsum(mass) / mass.sum()]))

    def sample(self, rng, n):
        u = 1.0 - rng.random(n)
        return np.interp(u, self._cdf, self.edges)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        e = np.asarray(self.edges)
        idx = np.searchsorted(e, x, side="left") - 1
        ok = (x > e[0]) & (x <= e[-1])
        return np.where(ok, np.asarray(self.density)[np.clip(idx, 0, len(self.density) - 1)], 0.0)

    @property
    def mean(self):
        e = np.asarray(self.edges)
        return float(np.sum(np.asarray(self.density) * (e[1:] ** 2 - e[:-1] ** 2) / 2.0))


# --- specs and realizations ------------------------------------------------


@dataclass(frozen=True)
class TemporalSpec:
    """Immigrant intensity ``nu``, branching mean ``mu`` and offspring kernel.

    ``size_law`` defaults to Borel(mu), i.e. a Hawkes process. With a
    ``TablePmf`` the cluster is its centre plus ``S - 1`` points displaced
    independently from the centre by the kernel.
    """

    nu: float
    mu: float
    kernel: TemporalKernel
    size_law: ClusterSizeLaw | None = None

    def __post_init__(self):
        if not self.nu > 0:
            raise DomainError("immigrant intensity must be positive")
        if not 0.0 < self.mu < 1.0:
            raise DomainError("branching mean must lie in (0, 1)")
        if self.size_law is None:
            object.__setattr__(self, "size_law", BorelLaw(self.mu))
        elif isinstance(self.size_law, BorelLaw) and self.size_law.mu != self.mu:
            raise DomainError("Borel size law must share the spec's branching mean")
        if not math.isfinite(self.kernel.mean):
            raise DomainError("kernel must have a finite mean displacement")

    @property
    def intensity(self) -> float:
        """Mean number of points per unit time, nu E[S]."""
        return self.nu * self.size_law.mean


def grow_clusters(
    centers: np.ndarray,
    displace: Callable[[np.random.Generator, int], np.ndarray],
    size_law: ClusterSizeLaw,
    rng: np.random.Generator,
    cap: int = DEFAULT_SIZE_CAP,
):
    """Grow one cluster around each centre.

    Returns ``(positions, generation, cluster, parent)`` with the centres
    first and then one block per generation. ``cluster`` indexes ``centers``
    and ``parent`` indexes the returned arrays (-1 for centres).
    """
    n = len(centers)
    pos = [np.asarray(centers, dtype=float)]
    gen = [np.zeros(n, dtype=np.int64)]
    cid = [np.arange(n, dtype=np.int64)]
    par = [np.full(n, -1, dtype=np.int64)]
    if isinstance(size_law, BorelLaw):
        mu = size_law.mu
        cur_pos, cur_cid, cur_idx = pos[0], cid[0], np.arange(n)
        offset, g = n, 0
        sizes = np.ones(n, dtype=np.int64)
        while cur_idx.size:
            kids = rng.poisson(mu, cur_idx.size)
            m = int(kids.sum())
            if m == 0:
                break
            g += 1
            src = np.repeat(np.arange(cur_idx.size), kids)
            cur_pos = cur_pos[src] + displace(rng, m)
            cur_cid = cur_cid[src]
            par.append(cur_idx[src])
            cur_idx = np.arange(offset, offset + m)
            offset += m
            pos.append(cur_pos)
            gen.append(np.full(m, g, dtype=np.int64))
            cid.append(cur_cid)
            sizes += np.bincount(cur_cid, minlength=n)
            if sizes.max() > cap:
                raise ClusterSizeCapError(f"a cluster exceeded {cap} points (mu={mu})")
    else:
        extra = size_law.sample(rng, n, cap) - 1
        m = int(extra.sum())
        src = np.repeat(np.arange(n), extra)
        pos.append(pos[0][src] + displace(rng, m))
        gen.append(np.ones(m, dtype=np.int64))
        cid.append(src)
        par.append(src)
    return (np.concatenate(pos), np.concatenate(gen), np.concatenate(cid), np.concatenate(par))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TemporalCluster:
    center: float
    times: np.ndarray
    generations: np.ndarray
    parents: np.ndarray  # index into ``times``; -1 for the centre

    @property
    def events(self) -> list[tuple[float, int]]:
        return list(zip(self.times.tolist(), self.generations.tolist()))

    @property
    def size(self) -> int:
        return int(self.times.size)

    @property
    def radius(self) -> float:
        return float(np.max(np.abs(self.times - self.center)))


def _sorted_cluster(center, times, gens, parents) -> TemporalCluster:
    order = np.argsort(times, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    p = parents[order]
    p = np.where(p >= 0, rank[np.maximum(p, 0)], -1)
    return TemporalCluster(float(center), _frozen(times[order]), _frozen(gens[order]), _frozen(p))


def sample_cluster(spec: TemporalSpec, center: float, rng, cap: int = DEFAULT_SIZE_CAP) -> TemporalCluster:
    """One cluster rooted at ``center``; children land at parent + displacement."""
    rng = as_generator(rng)
    pos, gen, _, par = grow_clusters(np.array([float(center)]), spec.kernel.sample, spec.size_law, rng, cap)
    return _sorted_cluster(center, pos, gen, par)


@dataclass(frozen=True)
class TemporalRealization:
    """Truncated process on window (0, t] with immigrants on [-T, t + T].

    Events are stored flat and time-sorted; ``cluster_ids`` index
    ``immigrant_times``. No event is dropped by the window.
    """

    spec: TemporalSpec
    t: float
    T: float
    immigrant_times: np.ndarray
    times: np.ndarray
    generations: np.ndarray
    cluster_ids: np.ndarray
    parents: np.ndarray

    @property
    def window(self) -> tuple[float, float]:
        return 0.0, self.t

    @property
    def margin(self) -> float:
        return self.T

    @cached_property
    def clusters(self) -> list[TemporalCluster]:
        out = []
        order = np.argsort(self.cluster_ids, kind="stable")
        bounds = np.searchsorted(self.cluster_ids[order], np.arange(len(self.immigrant_times) + 1))
        local = np.empty(self.times.size, dtype=np.int64)
        local[order] = np.arange(order.size) - bounds[self.cluster_ids[order]]
        for c, center in enumerate(self.immigrant_times):
            idx = order[bounds[c]:bounds[c + 1]]  # time-sorted within the cluster
            p = self.parents[idx]
            p = np.where(p >= 0, local[np.maximum(p, 0)], -1)
            out.append(TemporalCluster(float(center), _frozen(self.times[idx]),
                                       _frozen(self.generations[idx]), _frozen(p)))
        return out

    @property
    def radii(self) -> np.ndarray:
        r = np.zeros(len(self.immigrant_times))
        np.maximum.at(r, self.cluster_ids, np.abs(self.times - self.immigrant_times[self.cluster_ids]))
        return r

    def __len__(self) -> int:
        return int(self.times.size)


def cluster_radii(spec: TemporalSpec, n: int, rng, cap: int = DEFAULT_SIZE_CAP) -> np.ndarray:
    """Radii L of ``n`` independent clusters centred at 0."""
    pos, _, cid, _ = grow_clusters(np.zeros(n), spec.kernel.sample, spec.size_law, as_generator(rng), cap)
    r = np.zeros(n)
    np.maximum.at(r, cid, np.abs(pos))
    return r


def margin_from_radii(radii: np.ndarray, budget: float) -> float:
    """Smallest T with mean((L - T)^+) < budget, from pilot radii."""
    radii = np.sort(np.asarray(radii, dtype=float))
    excess = lambda T: float(np.mean(np.maximum(radii - T, 0.0)))
    if excess(0.0) < budget:
        return 0.0
    lo, hi = 0.0, float(radii[-1])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) < budget:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return hi


def default_margin(spec: TemporalSpec, t: float, rng, n_pilot: int = N_PILOT, tol: float = MARGIN_TOL,
                   cap: int = DEFAULT_SIZE_CAP) -> float:
    """Margin T with nu E[(L - T)^+] < tol nu t, estimated from pilot clusters."""
    return margin_from_radii(cluster_radii(spec, n_pilot, rng, cap), tol * t)


def simulate_truncated(spec: TemporalSpec, t: float, T: float | None, rng, cap: int = DEFAULT_SIZE_CAP) -> TemporalRealization:
    """Simulate X_{t,T}. ``T=None`` picks the default margin from a pilot run."""
    if not t > 0:
        raise DomainError("horizon t must be positive")
    rng = as_generator(rng)
    if T is None:
        T = default_margin(spec, t, rng, cap=cap)
    if T < 0:
        raise DomainError("margin T must be nonnegative")
    k = rng.poisson(spec.nu * (t + 2 * T))
    centers = np.sort(rng.uniform(-T, t + T, k))
    pos, gen, cid, par = grow_clusters(centers, spec.kernel.sample, spec.size_law, rng, cap)
    order = np.argsort(pos, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    par = par[order]
    par = np.where(par >= 0, rank[np.maximum(par, 0)], -1)
    return TemporalRealization(spec, float(t), float(T), _frozen(centers), _frozen(pos[order]),
                               _frozen(gen[order]), _frozen(cid[order]), _frozen(par))


def count_in_interval(realization: TemporalRealization, a: float, b: float) -> int:
    """Number of events in (a, b]."""
    if a > b:
        raise ValueError("need a <= b")
    ts = realization.times
    return int(np.searchsorted(ts, b, side="right") - np.searchsorted(ts, a, side="right"))


def count_path(realization: TemporalRealization, alpha: float, grid) -> np.ndarray:
    """Scaled path s -> N(0, alpha s] / alpha at the grid points."""
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid[0] < 0 or grid[-1] > 1 or np.any(np.diff(grid) < 0)):
        raise ValueError("grid must be sorted within [0, 1]")
    if not 0 < alpha <= realization.t:
        raise ValueError("alpha must lie in (0, t]")
    ts = realization.times
    base = np.searchsorted(ts, 0.0, side="right")
    return (np.searchsorted(ts, alpha * grid, side="right") - base) / alpha


def surrogate_compound(spec: TemporalSpec, t: float, rng) -> int:
    """C(t): total size of the clusters whose immigrant falls in (0, t]."""
    if not t > 0:
        raise DomainError("horizon t must be positive")
    rng = as_generator(rng)
    k = rng.poisson(spec.nu * t)
    return int(spec.size_law.sample(rng, k).sum())


def surrogate_batch(nu: float, law: ClusterSizeLaw, t: float, n: int, rng, cap: int = DEFAULT_SIZE_CAP) -> np.ndarray:
    """``n`` independent copies of C(t)."""
    rng = as_generator(rng)
    k = rng.poisson(nu * t, n)
    sizes = law.sample(rng, int(k.sum()), cap)
    return np.bincount(np.repeat(np.arange(n), k), weights=sizes, minlength=n).astype(np.int64)


def truncated_counts_batch(spec: TemporalSpec, t: float, T: float, cuts, n: int, rng,
                           cap: int = DEFAULT_SIZE_CAP) -> np.ndarray:
    """Counts N(0, c] for each cut ``c`` in ``n`` independent copies of X_{t,T}.

    Kernels live on (0, inf), so immigrants after the last cut never reach
    the counting window and are not grown; the counts keep their exact law.
    """
    rng = as_generator(rng)
    cuts = np.asarray(cuts, dtype=float)
    last = float(cuts.max())
    k = rng.poisson(spec.nu * (last + T), n)
    centers = rng.uniform(-T, last, int(k.sum()))
    rep = np.repeat(np.arange(n), k)
    pos, _, cid, _ = grow_clusters(centers, spec.kernel.sample, spec.size_law, rng, cap)
    keep = (pos > 0) & (pos <= last)
    pos, rep_ev = pos[keep], rep[cid[keep]]
    out = np.empty((n, cuts.size), dtype=np.int64)
    for j, c in enumerate(cuts):
        out[:, j] = np.bincount(rep_ev[pos <= c], minlength=n)
    return out


def write_realization_csv(realization: TemporalRealization, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster_id", "generation", "time"])
        for c, g, x in zip(realization.cluster_ids.tolist(), realization.generations.tolist(),
                           realization.times.tolist()):
            w.writerow([c, g, format(x, ".17g")])
