"""Monte Carlo checks of the limit theorems: LDP slopes for scalar and
two-time events, void-probability asymptotics, and two exact tools for the
compound-Poisson surrogate C(t) (Panjer recursion and an exponentially
tilted tail estimator)."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .distributions import DEFAULT_SIZE_CAP, ClusterSizeLaw, DomainError
from .ratefn import ScalarRate, legendre
from .simulate import TemporalSpec, default_margin, surrogate_batch, truncated_counts_batch
from .spatial import SpatialSpec, ball_counts_batch, empty_space, omega_d
from .spatial import default_margin as spatial_margin
from ._stats import Estimate, proportion_estimate, weighted_estimate
from ._streams import PILOT, as_generator, generator, run_blocks

CSV_COLUMNS = ["scale", "n_reps", "n_hits", "p_hat", "ci_lo", "ci_hi",
               "slope", "slope_ci_lo", "slope_ci_hi", "target"]


@dataclass(frozen=True)
class SlopeExperiment:
    """Estimate P(count / speed >= a) (side "upper") or <= a (side "lower")
    at each scale: t for temporal specs (speed t), r for spatial ones
    (speed omega_d(r)). ``margin=None`` picks T or R from pilot clusters;
    a cluster larger than ``cap`` aborts the run."""

    spec: TemporalSpec | SpatialSpec
    threshold: float
    scales: tuple[float, ...]
    n_reps: int
    seed: int
    side: str = "upper"
    margin: float | None = None
    cap: int = DEFAULT_SIZE_CAP

    def __post_init__(self):
        if self.side not in ("upper", "lower"):
            raise ValueError("side must be 'upper' or 'lower'")
        if self.threshold == self.spec.intensity:
            raise ValueError("threshold at the mean gives an uninformative slope")
        s = np.asarray(self.scales, dtype=float)
        if s.size == 0 or np.any(s <= 0) or np.any(np.diff(s) <= 0):
            raise ValueError("scales must be positive and strictly increasing")
        if self.n_reps < 1:
            raise ValueError("need at least one replication")
        object.__setattr__(self, "scales", tuple(map(float, s)))

    @property
    def rate(self) -> ScalarRate:
        return ScalarRate(self.spec.nu, self.spec.size_law)

    def target(self) -> float:
        """Infimum of the rate over the event; one-sided events attain it at
        the threshold because the rate is convex with its zero at the mean."""
        m = self.spec.intensity
        a = self.threshold
        if (self.side == "upper" and a <= m) or (self.side == "lower" and a >= m):
            return 0.0
        return legendre(self.rate, a)


def _hit(stat, a, side):
    return stat >= a if side == "upper" else stat <= a


def run_scalar_slope(exp: SlopeExperiment, threads: int = 1) -> list[Estimate]:
    target = exp.target()
    spec = exp.spec
    out = []
    for i, scale in enumerate(exp.scales):
        if isinstance(spec, SpatialSpec):
            speed = omega_d(spec.d, scale)
            margin = (exp.margin if exp.margin is not None
                      else spatial_margin(spec, scale, generator(exp.seed, PILOT, i), cap=exp.cap))

            def block(g, n, scale=scale, speed=speed, margin=margin):
                stat = ball_counts_batch(spec, scale, margin, n, g, exp.cap) / speed
                return int(np.count_nonzero(_hit(stat, exp.threshold, exp.side)))
        else:
            speed = scale
            margin = (exp.margin if exp.margin is not None
                      else default_margin(spec, scale, generator(exp.seed, PILOT, i), cap=exp.cap))

            def block(g, n, scale=scale, margin=margin):
                stat = truncated_counts_batch(spec, scale, margin, [scale], n, g, exp.cap)[:, 0] / scale
                return int(np.count_nonzero(_hit(stat, exp.threshold, exp.side)))

        hits = sum(run_blocks(block, exp.n_reps, exp.seed, (i,), threads))
        out.append(proportion_estimate(hits, exp.n_reps, scale, speed, target))
    return out


# --- two-time (finite-dimensional) events ---------------------------------


def rectangle_target(rate: ScalarRate, times, lower, upper, n_grid: int = 401) -> float:
    """min of the two-time rate over the box [lower, upper] (per coordinate).

    For fixed x1 the inner minimum over x2 sits at the point of
    [l2, u2] nearest x1 + m (t2 - t1), m the mean slope, by convexity; the
    outer one-dimensional problem is solved on a grid and refined locally.
    """
    t1, t2 = map(float, times)
    if not 0 < t1 < t2 <= 1:
        raise ValueError("need 0 < t1 < t2 <= 1")
    l1, l2 = (max(float(v), 0.0) for v in lower)
    u1, u2 = map(float, upper)
    if l1 > u1 or l2 > u2:
        return math.inf
    m = rate.mean
    dt = t2 - t1
    if l1 <= m * t1 <= u1 and l2 <= m * t2 <= u2:
        return 0.0
    finite = [abs(v) for v in (l1, l2, u1, u2) if math.isfinite(v)]
    cap = 4.0 * max(finite + [m]) + 10.0
    hi1 = min(u1, cap)

    def g(x1):
        x2 = min(max(x1 + m * dt, l2), u2)
        if x2 < x1:
            return math.inf
        return t1 * legendre(rate, x1 / t1) + dt * legendre(rate, (x2 - x1) / dt)

    grid = np.linspace(l1, hi1, n_grid)
    vals = np.array([g(x) for x in grid])
    j = int(np.argmin(vals))
    if not math.isfinite(vals[j]):
        return math.inf
    a, b = grid[max(j - 1, 0)], grid[min(j + 1, n_grid - 1)]
    if b > a:
        res = minimize_scalar(g, bounds=(a, b), method="bounded", options={"xatol": 1e-10})
        if res.fun < vals[j]:
            return float(res.fun)
    return float(vals[j])


def run_finite_dim(spec: TemporalSpec, times, lower, upper, scales, n_reps: int, seed: int,
                   margin: float | None = None, threads: int = 1, cap: int = DEFAULT_SIZE_CAP) -> list[Estimate]:
    """P(N(0, alpha t_j] / alpha in [lower_j, upper_j] for j = 1, 2) per scale alpha."""
    times = tuple(map(float, times))
    if len(times) != 2 or not 0 < times[0] < times[1] <= 1:
        raise ValueError("need two times with 0 < t1 < t2 <= 1")
    scales = tuple(map(float, scales))
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be strictly increasing")
    rate = ScalarRate(spec.nu, spec.size_law)
    target = rectangle_target(rate, times, lower, upper)
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    out = []
    for i, alpha in enumerate(scales):
        T = margin if margin is not None else default_margin(spec, alpha, generator(seed, PILOT, i), cap=cap)

        def block(g, n, alpha=alpha, T=T):
            stat = truncated_counts_batch(spec, alpha, T, [alpha * times[0], alpha * times[1]], n, g, cap) / alpha
            return int(np.count_nonzero(np.all((stat >= lo) & (stat <= hi), axis=1)))

        hits = sum(run_blocks(block, n_reps, seed, (i,), threads))
        out.append(proportion_estimate(hits, n_reps, alpha, alpha, target))
    return out


# --- compound-Poisson surrogate -------------------------------------------


def panjer_pmf(lambda_total: float, law: ClusterSizeLaw, nmax: int, tail_tol: float = 1e-12) -> np.ndarray:
    """Exact pmf of a compound Poisson(lambda_total) sum of cluster sizes on 0..nmax."""
    if not 0 < lambda_total <= 700:
        raise DomainError("lambda_total must lie in (0, 700]")
    k = np.arange(1, nmax + 1)
    kq = np.concatenate([[0.0], k * law.pmf(k)])
    p = np.zeros(nmax + 1)
    p[0] = math.exp(-lambda_total)
    for n in range(1, nmax + 1):
        p[n] = lambda_total / n * np.dot(kq[1:n + 1], p[n - 1::-1])
    missing = 1.0 - p.sum()
    if missing > tail_tol:
        raise DomainError(f"nmax={nmax} leaves tail mass {missing:.3g} > {tail_tol:g}")
    return p


def panjer_tail(lambda_total: float, law: ClusterSizeLaw, level: float) -> float:
    """P(C >= level), from a Panjer pmf long enough to hold the tail."""
    nmax = int(max(level, lambda_total * law.mean) * 2 + 50)
    while True:
        try:
            p = panjer_pmf(lambda_total, law, nmax)
            break
        except DomainError as err:
            if "tail mass" not in str(err):
                raise
            nmax *= 2
    first = int(math.ceil(level))
    # summing the upper tail directly avoids cancellation in 1 - cdf
    return float(p[first:].sum())


def tilted_weights(nu: float, law: ClusterSizeLaw, t: float, theta: float, n: int, rng,
                   cap: int = DEFAULT_SIZE_CAP):
    """Sample C(t) under the tilted measure and return ``(C, weights)``.

    Immigrants arrive at rate nu phi(theta), sizes follow the tilted law, and
    the likelihood ratio is exp(-theta C + t Lambda(theta)).
    """
    rng = as_generator(rng)
    rate = ScalarRate(nu, law)
    phi = law.mgf(theta)
    c = surrogate_batch(nu * phi, law.tilted(theta), t, n, rng, cap)
    w = np.exp(-theta * c + t * rate.cgf(theta))
    return c, w


def tilted_tail_compound(nu: float, law: ClusterSizeLaw, t: float, a: float, n_reps: int, rng,
                         threads: int = 1, key: tuple[int, ...] = (0,), cap: int = DEFAULT_SIZE_CAP) -> Estimate:
    """Importance-sampling estimate of P(C(t) >= a t), tilted at theta_a."""
    rate = ScalarRate(nu, law)
    if not a > rate.mean:
        raise DomainError("the tilted estimator targets thresholds above the mean")
    theta = rate.tilt(a)
    seed = rng if isinstance(rng, (int, np.integer)) else int(as_generator(rng).integers(0, 2**63))

    def block(g, n):
        c, w = tilted_weights(nu, law, t, theta, n, g, cap)
        hit = c >= a * t
        wh = w[hit]
        return float(wh.sum()), float(np.dot(wh, wh)), int(hit.sum())

    parts = run_blocks(block, n_reps, int(seed), key, threads)
    s = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    hits = sum(p[2] for p in parts)
    return weighted_estimate(s, s2, hits, n_reps, t, t, legendre(rate, a))


def run_tilted_slope(nu: float, law: ClusterSizeLaw, a: float, scales, n_reps: int, seed: int,
                     threads: int = 1, cap: int = DEFAULT_SIZE_CAP) -> list[Estimate]:
    return [tilted_tail_compound(nu, law, t, a, n_reps, seed, threads, key=(i,), cap=cap)
            for i, t in enumerate(scales)]


def surrogate_counts(nu: float, law: ClusterSizeLaw, t: float, n_reps: int, seed: int,
                     threads: int = 1, key: tuple[int, ...] = (0,), cap: int = DEFAULT_SIZE_CAP) -> np.ndarray:
    """Histogram (by value) of ``n_reps`` plain Monte Carlo draws of C(t)."""
    parts = run_blocks(lambda g, n: np.bincount(surrogate_batch(nu, law, t, n, g, cap)), n_reps, seed, key, threads)
    out = np.zeros(max(len(p) for p in parts), dtype=np.int64)
    for p in parts:
        out[:len(p)] += p
    return out


# --- void probabilities ----------------------------------------------------


@dataclass(frozen=True)
class VoidRow:
    estimate: Estimate
    e_hat: float
    double_log: float | None


def run_void_experiment(spec: SpatialSpec, radii, R: float | None, n_reps: int, seed: int,
                        threads: int = 1, cap: int = DEFAULT_SIZE_CAP) -> list[VoidRow]:
    """Per radius: v_hat, its slope -log(v_hat) / omega_d(r) (target nu) and
    the empty-space diagnostic log log(1 / e_hat) / omega_d(r)."""
    radii = tuple(map(float, radii))
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    expected_hits = n_reps * math.exp(-spec.nu * omega_d(spec.d, radii[-1]))
    if expected_hits < 10:
        warnings.warn(f"about {expected_hits:.2g} empty balls expected at r={radii[-1]}; "
                      "lower nu or raise n_reps", RuntimeWarning, stacklevel=2)
    rows = []
    for i, r in enumerate(radii):
        vol = omega_d(spec.d, r)
        margin = R if R is not None else spatial_margin(spec, r, generator(seed, PILOT, i), cap=cap)
        empties = sum(run_blocks(
            lambda g, n, r=r, margin=margin: int(np.count_nonzero(ball_counts_batch(spec, r, margin, n, g, cap) == 0)),
            n_reps, seed, (i,), threads))
        est = proportion_estimate(empties, n_reps, r, vol, target=spec.nu)
        e_hat, diag = empty_space(est.p_hat, vol)
        rows.append(VoidRow(est, e_hat, diag))
    return rows


# --- output ---------------------------------------------------------------


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def estimate_row(e: Estimate) -> list[str]:
    sl = e.slope_ci or (None, None)
    return [fmt(e.scale), fmt(e.n_reps), fmt(e.n_hits), fmt(e.p_hat), fmt(e.ci[0]), fmt(e.ci[1]),
            fmt(e.slope), fmt(sl[0]), fmt(sl[1]), fmt(e.target)]


def write_estimates_csv(estimates, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for e in estimates:
            w.writerow(estimate_row(e))


def write_void_csv(rows: list[VoidRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS + ["e_hat", "double_log"])
        for row in rows:
            w.writerow(estimate_row(row.estimate) + [fmt(row.e_hat), fmt(row.double_log)])
