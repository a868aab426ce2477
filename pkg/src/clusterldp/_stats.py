"""Proportion estimates, Wilson intervals and LDP slope diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.stats import norm

Z95 = float(norm.ppf(0.975))


def wilson_interval(hits: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("need at least one replication")
    p = hits / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class Estimate:
    """Probability estimate at one scale, with its LDP slope.

    ``slope = -log(p_hat) / speed``; the slope interval comes from the delta
    method on ``log p_hat``. Both are ``None`` when no hit was recorded.
    """

    scale: float
    speed: float
    n_reps: int
    n_hits: int
    p_hat: float
    ci: tuple[float, float]
    slope: float | None
    slope_ci: tuple[float, float] | None
    target: float | None = None

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci[1] - self.ci[0])


def slope_from(p_hat: float, se_log: float, speed: float, z: float = Z95):
    slope = -math.log(p_hat) / speed
    half = z * se_log / speed
    return slope, (slope - half, slope + half)


def proportion_estimate(hits: int, n: int, scale: float, speed: float, target=None, z: float = Z95) -> Estimate:
    p = hits / n
    ci = wilson_interval(hits, n, z)
    slope = slope_ci = None
    if hits >= 1:
        slope, slope_ci = slope_from(p, math.sqrt((1.0 - p) / (n * p)), speed, z)
    return Estimate(scale, speed, n, hits, p, ci, slope, slope_ci, target)


def weighted_estimate(total: float, total_sq: float, hits: int, n: int, scale: float, speed: float,
                      target=None, z: float = Z95) -> Estimate:
    """Estimate from importance weights: ``total`` and ``total_sq`` are the
    sums of ``w 1{hit}`` and its square over ``n`` replications."""
    p = total / n
    var = max(total_sq / n - p * p, 0.0) * n / max(n - 1, 1)
    se = math.sqrt(var / n)
    ci = (max(0.0, p - z * se), p + z * se)
    slope = slope_ci = None
    if hits >= 1 and p > 0:
        slope, slope_ci = slope_from(p, se / p, speed, z)
    return Estimate(scale, speed, n, hits, p, ci, slope, slope_ci, target)
