import csv
import math

import numpy as np
import pytest
from scipy import stats

from clusterldp.distributions import BorelLaw, DomainError, TablePmf
from clusterldp.ratefn import ScalarRate, finite_dim_rate, legendre
from clusterldp.simulate import Exponential, TemporalSpec
from clusterldp.spatial import Gaussian, SpatialSpec, omega_d
from clusterldp.verify import (
    CSV_COLUMNS,
    SlopeExperiment,
    panjer_pmf,
    panjer_tail,
    rectangle_target,
    run_finite_dim,
    run_scalar_slope,
    run_tilted_slope,
    run_void_experiment,
    surrogate_counts,
    tilted_tail_compound,
    tilted_weights,
    write_estimates_csv,
    write_void_csv,
)
from clusterldp._stats import proportion_estimate, wilson_interval

LAW = BorelLaw(0.5)
HAWKES = TemporalSpec(1.0, 0.5, Exponential(1.0))


def test_wilson_interval_reference():
    # 0 of 351: lower bound 0, upper bound z^2 / (n + z^2)
    lo, hi = wilson_interval(0, 351)
    z = 1.959963984540054
    assert lo == 0.0 and hi == pytest.approx(z * z / (351 + z * z), rel=1e-12)
    lo, hi = wilson_interval(30, 100)
    assert lo < 0.3 < hi


def test_zero_hits_give_no_slope():
    e = proportion_estimate(0, 1000, 10.0, 10.0)
    assert e.slope is None and e.slope_ci is None and e.p_hat == 0.0


def test_panjer_basics():
    p = panjer_pmf(2.0, LAW, 400)
    assert p[0] == pytest.approx(math.exp(-2.0), rel=1e-15)
    assert abs(p.sum() - 1.0) < 1e-10
    assert abs(np.dot(np.arange(p.size), p) - 4.0) < 1e-9
    # P(C = 1) = P(one immigrant) P(S = 1)
    assert p[1] == pytest.approx(2.0 * math.exp(-2.0) * math.exp(-0.5), rel=1e-14)
    with pytest.raises(DomainError):
        panjer_pmf(2.0, LAW, 10)


def test_panjer_against_brute_force_convolution():
    # condition on the number of immigrants and convolve the size pmf
    lam, nmax = 1.3, 60
    q = np.concatenate([[0.0], LAW.pmf(np.arange(1, nmax + 1))])
    total = np.zeros(nmax + 1)
    conv = np.zeros(nmax + 1)
    conv[0] = 1.0
    for n in range(0, 80):
        total += stats.poisson.pmf(n, lam) * conv
        conv = np.convolve(conv, q)[:nmax + 1]
    np.testing.assert_allclose(panjer_pmf(lam, LAW, 2000)[:nmax + 1], total, rtol=1e-10, atol=1e-15)


def test_surrogate_histogram_against_panjer():
    counts = surrogate_counts(1.0, LAW, 2.0, 200_000, seed=4)
    p = panjer_pmf(2.0, LAW, 400)
    keep = p[:counts.size] * counts.sum() >= 5
    k = int(np.argmin(keep)) if not keep.all() else counts.size
    obs = np.append(counts[:k], counts[k:].sum())
    exp = np.append(p[:k], 1 - p[:k].sum()) * counts.sum()
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_tilted_weights_average_to_one():
    rate = ScalarRate(1.0, LAW)
    theta = rate.tilt(3.0)
    _, w = tilted_weights(1.0, LAW, 5.0, theta, 1_000_000, np.random.default_rng(2))
    assert abs(w.mean() - 1.0) < 3 * w.std() / math.sqrt(w.size)


def test_tilted_estimator_matches_panjer():
    truth = panjer_tail(20.0, LAW, 60.0)
    est = tilted_tail_compound(1.0, LAW, 20.0, 3.0, 100_000, 5)
    assert est.ci[0] <= truth <= est.ci[1]
    assert est.target == pytest.approx(legendre(ScalarRate(1.0, LAW), 3.0))
    with pytest.raises(DomainError):
        tilted_tail_compound(1.0, LAW, 20.0, 1.5, 10, 5)


def test_tilted_slopes_approach_rate():
    est = run_tilted_slope(1.0, LAW, 3.0, (50.0, 100.0, 200.0), 50_000, 6)
    target = legendre(ScalarRate(1.0, LAW), 3.0)
    gaps = [abs(e.slope - target) for e in est]
    assert gaps[0] > gaps[1] > gaps[2]


def test_tilting_beats_plain_monte_carlo():
    n = 20_000
    tilted = tilted_tail_compound(1.0, LAW, 100.0, 3.0, n, 7)
    counts = surrogate_counts(1.0, LAW, 100.0, n, seed=7)
    hits = int(counts[300:].sum())
    plain = proportion_estimate(hits, n, 100.0, 100.0)
    assert hits == 0 or tilted.half_width * 10 <= plain.half_width
    assert tilted.half_width * 10 <= plain.ci[1] - plain.ci[0]


def test_experiment_validation():
    with pytest.raises(ValueError):
        SlopeExperiment(HAWKES, 2.0, (10.0,), 100, 1)
    with pytest.raises(ValueError):
        SlopeExperiment(HAWKES, 3.0, (20.0, 10.0), 100, 1)
    e = SlopeExperiment(HAWKES, 1.0, (10.0,), 100, 1, side="lower")
    assert e.target() == pytest.approx(legendre(ScalarRate(1.0, LAW), 1.0))
    assert SlopeExperiment(HAWKES, 1.0, (10.0,), 100, 1).target() == 0.0


def test_poisson_degenerate_slope_target():
    spec = TemporalSpec(1.0, 0.5, Exponential(1.0), TablePmf((1.0,)))
    exp = SlopeExperiment(spec, 2.0, (10.0, 40.0), 50_000, 3)
    target = 2.0 * math.log(2.0) - 2.0 + 1.0
    assert exp.target() == pytest.approx(target, abs=1e-10)
    est = run_scalar_slope(exp)
    # with S = 1 the count is exactly Poisson(t)
    for e in est:
        truth = stats.poisson.sf(2 * e.scale - 1, e.scale)
        assert e.ci[0] <= truth <= e.ci[1]


def test_scalar_slope_runs_and_is_thread_independent():
    exp = SlopeExperiment(HAWKES, 3.0, (10.0, 20.0), 45_000, 11)
    a = run_scalar_slope(exp, threads=1)
    b = run_scalar_slope(exp, threads=3)
    assert a == b
    assert all(e.n_hits > 0 for e in a)


def test_zero_hit_scale_is_flagged():
    exp = SlopeExperiment(HAWKES, 12.0, (30.0,), 500, 12)
    (e,) = run_scalar_slope(exp)
    assert e.n_hits == 0 and e.slope is None


def test_spatial_slope_experiment():
    spec = SpatialSpec(2, 0.5, 0.5, Gaussian(0.2))
    exp = SlopeExperiment(spec, 2.0, (1.0, 2.0), 20_000, 13)
    est = run_scalar_slope(exp)
    assert est[0].speed == pytest.approx(omega_d(2, 1.0))
    assert est[1].target == pytest.approx(legendre(ScalarRate(0.5, BorelLaw(0.5)), 2.0))


def test_rectangle_target():
    rate = ScalarRate(1.0, LAW)
    inf = math.inf
    assert rectangle_target(rate, (0.5, 1.0), (0.5, 1.0), (1.5, 3.0)) == 0.0
    # minimiser keeps a common slope 3.2 on [0, 0.5] and the mean slope after
    val = rectangle_target(rate, (0.5, 1.0), (1.6, 2.4), (inf, inf))
    assert val == pytest.approx(0.5 * legendre(rate, 3.2), abs=1e-9)
    # brute-force grid over the box
    xs1 = np.linspace(1.6, 3.0, 141)
    xs2 = np.linspace(2.4, 5.0, 261)
    brute = min(finite_dim_rate(rate, [0.5, 1.0], [a, b]) for a in xs1[::5] for b in xs2[::5])
    assert val <= brute + 1e-12
    box = rectangle_target(rate, (0.3, 1.0), (0.3, 2.5), (0.5, 2.8))
    brute = min(finite_dim_rate(rate, [0.3, 1.0], [a, b])
                for a in np.linspace(0.3, 0.5, 81) for b in np.linspace(2.5, 2.8, 61))
    assert box == pytest.approx(brute, abs=1e-5) and box <= brute + 1e-12


def test_finite_dim_experiment():
    inf = math.inf
    est = run_finite_dim(HAWKES, (0.5, 1.0), (0.5, 1.0), (1.5, 3.0), (20.0, 80.0), 5_000, 14)
    assert est[1].p_hat > est[0].p_hat and est[1].target == 0.0
    with pytest.raises(ValueError):
        run_finite_dim(HAWKES, (0.5, 0.5), (1.6, 2.4), (inf, inf), (20.0,), 100, 14)


def test_void_experiment_poisson_limit(tmp_path):
    spec = SpatialSpec(2, 0.15, 1e-9, Gaussian(0.2))
    rows = run_void_experiment(spec, (1.0, 2.0), 0.5, 100_000, 15)
    for row in rows:
        e = row.estimate
        assert e.slope_ci[0] - 1e-3 <= 0.15 <= e.slope_ci[1] + 1e-3
        assert row.e_hat == 1 - e.p_hat
    write_void_csv(rows, tmp_path / "v.csv")
    header = (tmp_path / "v.csv").read_text().splitlines()[0].split(",")
    assert header == CSV_COLUMNS + ["e_hat", "double_log"]


def test_void_experiment_warns_when_unestimable():
    spec = SpatialSpec(2, 2.0, 0.5, Gaussian(0.2))
    with pytest.warns(RuntimeWarning):
        run_void_experiment(spec, (3.0,), 0.5, 100, 16)


def test_estimates_csv(tmp_path):
    e = [proportion_estimate(3, 100, 10.0, 10.0, 0.25), proportion_estimate(0, 100, 20.0, 20.0, 0.25)]
    write_estimates_csv(e, tmp_path / "e.csv")
    rows = list(csv.reader((tmp_path / "e.csv").read_text().splitlines()))
    assert rows[0] == CSV_COLUMNS
    assert rows[1][3] == format(0.03, ".17g")
    assert rows[2][6:9] == ["", "", ""]
