"""Statistics module: mean/variance, summaries, and the power-law fit."""
import math

import numpy as np
import pytest
from scipy import stats as sstats

from fluxscale.errors import (DegenerateAbscissaError, EmptySeriesError,
                              InsufficientPointsError)
from fluxscale.model import IlliquiditySeries, MeanVariancePoint
from fluxscale.taylor import (EXACT_RSS, betainc_reg, fit_taylor, linefit,
                              mean_variance, summary_stats, t_two_sided_p)


def series(values, iid="000001", delta_t=1):
    ts = np.arange(1, len(values) + 1) + 737000 * 1440
    return IlliquiditySeries(iid, delta_t, ts, np.asarray(values, float))


def pts(ms, vs, dt=1):
    return [MeanVariancePoint(f"{600000 + i:06d}", dt, m, v, 10)
            for i, (m, v) in enumerate(zip(ms, vs))]


# ---------------------------------------------------------------------------
# mean_variance
# ---------------------------------------------------------------------------


class TestMeanVariance:
    def test_hand_computed(self):
        p = mean_variance(series([1.0, 2.0, 3.0]))
        assert p.mean == pytest.approx(2.0, abs=0)
        assert p.variance == pytest.approx(2.0 / 3.0, rel=1e-15)
        assert p.sample_count == 3

    def test_constant_series_exact_zero(self):
        p = mean_variance(series([4.25] * 7))
        assert p.mean == 4.25
        assert p.variance == 0.0

    def test_two_point_scale(self):
        p = mean_variance(series([0.0, 2e-8]))
        assert p.mean == pytest.approx(1e-8, rel=1e-14)
        assert p.variance == pytest.approx(1e-16, rel=1e-12)

    def test_empty_raises(self):
        with pytest.raises(EmptySeriesError):
            mean_variance(series([]))

    def test_single_sample_zero_variance(self):
        p = mean_variance(series([0.7]))
        assert p.variance == 0.0 and p.sample_count == 1

    def test_population_not_sample_variance(self):
        vals = [1.0, 5.0]
        p = mean_variance(series(vals))
        assert p.variance == pytest.approx(4.0)  # /J, not /(J-1) which gives 8

    def test_cancellation_clamped(self):
        # near-constant values at awkward binary scales
        p = mean_variance(series([0.1, 0.1, 0.1]))
        assert p.variance == 0.0


# ---------------------------------------------------------------------------
# summary_stats
# ---------------------------------------------------------------------------


class TestSummaryStats:
    def test_hand_computed(self):
        s = summary_stats([0.0, 0.0, 3.0])
        assert (s.mean, s.median, s.max, s.min) == (1.0, 0.0, 3.0, 0.0)

    def test_symmetric_zero_skew(self):
        s = summary_stats([-1.0, 0.0, 1.0])
        assert s.skewness == pytest.approx(0.0, abs=1e-15)

    def test_normal_kurtosis_near_three(self):
        rng = np.random.default_rng(123)
        s = summary_stats(rng.standard_normal(200_000))
        assert s.kurtosis == pytest.approx(3.0, abs=0.05)
        assert s.skewness == pytest.approx(0.0, abs=0.02)
        assert s.std == pytest.approx(1.0, abs=0.01)

    def test_lower_median_even_count(self):
        assert summary_stats([1.0, 2.0, 3.0, 4.0]).median == 2.0

    def test_degenerate_markers(self):
        s = summary_stats([2.0, 2.0])
        assert s.std == 0.0
        assert math.isnan(s.skewness) and math.isnan(s.kurtosis)

    def test_empty_raises(self):
        with pytest.raises(EmptySeriesError):
            summary_stats([])

    def test_population_std(self):
        s = summary_stats([0.0, 2.0])
        assert s.std == pytest.approx(1.0)  # population; sample form gives sqrt(2)


# ---------------------------------------------------------------------------
# linefit / fit_taylor
# ---------------------------------------------------------------------------


class TestLineFit:
    def test_exact_line(self):
        lf = linefit([0.0, 1.0, 2.0], [1.0, 3.0, 5.0])
        assert lf.slope == pytest.approx(2.0, abs=1e-14)
        assert lf.intercept == pytest.approx(1.0, abs=1e-14)
        assert lf.se_slope == 0.0 and lf.p_slope == 0.0
        assert lf.adj_r2 == 1.0

    def test_hand_computed_inference(self):
        lf = linefit([0.0, 1.0, 2.0], [1.0, 2.9, 5.1])
        assert lf.slope == pytest.approx(2.05, abs=1e-12)
        assert lf.intercept == pytest.approx(0.95, abs=1e-12)
        assert lf.rss == pytest.approx(0.015, abs=1e-12)
        assert lf.se_slope == pytest.approx(math.sqrt(0.0075), abs=1e-12)
        assert round(lf.se_slope, 6) == 0.086603
        assert round(lf.adj_r2, 6) == 0.996437

    def test_too_few_points(self):
        with pytest.raises(InsufficientPointsError):
            linefit([0.0, 1.0], [0.0, 1.0])

    def test_degenerate_abscissa(self):
        with pytest.raises(DegenerateAbscissaError):
            linefit([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])


class TestFitTaylor:
    def test_hand_instance_through_logs(self):
        points = pts([1.0, 10.0, 100.0], [10.0, 10 ** 2.9, 10 ** 5.1])
        fit = fit_taylor(points)
        assert fit.b == pytest.approx(2.05, abs=1e-12)
        assert fit.log_a == pytest.approx(0.95, abs=1e-12)
        assert round(fit.se_b, 6) == 0.086603

    def test_zero_mean_or_variance_excluded(self):
        points = pts([1.0, 10.0, 100.0, 0.0, 5.0],
                     [10.0, 1000.0, 100000.0, 4.0, 0.0])
        fit = fit_taylor(points)
        assert fit.n == 3 and fit.excluded == 2

    def test_insufficient_after_exclusion(self):
        points = pts([1.0, 2.0, 0.0], [1.0, 4.0, 0.0])
        with pytest.raises(InsufficientPointsError):
            fit_taylor(points)

    def test_exact_power_law_recovery(self):
        rng = np.random.default_rng(5)
        m = 10 ** rng.uniform(-8, -6, 50)
        b, a = 2.31, 3.7e4
        fit = fit_taylor(pts(m, a * m ** b))
        assert abs(fit.b - b) < 1e-9
        assert abs(fit.log_a - math.log10(a)) < 1e-8
        # residuals collapse to rounding level
        assert fit.se_b == 0.0 and fit.p_b == 0.0 and fit.adj_r2 == 1.0

    def test_gamma_ensemble_oracle(self):
        # V = mu^2 / k exactly; sampled ensemble must recover b=2, log_a=-log10 k
        rng = np.random.default_rng(99)
        k = 4.0
        points = []
        for i in range(400):
            mu = 10 ** rng.uniform(-8, -6)
            x = rng.gamma(k, mu / k, 4000)
            points.append(mean_variance(series(x, iid=f"{i:06d}")))
        fit = fit_taylor(points)
        assert abs(fit.b - 2.0) < 3 * fit.se_b + 0.02
        assert abs(fit.log_a + math.log10(k)) < 3 * fit.se_log_a + 0.05

    def test_scale_equivariance(self):
        rng = np.random.default_rng(11)
        m = 10 ** rng.uniform(-8, -6, 40)
        v = 2.5e4 * m ** 2.2 * np.exp(rng.normal(0, 0.3, 40))
        base = fit_taylor(pts(m, v))
        c = 7.3
        scaled = fit_taylor(pts(m * c, v * c * c))
        assert scaled.b == pytest.approx(base.b, abs=1e-9)
        assert scaled.log_a - base.log_a == pytest.approx(
            (2 - base.b) * math.log10(c), abs=1e-9)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(21)
        m = 10 ** rng.uniform(-9, -5, 200)
        v = 1e3 * m ** 2.4 * np.exp(rng.normal(0, 0.5, 200))
        points = pts(m, v)
        f1 = fit_taylor(points)
        order = rng.permutation(len(points))
        f2 = fit_taylor([points[i] for i in order])
        for field in ("b", "se_b", "p_b", "log_a", "se_log_a", "p_a", "adj_r2"):
            a, bb = getattr(f1, field), getattr(f2, field)
            assert a == pytest.approx(bb, rel=1e-12, abs=1e-250)

    def test_matches_bruteforce_normal_equations(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(3, 101))
            x = rng.uniform(-4, 4, n)
            if np.ptp(x) == 0:
                continue
            y = rng.uniform(-1, 3) + rng.uniform(-3, 3) * x + rng.normal(0, 0.4, n)
            fit = fit_taylor(pts(10 ** x, 10 ** y))
            ref = _bruteforce_ols(x, y)
            for field, rv in ref.items():
                fv = getattr(fit, field)
                assert fv == pytest.approx(rv, rel=1e-9, abs=1e-12), field


def _bruteforce_ols(x, y):
    """Normal-equation fit with scipy inference; the independent route."""
    n = len(x)
    design = np.column_stack([np.ones(n), x])
    coef = np.linalg.solve(design.T @ design, design.T @ y)
    resid = y - design @ coef
    rss = float(resid @ resid)
    s2 = rss / (n - 2)
    cov = s2 * np.linalg.inv(design.T @ design)
    se = np.sqrt(np.diag(cov))
    tvals = coef / se
    p = 2 * sstats.t.sf(np.abs(tvals), n - 2)
    syy = float(np.sum((y - y.mean()) ** 2))
    r2 = 1 - rss / syy
    return {
        "b": coef[1], "log_a": coef[0], "se_b": se[1], "se_log_a": se[0],
        "p_b": p[1], "p_a": p[0],
        "adj_r2": 1 - (1 - r2) * (n - 1) / (n - 2),
    }


# ---------------------------------------------------------------------------
# t distribution machinery
# ---------------------------------------------------------------------------


class TestStudentT:
    def test_against_scipy_within_contract(self):
        for df in (1, 2, 3, 7, 30, 120, 2195):
            for t in (0.0, 0.3, 1.0, 2.2, 5.0, 12.0, 60.0):
                mine = t_two_sided_p(t, df)
                ref = 2 * sstats.t.sf(abs(t), df)
                assert mine == pytest.approx(ref, abs=1e-6)
                assert mine == pytest.approx(ref, rel=1e-9, abs=1e-300)

    def test_symmetry_and_edges(self):
        assert t_two_sided_p(-2.5, 9) == t_two_sided_p(2.5, 9)
        assert t_two_sided_p(0.0, 5) == 1.0
        assert t_two_sided_p(float("inf"), 5) == 0.0

    def test_betainc_against_scipy(self):
        from scipy import special
        for a in (0.5, 1.0, 2.5, 40.0):
            for b in (0.5, 1.5, 9.0):
                for x in np.linspace(0.001, 0.999, 17):
                    assert betainc_reg(a, b, x) == pytest.approx(
                        special.betainc(a, b, x), abs=1e-12)

    def test_intercept_pvalue_spot_check(self):
        # a coefficient-to-error ratio of 0.53/0.98 with 51 dof sits near 0.59
        assert t_two_sided_p(0.53 / 0.98, 51) == pytest.approx(0.59, abs=0.005)
