"""Homogeneity statistics: LRTs, C(alpha) and KS."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mixturekit.exceptions import InvalidArgumentError
from mixturekit.homogeneity import (
    CAlphaSpec,
    TestResult,
    calpha_general,
    calpha_test,
    calpha_zn,
    chen_loglik,
    chibar_critical,
    gaussian_location_spec,
    kw_lrt,
    ks_stat,
    null_mle,
    parametric_lrt,
    uniform_loglik,
)
from mixturekit.model import Grid, Sample, bin_sample, build_grid, log_likelihood

seeds = st.integers(0, 2**32 - 1)


def normal_sample(seed, n=100, loc=0.0, scale=1.0):
    return Sample.from_observations(np.random.default_rng(seed).normal(loc, scale, n))


# --------------------------------------------------------------------------
# independent chi-square oracle: regularised lower incomplete gamma
# --------------------------------------------------------------------------


def _gammainc_lower(a, x):
    """P(a, x) by the power series (x < a + 1) or Lentz's continued fraction."""
    if x <= 0:
        return 0.0
    log_pre = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1:
        term = total = 1.0 / a
        k = a
        while abs(term) > 1e-17 * abs(total):
            k += 1
            term *= x / k
            total += term
        return total * math.exp(log_pre)
    tiny = 1e-300
    b = x + 1 - a
    c, d = 1 / tiny, 1 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1 / d
        h *= d * c
        if abs(d * c - 1) < 1e-16:
            break
    return 1.0 - h * math.exp(log_pre)


def chi2_quantile_oracle(p, df=1):
    lo, hi = 0.0, 100.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _gammainc_lower(df / 2, mid / 2) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestChiBar:
    @pytest.mark.parametrize("alpha, expect", [(0.05, 2.705543), (0.01, 5.411894)])
    def test_table_values(self, alpha, expect):
        assert chibar_critical(alpha) == pytest.approx(expect, abs=5e-7)
        assert chibar_critical(alpha) == pytest.approx(chi2_quantile_oracle(1 - 2 * alpha), abs=1e-9)

    @given(alpha=st.floats(1e-6, 0.499))
    def test_against_oracle(self, alpha):
        assert chibar_critical(alpha) == pytest.approx(chi2_quantile_oracle(1 - 2 * alpha), abs=1e-8)

    def test_half(self):
        with pytest.warns(UserWarning):
            assert chibar_critical(0.5) == 0.0

    @pytest.mark.parametrize("alpha", [0.0, -0.1])
    def test_nonpositive(self, alpha):
        with pytest.raises(InvalidArgumentError):
            chibar_critical(alpha)

    @pytest.mark.invariant
    @given(a=st.floats(1e-4, 0.49), b=st.floats(1e-4, 0.49))
    def test_strictly_decreasing(self, a, b):
        if abs(a - b) > 1e-9:
            lo, hi = min(a, b), max(a, b)
            assert chibar_critical(lo) > chibar_critical(hi)


class TestCAlpha:
    def test_examples(self):
        assert calpha_zn(Sample.from_observations([-3.0, 3.0])) == pytest.approx(8.0)
        assert calpha_zn(Sample.from_observations([0.0, 2.0])) == pytest.approx(0.0, abs=1e-15)

    def test_constant_sample_never_rejects(self):
        s = Sample.from_observations(np.full(50, 1.7))
        assert calpha_zn(s) == pytest.approx(-5.0)
        res = calpha_test(s)
        assert res.statistic == 0.0 and not res.reject

    def test_needs_two(self):
        with pytest.raises(InvalidArgumentError):
            calpha_zn(Sample.from_observations([1.0]))

    def test_decision(self):
        res = calpha_test(Sample.from_observations([-3.0, 3.0]))
        assert res.statistic == pytest.approx(64.0) and res.reject
        assert res.critical_value == pytest.approx(2.705543, abs=1e-6)

    @pytest.mark.invariant
    @given(seed=seeds, c=st.floats(-100, 100))
    def test_shift_invariance(self, seed, c):
        x = np.random.default_rng(seed).standard_normal(60)
        a = calpha_zn(Sample.from_observations(x))
        b = calpha_zn(Sample.from_observations(x + c))
        assert abs(a - b) <= 1e-12

    @pytest.mark.invariant
    def test_general_form_reproduces_scalar(self):
        spec = gaussian_location_spec()
        for seed in range(100):
            s = normal_sample(seed, n=40, scale=1.3)
            assert calpha_general(spec, s, null_mle(s)) == pytest.approx(calpha_zn(s), abs=1e-12)

    def test_tau_does_not_matter(self):
        s = normal_sample(1, 80, scale=1.2)
        base = calpha_general(gaussian_location_spec(), s, null_mle(s))
        assert calpha_general(gaussian_location_spec(tau=2.5), s, null_mle(s)) == pytest.approx(base, rel=1e-12)

    def test_zero_nuisance_score(self):
        s = normal_sample(2, 30)
        zero = CAlphaSpec(score2=lambda x, t: (x - t) ** 2 - 1, score1=lambda x, t: np.zeros((x.size, 1)),
                          J11=2.0, J12=np.zeros(1), J22=np.eye(1))
        expect = float(np.sum((s.support - 0.1) ** 2 - 1)) / math.sqrt(30) / math.sqrt(2.0)
        assert calpha_general(zero, s, 0.1) == pytest.approx(expect, rel=1e-12)

    def test_projection(self):
        s = normal_sample(3, 30)
        spec = CAlphaSpec(score2=lambda x, t: (x - t) ** 2 - 1, score1=lambda x, t: (x - t)[:, None],
                          J11=2.0, J12=np.array([0.5]), J22=np.array([[1.0]]))
        s1 = float(np.sum((s.support - 0.2) ** 2 - 1)) / math.sqrt(30)
        s2 = float(np.sum(s.support - 0.2)) / math.sqrt(30)
        expect = (s1 - 0.5 * s2) / math.sqrt(2.0 - 0.25)
        assert calpha_general(spec, s, 0.2) == pytest.approx(expect, rel=1e-12)

    def test_spec_validation(self):
        with pytest.raises(InvalidArgumentError):
            CAlphaSpec(score2=None, score1=None, J11=1.0, J12=np.zeros(2), J22=np.eye(1))
        s = normal_sample(4, 10)
        bad = CAlphaSpec(score2=lambda x, t: x, score1=lambda x, t: x[:, None], J11=0.1,
                         J12=np.array([1.0]), J22=np.eye(1))
        with pytest.raises(InvalidArgumentError):
            calpha_general(bad, s, 0.0)
        singular = CAlphaSpec(score2=lambda x, t: x, score1=lambda x, t: x[:, None], J11=1.0,
                              J12=np.array([0.0]), J22=np.zeros((1, 1)))
        with pytest.raises(InvalidArgumentError):
            calpha_general(singular, s, 0.0)


class TestParametric:
    def test_gauss_scale_closed_form(self):
        x = np.r_[np.full(50, math.sqrt(2.0)), np.full(50, -math.sqrt(2.0))]
        res = parametric_lrt(Sample.from_observations(x), "gauss_scale")
        assert res.statistic == pytest.approx(30.68528, abs=1e-5)
        assert res.name == "gauss_scale_lrt"

    def test_gauss_scale_boundary(self):
        x = np.r_[np.full(10, 0.5), np.full(10, -0.5)]
        assert parametric_lrt(Sample.from_observations(x), "gauss_scale").statistic == 0.0

    def test_chen_at_zero(self):
        res = parametric_lrt(Sample.from_observations(np.zeros(20)), "chen", lam=1 / 3)
        assert res.statistic == pytest.approx(0.0, abs=1e-10)
        assert res.diagnostics["h_hat"] == pytest.approx(0.0, abs=1e-6)

    def test_chen_recovers_alternative(self):
        r = np.random.default_rng(8)
        n = 4000
        theta = np.where(r.random(n) < 1 / 3, -1.5, 0.75)
        res = parametric_lrt(Sample.from_observations(theta + r.standard_normal(n)), "chen", lam=1 / 3)
        assert res.diagnostics["h_hat"] == pytest.approx(0.5, abs=0.1)
        assert res.statistic > 50

    def test_uniform_small_h_limit(self):
        s = normal_sample(9, 30)
        assert uniform_loglik(s, 1e-9) == pytest.approx(log_likelihood(s, 0.0), rel=1e-12)
        assert uniform_loglik(s, 1e-4) == pytest.approx(log_likelihood(s, 0.0), rel=1e-7)

    def test_uniform_far_tail_is_finite(self):
        s = Sample.from_observations([40.0, -40.0])
        assert math.isfinite(uniform_loglik(s, 0.5))

    def test_chen_loglik_reference(self):
        s = Sample.from_observations([0.3, -1.2])
        lam, h = 0.25, 0.4
        phi = lambda z: math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
        expect = sum(math.log((1 - lam) * phi(x - h / (1 - lam)) + lam * phi(x + h / lam)) for x in (0.3, -1.2))
        assert chen_loglik(s, h, lam) == pytest.approx(expect, rel=1e-13)

    @pytest.mark.parametrize("kw", [dict(family="chen"), dict(family="chen", lam=1.0),
                                    dict(family="other"), dict(family="uniform", h_max=0.0)])
    def test_validation(self, kw):
        with pytest.raises(InvalidArgumentError):
            parametric_lrt(normal_sample(1, 10), **kw)

    @pytest.mark.invariant
    @given(seed=seeds, family=st.sampled_from(["chen", "uniform", "gauss_scale"]),
           lam=st.floats(0.05, 0.95), scale=st.floats(0.5, 2.0))
    def test_nonnegative(self, seed, family, lam, scale):
        s = normal_sample(seed, 40, scale=scale)
        assert parametric_lrt(s, family, lam=lam).statistic >= 0.0


class TestKW:
    def test_point_data_on_grid(self):
        res = kw_lrt(Sample.from_observations(np.full(30, 0.5)), build_grid(-2, 2, spacing=0.5))
        assert res.statistic == pytest.approx(0.0, abs=1e-6)
        assert res.diagnostics["converged"]

    @pytest.mark.invariant
    @given(seed=seeds, n=st.integers(5, 150), binned=st.booleans())
    def test_dominates_best_point_mass(self, seed, n, binned):
        s = normal_sample(seed, n, loc=0.2)
        if binned:
            s = bin_sample(s, 20)
        grid = build_grid(-3, 3, spacing=0.05)
        res = kw_lrt(s, grid)
        best_point = max(log_likelihood(s, t) for t in grid.points)
        assert res.statistic >= 2 * (best_point - log_likelihood(s, null_mle(s))) - 1e-6
        assert res.nuisance == pytest.approx(null_mle(s))

    def test_detects_two_components(self):
        r = np.random.default_rng(4)
        x = np.r_[r.normal(-2, 1, 200), r.normal(2, 1, 200)]
        res = kw_lrt(Sample.from_observations(x), build_grid(-4, 4, spacing=0.02), critical_value=8.0)
        assert res.reject and res.statistic > 100


class TestKS:
    def test_single_observation(self):
        assert ks_stat(Sample.from_observations([2.3])) == pytest.approx(0.5)

    def test_two_points(self):
        from scipy.special import ndtr

        F = ndtr(np.array([-1.0, 1.0]))
        expect = max(0.5 - F[0], F[0] - 0.0, 1.0 - F[1], F[1] - 0.5)
        assert ks_stat(Sample.from_observations([-1.0, 1.0])) == pytest.approx(expect, rel=1e-14)

    def test_matches_scipy(self):
        from scipy.stats import kstest

        x = np.random.default_rng(6).standard_normal(57)
        ref = kstest(x - x.mean(), "norm").statistic
        assert ks_stat(Sample.from_observations(x)) == pytest.approx(ref, rel=1e-12)

    @pytest.mark.invariant
    @given(seed=seeds, c=st.floats(-50, 50))
    def test_shift_invariance(self, seed, c):
        x = np.random.default_rng(seed).standard_normal(30)
        assert ks_stat(Sample.from_observations(x + c)) == pytest.approx(ks_stat(Sample.from_observations(x)),
                                                                         abs=1e-9)

    def test_binned_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ks_stat(bin_sample(normal_sample(1, 50), 5))


class TestResultType:
    def test_reject_follows_statistic(self):
        assert TestResult("ks", 0.3, 0.2).reject
        assert not TestResult("ks", 0.2, 0.2).reject
        assert not TestResult("ks", 5.0).reject  # NaN critical value

    def test_null_mle(self):
        assert null_mle(Sample.from_observations([-3, 3])) == 0.0
        assert null_mle(Sample.from_observations([0, 0, 1, 1])) == 0.5
        assert null_mle(Sample(np.array([0.25, 0.75]), np.array([2.0, 2.0]), binned=True)) == 0.5
