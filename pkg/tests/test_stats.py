"""Paired t-test and incomplete-beta numerics against independent oracles."""

import math

import numpy as np
import pytest
import scipy.special
import scipy.stats

from bptk.stats import (
    DegenerateStatisticError,
    mean_sd_ci,
    paired_t_test,
    regularized_incomplete_beta,
    student_t_cdf,
    student_t_ppf,
    student_t_two_sided_p,
)

# Frozen oracle value for d = (1,2,3,4,5): t = 3 / (sqrt(2.5)/sqrt(5)) = 4.2426...
# p was cross-checked against scipy.stats.ttest_rel and a 1e7-sample Monte
# Carlo of t(4) variates (MC gave 0.0132546, SE ~ 3.6e-5).
T_EXAMPLE = 3.0 / math.sqrt(0.5)
P_EXAMPLE = 0.01323559956368269


class TestIncompleteBeta:
    def test_against_scipy_grid(self):
        rng = np.random.default_rng(7)
        for _ in range(500):
            a = float(rng.uniform(0.3, 30.0))
            b = float(rng.uniform(0.3, 30.0))
            x = float(rng.uniform(0.0, 1.0))
            ours = regularized_incomplete_beta(a, b, x)
            ref = float(scipy.special.betainc(a, b, x))
            assert abs(ours - ref) < 1e-10

    def test_endpoints(self):
        assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
        assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0

    def test_rejects_bad_domain(self):
        with pytest.raises(ValueError):
            regularized_incomplete_beta(2.0, 3.0, 1.5)
        with pytest.raises(ValueError):
            regularized_incomplete_beta(-1.0, 3.0, 0.5)


class TestStudentT:
    def test_cdf_against_scipy(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            t = float(rng.uniform(-8, 8))
            df = int(rng.integers(1, 40))
            assert abs(student_t_cdf(t, df) - scipy.stats.t.cdf(t, df)) < 1e-12

    def test_ppf_roundtrip(self):
        for q in (0.025, 0.1, 0.5, 0.9, 0.975, 0.999):
            for df in (1, 2, 4, 10, 30):
                t = student_t_ppf(q, df)
                assert abs(student_t_cdf(t, df) - q) < 1e-10

    def test_two_sided_p_symmetric(self):
        assert student_t_two_sided_p(2.5, 7) == student_t_two_sided_p(-2.5, 7)

    def test_t_zero_gives_p_one(self):
        assert student_t_two_sided_p(0.0, 4) == 1.0


class TestPairedTTest:
    def test_identical_samples(self):
        r = paired_t_test([0.7, 0.8, 0.9, 0.6, 0.5], [0.7, 0.8, 0.9, 0.6, 0.5])
        assert r.t == 0.0
        assert r.p == 1.0

    def test_frozen_example(self):
        r = paired_t_test([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
        assert r.t == pytest.approx(T_EXAMPLE, abs=1e-12)
        assert r.p == pytest.approx(P_EXAMPLE, abs=1e-12)
        assert r.p == pytest.approx(0.0132, abs=1e-4)

    def test_matches_scipy_on_random_pairs(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(2, 12))
            a = rng.normal(size=n)
            b = rng.normal(size=n)
            if np.std(a - b, ddof=1) == 0:
                continue
            ours = paired_t_test(a, b)
            ref = scipy.stats.ttest_rel(a, b)
            assert ours.t == pytest.approx(ref.statistic, rel=1e-12)
            assert ours.p == pytest.approx(ref.pvalue, rel=1e-9)

    def test_antisymmetry(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=6)
        b = rng.normal(size=6)
        fwd = paired_t_test(a, b)
        rev = paired_t_test(b, a)
        assert fwd.t == -rev.t
        assert fwd.p == rev.p

    def test_zero_variance_nonzero_mean(self):
        r = paired_t_test([1.0, 1.0, 1.0], [0.0, 0.0, 0.0])
        assert r.p == 0.0
        assert r.degenerate
        assert math.isinf(r.t)

    def test_too_short(self):
        with pytest.raises(DegenerateStatisticError):
            paired_t_test([1.0], [2.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            paired_t_test([1.0, 2.0], [1.0])


class TestMeanCi:
    def test_matches_scipy_interval(self):
        values = [0.81, 0.79, 0.84, 0.77, 0.80]
        mean, sd, (lo, hi) = mean_sd_ci(values)
        ref_lo, ref_hi = scipy.stats.t.interval(
            0.95, len(values) - 1, loc=np.mean(values), scale=scipy.stats.sem(values)
        )
        assert mean == pytest.approx(np.mean(values))
        assert sd == pytest.approx(np.std(values, ddof=1))
        assert lo == pytest.approx(ref_lo, abs=1e-10)
        assert hi == pytest.approx(ref_hi, abs=1e-10)
