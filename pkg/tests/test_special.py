"""Accuracy tests for the in-repo special functions against mpmath / scipy."""

import math

import mpmath as mp
import numpy as np
import pytest
import scipy.special as sp
import scipy.stats as st
from hypothesis import given, settings
from hypothesis import strategies as hst

from skewtvb.special import (
    GAUSSIAN_NU,
    betainc_reg,
    chi2_cdf,
    chi2_ppf,
    erfcx,
    erfcx_scalar,
    gammainc_lower_reg,
    norm_logcdf_scalar,
    norm_ppf,
    student_t_cdf,
    student_t_cdf_vec,
    student_t_logcdf,
    student_t_logcdf_vec,
    student_t_logpdf,
)

mp.mp.dps = 40


def mp_erfcx(x: float) -> float:
    return float(mp.erfc(mp.mpf(x)) * mp.e ** (mp.mpf(x) ** 2))


class TestErfcx:
    def test_accuracy_grid(self):
        # 1e-12 relative accuracy target; covers the range phi/Phi needs
        xs = np.concatenate([
            np.linspace(-26.0, 26.0, 1201),
            np.geomspace(1e-8, 1e8, 120),
            -np.geomspace(1e-8, 20.0, 80),
        ])
        for x in xs:
            ref = mp_erfcx(float(x))
            assert erfcx_scalar(float(x)) == pytest.approx(ref, rel=1e-12)

    def test_overflow_region_is_inf(self):
        assert math.isinf(erfcx_scalar(-27.0))
        assert math.isinf(erfcx_scalar(-1e6))

    def test_array_wrapper(self):
        xs = np.array([-1.0, 0.0, 2.5, 40.0])
        vals = erfcx(xs)
        assert vals.shape == xs.shape
        np.testing.assert_allclose(vals, sp.erfcx(xs), rtol=1e-12)

    @given(hst.floats(min_value=-25.0, max_value=100.0))
    @settings(max_examples=200, deadline=None, derandomize=True)
    def test_matches_scipy(self, x):
        assert erfcx_scalar(x) == pytest.approx(float(sp.erfcx(x)), rel=5e-12)


class TestNormal:
    def test_logcdf_tail(self):
        for x in [-40.0, -12.0, -3.0, -1.0, 0.0, 2.0]:
            assert norm_logcdf_scalar(x) == pytest.approx(
                float(st.norm.logcdf(x)), rel=1e-10, abs=1e-12)

    def test_ppf_roundtrip(self):
        for p in [1e-12, 1e-4, 0.3, 0.5, 0.975, 1 - 1e-10]:
            x = norm_ppf(p)
            assert st.norm.cdf(x) == pytest.approx(p, rel=1e-9)


class TestIncompleteFunctions:
    def test_betainc_against_scipy(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = float(rng.uniform(0.1, 50.0))
            b = float(rng.uniform(0.1, 50.0))
            x = float(rng.uniform(0.0, 1.0))
            assert betainc_reg(a, b, x) == pytest.approx(
                float(sp.betainc(a, b, x)), rel=1e-11, abs=1e-13)

    def test_gammainc_against_scipy(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a = float(rng.uniform(0.1, 60.0))
            x = float(rng.uniform(0.0, 100.0))
            assert gammainc_lower_reg(a, x) == pytest.approx(
                float(sp.gammainc(a, x)), rel=1e-11, abs=1e-13)


class TestStudentT:
    def test_cdf_accuracy(self):
        dfs = [1, 2, 3, 4, 4.5, 5, 6, 7.3, 10, 25, 100, 351, 1000]
        xs = [-300.0, -40.0, -6.0, -2.0, -0.5, 0.0, 0.7, 5.0, 30.0, 400.0]
        for df in dfs:
            for x in xs:
                ref = float(st.t.cdf(x, df))
                if ref == 0.0:
                    continue
                assert student_t_cdf(x, float(df)) == pytest.approx(ref, rel=1e-10)

    def test_logcdf_deep_tail(self):
        # finite and accurate where linear-space CDF underflows
        for df in [4.0, 5.0, 17.0]:
            for x in [-1e8, -1e4, -500.0, -50.0, -5.0]:
                ours = student_t_logcdf(x, df)
                ref = float(mp.log(mp.betainc(mp.mpf(df) / 2, mp.mpf("0.5"), x1=0,
                                              x2=df / (df + mp.mpf(x) ** 2),
                                              regularized=True) / 2))
                assert math.isfinite(ours)
                assert ours == pytest.approx(ref, rel=1e-10)

    def test_gaussian_limit(self):
        for x in [-8.0, -1.0, 0.0, 2.0]:
            assert student_t_cdf(x, GAUSSIAN_NU) == pytest.approx(
                float(st.norm.cdf(x)), rel=1e-12, abs=1e-300)

    def test_vectorized_matches_scalar(self):
        xs = np.linspace(-30, 30, 301)
        for df in [1.0, 4.0, 5.0, 8.0, 30.0]:
            vec = student_t_cdf_vec(xs, df)
            ref = np.array([student_t_cdf(float(x), df) for x in xs])
            np.testing.assert_allclose(vec, ref, rtol=5e-9, atol=1e-300)
            vec_log = student_t_logcdf_vec(xs, df)
            ref_log = np.array([student_t_logcdf(float(x), df) for x in xs])
            np.testing.assert_allclose(vec_log, ref_log, rtol=5e-9, atol=1e-12)

    def test_logpdf_against_scipy(self):
        xs = np.linspace(-50, 50, 101)
        for df in [0.7, 3.0, 4.0, 120.0]:
            np.testing.assert_allclose(student_t_logpdf(xs, df),
                                       st.t.logpdf(xs, df), rtol=1e-10, atol=1e-10)

    def test_rejects_bad_df(self):
        with pytest.raises(ValueError):
            student_t_cdf(0.0, -1.0)


class TestChi2:
    def test_ppf_published_value(self):
        # 99% quantile of chi2 with 1 dof, cross-checked against the table 6.63
        q = chi2_ppf(0.99, 1.0)
        assert q == pytest.approx(6.63, abs=0.01)
        assert q == pytest.approx(float(st.chi2.ppf(0.99, 1)), rel=1e-9)

    def test_ppf_against_scipy(self):
        for df in [1, 2, 3, 8, 40]:
            for p in [1e-6, 0.01, 0.5, 0.95, 0.99, 1 - 1e-9]:
                assert chi2_ppf(p, float(df)) == pytest.approx(
                    float(st.chi2.ppf(p, df)), rel=1e-8)

    def test_cdf_roundtrip(self):
        for df in [1.0, 5.0]:
            for p in [0.1, 0.6, 0.999]:
                assert chi2_cdf(chi2_ppf(p, df), df) == pytest.approx(p, rel=1e-10)

    def test_edge_cases(self):
        assert chi2_ppf(0.0, 3.0) == 0.0
        assert math.isinf(chi2_ppf(1.0, 3.0))
        with pytest.raises(ValueError):
            chi2_ppf(1.5, 1.0)
