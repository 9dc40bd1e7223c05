import math

import numpy as np
import pytest
from scipy import integrate

from geomsb.expansions import (
    ExpansionReport,
    de_haan_constant,
    de_haan_estimate,
    expand_fixed_p,
    expand_loggamma_m,
    expand_negbin_s3,
    expand_rho,
    expand_uniform_s2,
    fixed_p_floor_term,
    log_power,
    r_of_x,
    r_remainder,
)
from geomsb.priors import Uniform
from geomsb.specialfn import EULER_GAMMA, INV_E, f_t
from geomsb.tail_measure import m_of_x

# int_0^inf t (1 - f(t)) dt + 1/2, from a 40-digit mpmath quadrature
UNIFORM_X_CONSTANT = 1.02905296994043902


def decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))


class TestReport:
    def test_sum_identity(self):
        report = ExpansionReport("demo", "x", 0.1, (("a", 0.1), ("b", 0.2), ("c", 0.3)), 1.0, "none", 2.0)
        assert report.predicted_total == math.fsum([0.1, 0.2, 0.3])
        assert report.residual == 1.0 - report.predicted_total
        assert report.normalized_residual == report.residual / 2.0
        assert report.term("b") == 0.2
        with pytest.raises(KeyError):
            report.term("d")

    @pytest.mark.parametrize("build", [
        lambda: expand_uniform_s2(n=1000),
        lambda: expand_negbin_s3(t=1e5),
        lambda: expand_loggamma_m(2, t=1e5),
    ])
    def test_predicted_is_sum_of_terms(self, build):
        report = build()
        assert report.predicted_total == math.fsum(v for _, v in report.terms)

    @pytest.mark.parametrize("build", [lambda: expand_uniform_s2(t=1e6), lambda: expand_negbin_s3(n=1000)])
    def test_gamma_terms_cancel(self, build):
        report = build()
        assert report.term("-gamma L") + report.term("tauberian") == 0.0

    def test_one_argument(self):
        with pytest.raises(ValueError):
            expand_uniform_s2(n=10, x=0.1)
        with pytest.raises(ValueError):
            expand_uniform_s2()


class TestFixedP:
    def test_floor_term_at_power_of_two(self):
        report = expand_fixed_p(0.5, 2**20 * 2)
        assert report.term("floor") == 21.0
        assert fixed_p_floor_term(0.5, 2**21) == 21

    def test_residual_at_powers_of_two(self):
        # log(np)/|log(1-p)| is an integer here, so the floor sawtooth sits at -1/2
        gaps = [abs(expand_fixed_p(0.5, 2**k).residual + 0.5) for k in range(12, 23)]
        assert decreasing(gaps)
        assert gaps[-1] < 2e-6

    @pytest.mark.parametrize("n", [10**4, 10**5, 10**6, 3 * 10**6])
    def test_residual_is_sawtooth(self, n):
        p = 0.9
        y = math.log(n * p) / -math.log1p(-p)
        report = expand_fixed_p(p, n)
        # the smooth remainder is a small log-periodic oscillation
        assert abs(report.residual - (y - math.floor(y) - 0.5)) < 0.02

    def test_domain(self):
        with pytest.raises(ValueError):
            expand_fixed_p(1.0, 100)
        with pytest.raises(ValueError):
            expand_fixed_p(0.5, 1)


class TestUniform:
    def test_x_form_terms(self):
        report = expand_uniform_s2(x=1e-10)
        L = math.log(1e10)
        assert report.term("L^2/2") == 0.5 * L**2
        assert report.term("-gamma L") == -EULER_GAMMA * L

    def test_x_residual_band(self):
        residuals = [expand_uniform_s2(x=x).residual for x in (1e-4, 1e-6, 1e-8)]
        np.testing.assert_allclose(residuals, UNIFORM_X_CONSTANT, atol=2e-3)

    def test_t_residual_decreasing(self):
        values = [abs(expand_uniform_s2(t=t).normalized_residual) for t in (1e6, 1e8, 1e10, 1e12)]
        assert decreasing(values)

    @pytest.mark.parametrize("kw", [dict(x=INV_E), dict(x=0.5), dict(n=2), dict(t=1.0)])
    def test_domain(self, kw):
        with pytest.raises(ValueError):
            expand_uniform_s2(**kw)


class TestLogGamma:
    def test_m_zero_delegates(self):
        assert expand_loggamma_m(0, n=500) == expand_uniform_s2(n=500)

    def test_bad_m(self):
        with pytest.raises(ValueError):
            expand_loggamma_m(-1, n=10)
        with pytest.raises(ValueError):
            expand_loggamma_m(1.5, n=10)

    def test_m1_residual_decreasing(self):
        values = [abs(expand_loggamma_m(1, t=t).normalized_residual) for t in (1e8, 1e10, 1e12)]
        assert decreasing(values)

    def test_m2_tail_leading_term(self):
        errors = [abs(expand_loggamma_m(2, x=x).ratio - 1) for x in (1e-8, 1e-10, 1e-12)]
        assert errors[-1] < 0.1
        assert decreasing(errors)


class TestRho:
    def test_integer_rho_matches_loggamma(self):
        a = expand_rho(1.0, t=1e10).terms[0][1]
        b = expand_loggamma_m(1, t=1e10).term("L^(m+2)/(m+2)!")
        np.testing.assert_allclose(a, b, rtol=1e-15)

    @pytest.mark.parametrize("rho", [0.5, -0.5])
    def test_ratio_trend(self, rho):
        errors = [abs(expand_rho(rho, t=t).ratio - 1) for t in (1e8, 1e10, 1e12)]
        assert decreasing(errors)

    def test_marks_second_order(self):
        assert expand_rho(0.5, t=1e4).notes == ("second-order term unavailable",)

    def test_domain(self):
        with pytest.raises(ValueError):
            expand_rho(-1.0, t=1e4)


class TestNegbin:
    def test_x_residual(self):
        values = [abs(expand_negbin_s3(x=x).normalized_residual) for x in (1e-8, 1e-10, 1e-12)]
        assert values[-1] < 0.5
        assert decreasing(values)

    def test_x_form_has_no_tauberian(self):
        labels = [label for label, _ in expand_negbin_s3(x=1e-3).terms]
        assert labels == ["L^2/2", "L log L", "-gamma L", "-(1+log 2) L"]

    def test_domain(self):
        with pytest.raises(ValueError):
            expand_negbin_s3(x=INV_E)


class TestDeHaan:
    def test_constants(self):
        assert de_haan_constant(1) == -0.5
        assert de_haan_constant(2) == 1 / 6
        assert de_haan_constant(3) == -1 / 24

    def test_exact_log(self):
        # tail_fn = log^2 / 2 gives c = 1 up to log(lam)/(2 log x)
        tail = lambda x: 0.5 * math.log(x) ** 2
        c = de_haan_estimate(tail, 1e-100, 2.0, math.log)
        np.testing.assert_allclose(c, 1 + math.log(2) / (2 * math.log(1e-100)), rtol=1e-12)

    def test_lambda_stability(self):
        tail = lambda x: m_of_x(Uniform(), 2, x)
        values = [de_haan_estimate(tail, 1e-12, lam, math.log) for lam in (2.0, 4.0, 10.0)]
        assert max(values) / min(values) - 1 < 0.1
        assert abs(values[0] - 1) < 0.1

    def test_log_power(self):
        assert log_power(2)(math.e**3) == pytest.approx(9.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            de_haan_estimate(math.log, 0.1, 1.0, math.log)
        with pytest.raises(ValueError):
            de_haan_estimate(math.log, 1.0, 2.0, math.log)


class TestR:
    def test_near_one(self):
        # the integrand stays O(f) near t = 0, so r(1+) is a small positive number
        values = [r_of_x(1.0 + h) for h in (1e-6, 1e-3, 0.1, 1.0)]
        assert 0 < values[0] < 0.2
        assert decreasing(values[::-1])

    def test_domain(self):
        with pytest.raises(ValueError):
            r_of_x(1.0)

    def test_remainder_relative_decay(self):
        values = [abs(r_remainder(x)) / x for x in (10.0, 1e2, 1e3, 1e4)]
        assert decreasing(values)

    def test_remainder_log_scale(self):
        values = [abs(r_remainder(x)) / math.log(x) for x in (10.0, 1e2, 1e3, 1e4)]
        assert max(values) < 1.0

    def test_against_scipy(self):
        x = 7.0
        g = lambda t: math.log1p((x - t) * f_t(t)) * f_t(t)
        expected, _ = integrate.quad(g, 0, x, points=[1e-6, 1e-3, 1.0], epsabs=1e-13, limit=200)
        np.testing.assert_allclose(r_of_x(x), expected, atol=1e-8 * x)
