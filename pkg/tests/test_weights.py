import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geomsb.weights import (
    WeightFamily,
    as_family,
    log_weight_derivatives,
    negbin_pmf,
    tail_mass,
    weight,
    weights_upto,
)

probabilities = st.floats(min_value=1e-3, max_value=0.999)


def pmf_tail_weight(s, p, j, rmax=4000):
    """Definitional weight: sum over r >= j of pmf(r) / r."""
    r = np.arange(j, rmax + 1)
    return math.fsum(negbin_pmf(s, p, r) / r)


class TestWeightFamily:
    def test_rejects_small_scale(self):
        with pytest.raises(ValueError):
            WeightFamily(1)

    def test_rejects_non_integer_scale(self):
        with pytest.raises(ValueError):
            WeightFamily(2.5)

    def test_as_family_accepts_int(self):
        assert as_family(3) == WeightFamily(3)
        assert as_family(WeightFamily(4)).s == 4


class TestWeight:
    @pytest.mark.parametrize("s, p, j, expected", [
        (2, 0.5, 1, 0.5),
        (3, 0.5, 1, 0.375),
        (3, 0.5, 3, 0.15625),
    ])
    def test_values(self, s, p, j, expected):
        np.testing.assert_allclose(weight(s, p, j), expected, rtol=1e-14)

    def test_s3_first_weight_matches_pmf_tail_sum(self):
        np.testing.assert_allclose(pmf_tail_weight(3, 0.5, 1, 400), 0.375, rtol=1e-13)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, np.nan])
    def test_invalid_p(self, p):
        with pytest.raises(ValueError):
            weight(2, p, 1)

    def test_invalid_index(self):
        with pytest.raises(ValueError):
            weight(2, 0.5, 0)
        with pytest.raises(ValueError):
            weight(2, 0.5, 1.5)

    @pytest.mark.parametrize("s", [2, 3, 4])
    @pytest.mark.parametrize("p", [0.05, 0.3, 0.5, 0.9])
    def test_closed_forms_match_definition(self, s, p):
        for j in (1, 2, 5, 17):
            np.testing.assert_allclose(weight(s, p, j), pmf_tail_weight(s, p, j), rtol=1e-12)

    @pytest.mark.parametrize("p", [0.1, 0.6])
    def test_general_scale_matches_definition(self, p):
        for j in (1, 3, 10):
            np.testing.assert_allclose(weight(6, p, j), pmf_tail_weight(6, p, j), rtol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(p=probabilities, s=st.integers(2, 5))
    def test_strictly_decreasing(self, p, s):
        w = weights_upto(s, p, 1000)
        positive = w > 1e-290  # subnormals lose resolution
        assert np.all(np.diff(w[positive]) < 0)

    def test_weights_upto_matches_weight(self):
        w = weights_upto(3, 0.2, 12)
        expected = [weight(3, 0.2, j) for j in range(1, 13)]
        np.testing.assert_allclose(w, expected, rtol=1e-14)


class TestNegbinPmf:
    @pytest.mark.parametrize("s, p, r, expected", [
        (2, 0.5, 1, 0.25),
        (3, 0.5, 1, 0.125),
        (3, 0.4, 4, math.comb(5, 3) * 0.4**3 * 0.6**3),
    ])
    def test_values(self, s, p, r, expected):
        np.testing.assert_allclose(negbin_pmf(s, p, r), expected, rtol=1e-13)

    def test_boundary_p_rejected(self):
        with pytest.raises(ValueError):
            negbin_pmf(2, 1.0, 1)

    @pytest.mark.parametrize("s", [2, 3, 7])
    def test_sums_to_one(self, s):
        r = np.arange(1, 3000)
        np.testing.assert_allclose(negbin_pmf(s, 0.3, r).sum(), 1.0, atol=1e-13)

    def test_s2_tail_is_geometric(self):
        p = 0.35
        for j in (1, 4, 9):
            np.testing.assert_allclose(pmf_tail_weight(2, p, j), p * (1 - p) ** (j - 1), rtol=1e-12)


class TestTailMass:
    def test_full_mass(self):
        assert tail_mass(2, 0.5, 0) == 1.0

    def test_geometric(self):
        np.testing.assert_allclose(tail_mass(2, 0.5, 2), 0.25, rtol=1e-15)

    def test_s3_against_brute_sum(self):
        brute = math.fsum(weight(3, 0.5, j) for j in range(3, 201))
        np.testing.assert_allclose(tail_mass(3, 0.5, 2), brute, atol=1e-12)
        np.testing.assert_allclose(brute, 0.375, atol=1e-12)

    @pytest.mark.parametrize("s", [2, 3, 4, 5, 8])
    @pytest.mark.parametrize("p", [0.02, 0.3, 0.77])
    @pytest.mark.parametrize("J", [0, 1, 10, 100])
    def test_normalization(self, s, p, J):
        head = math.fsum(weights_upto(s, p, J)) if J else 0.0
        assert abs(1.0 - tail_mass(s, p, J) - head) <= 1e-12

    def test_negative_J(self):
        with pytest.raises(ValueError):
            tail_mass(2, 0.5, -1)


class TestLogWeightDerivatives:
    def test_geometric_is_linear(self):
        d = log_weight_derivatives(2, 0.3, np.array([2.0, 7.0]))
        np.testing.assert_allclose(d[0], math.log(0.3) + np.array([1.0, 6.0]) * math.log1p(-0.3), rtol=1e-14)
        np.testing.assert_allclose(d[1], math.log1p(-0.3), rtol=1e-14)
        np.testing.assert_array_equal(d[2], 0.0)

    @pytest.mark.parametrize("s", [3, 4])
    def test_matches_finite_differences(self, s):
        p, k, h = 0.2, 5.0, 1e-4
        y = lambda kk: log_weight_derivatives(s, p, kk)[0]
        d = log_weight_derivatives(s, p, k)
        np.testing.assert_allclose(d[0], math.log(weight(s, p, 5)), rtol=1e-13)
        np.testing.assert_allclose(d[1], (y(k + h) - y(k - h)) / (2 * h), rtol=1e-7)
        np.testing.assert_allclose(d[2], (y(k + h) - 2 * y(k) + y(k - h)) / h**2, rtol=1e-4, atol=1e-8)
