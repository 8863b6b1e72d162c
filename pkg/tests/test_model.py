import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skewvol.errors import DomainError
from skewvol.model import ModelParams, OptionSpec, Side, s_of_x, x_of_s

vols = st.floats(min_value=1e-3, max_value=5.0)


class TestModelParams:
    def test_derived_constants(self, params):
        assert params.p == pytest.approx(0.9 / 1.1, rel=1e-15)
        assert params.q == pytest.approx(0.2 / 1.1, rel=1e-15)
        assert params.sigma_atm0 == pytest.approx(2 * 0.2 * 0.9 / 1.1, rel=1e-15)

    @given(vols, vols)
    def test_p_plus_q(self, sp, sm):
        m = ModelParams(sp, sm)
        assert m.p + m.q == pytest.approx(1.0, abs=1e-15)
        assert min(sp, sm) * (1 - 1e-15) <= m.sigma_atm0 <= max(sp, sm) * (1 + 1e-15)

    @pytest.mark.parametrize("bad", [0.0, -0.1, math.nan, math.inf, 1e-13, 1e4])
    def test_rejects(self, bad):
        with pytest.raises(DomainError):
            ModelParams(bad, 0.3)
        with pytest.raises(DomainError):
            ModelParams(0.3, bad)

    def test_flat_model(self, flat):
        assert flat.p == flat.q == 0.5
        assert flat.sigma_atm0 == pytest.approx(0.3)
        assert flat.rel_gap == 0.0

    def test_sigma_at_threshold(self, params):
        assert params.sigma(0.0) == 0.2
        np.testing.assert_array_equal(params.sigma([-1e-300, 2.0]), [0.9, 0.2])

    def test_swapped(self, params):
        sw = params.swapped()
        assert (sw.sigma_plus, sw.sigma_minus) == (0.9, 0.2)
        assert sw.p == pytest.approx(params.q)

    def test_frozen(self, params):
        with pytest.raises(AttributeError):
            params.sigma_plus = 1.0


class TestOptionSpec:
    def test_side_from_string(self):
        assert OptionSpec(1.2, 1.0, "PUT").side is Side.PUT

    @pytest.mark.parametrize("K,T", [(0, 1), (-1, 1), (1, 0), (1, -2), (math.nan, 1), (1, math.inf)])
    def test_rejects(self, K, T):
        with pytest.raises(DomainError):
            OptionSpec(K, T)

    def test_log_strike(self):
        assert OptionSpec(math.e, 1).log_strike == pytest.approx(1.0)


class TestCoordinates:
    @given(st.floats(min_value=1e-6, max_value=1e6))
    def test_round_trip(self, s):
        m = ModelParams(0.2, 0.9)
        assert s_of_x(x_of_s(s, m), m) == pytest.approx(s, rel=1e-13)

    def test_sign_preserved(self, params):
        assert x_of_s(1.0, params) == 0.0
        assert x_of_s(1.5, params) == pytest.approx(math.log(1.5) / 0.2)
        assert x_of_s(0.5, params) == pytest.approx(math.log(0.5) / 0.9)

    def test_vectorized(self, params):
        s = np.array([0.5, 1.0, 2.0])
        np.testing.assert_allclose(s_of_x(x_of_s(s, params), params), s, rtol=1e-15)

    def test_rejects_nonpositive(self, params):
        with pytest.raises(DomainError):
            x_of_s([1.0, 0.0], params)
