import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracle_values import ATM_SLOPE, CALL, SKEW_LIMIT
from skewvol.errors import DomainError
from skewvol.implied import (
    Axis,
    Branch,
    SmileRow,
    atm_implied_vol,
    atm_skew_exact,
    atm_slope_richardson,
    central_limit_gap,
    clr_limit,
    clr_sigma,
    dC_dk,
    default_fd_step,
    implied_vol,
    skew_asymptote,
    skew_exact,
    skew_fd,
    smile,
)
from skewvol.model import ModelParams, OptionSpec, Side
from skewvol.pricing import bs_price, bs_vega, price


class TestImpliedVol:
    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.02, 3.0), st.floats(0.5, 2.0), st.floats(0.05, 5.0), st.sampled_from(list(Side)))
    def test_round_trip(self, sigma, K, T, side):
        spec = OptionSpec(K, T, side)
        target = bs_price(sigma, K, T, side)
        lower = max(1 - K, 0) if side is Side.CALL else max(K - 1, 0)
        if target - lower < 1e-10:
            return  # too deep to invert to useful precision
        vega = float(bs_vega(sigma, K, T))
        got = implied_vol(target, spec)
        assert abs(got - sigma) <= 1e-12 / max(vega, 1e-300) + 1e-12

    def test_known_value(self):
        assert implied_vol(bs_price(0.25, 1.1, 2.0, Side.CALL), OptionSpec(1.1, 2.0)) == pytest.approx(0.25, rel=1e-13)

    @pytest.mark.parametrize("target", [0.0, 1.0, 1.5, -0.1, math.nan])
    def test_outside_band(self, target):
        with pytest.raises(DomainError):
            implied_vol(target, OptionSpec(1.0, 1.0))

    def test_below_intrinsic_names_bound(self):
        with pytest.raises(DomainError, match="intrinsic"):
            implied_vol(0.2, OptionSpec(0.7, 1.0))


class TestAtm:
    def test_closed_form_vs_solver(self, params):
        T = 1.0
        v = atm_implied_vol(T, params)
        assert v == pytest.approx(implied_vol(CALL[(1.0, 1.0)], OptionSpec(1.0, T)), rel=1e-12)
        with mp.workdps(30):
            ref = float(mp.sqrt(8) * mp.erfinv(mp.mpf(CALL[(1.0, 1.0)])))
        assert v == pytest.approx(ref, rel=1e-13)

    def test_short_limit(self, params):
        assert atm_implied_vol(1e-8, params) == pytest.approx(params.sigma_atm0, rel=1e-8)

    def test_slope(self, params):
        assert atm_slope_richardson(params) == pytest.approx(ATM_SLOPE, rel=1e-2)

    def test_flat(self, flat):
        assert atm_implied_vol(2.0, flat) == pytest.approx(0.3, rel=1e-13)


class TestSkew:
    def test_dC_dk_matches_difference(self, params):
        k, T, h = 0.1, 1.0, 1e-5
        c = lambda kk: price(OptionSpec(math.exp(kk), T), params).value
        fd = (c(k + h) - c(k - h)) / (2 * h)
        assert dC_dk(k, T, params) == pytest.approx(fd, rel=1e-7)

    def test_limit(self, params):
        T = 1e-4
        assert math.sqrt(T) * skew_exact(T, params) == pytest.approx(SKEW_LIMIT, rel=1e-3)
        assert math.sqrt(T) * skew_asymptote(T, params) == pytest.approx(SKEW_LIMIT, rel=1e-14)

    @pytest.mark.parametrize("T", [0.1, 1.0])
    def test_fd_agrees(self, params, T):
        assert skew_fd(T, params) == pytest.approx(skew_exact(T, params), rel=1e-5)

    def test_fd_second_order(self, params):
        T = 1.0
        exact = skew_exact(T, params)
        e1 = abs(skew_fd(T, params, h=4e-3) - exact)
        e2 = abs(skew_fd(T, params, h=2e-3) - exact)
        assert 3.0 < e1 / e2 < 5.0

    def test_flat_has_no_skew(self, flat):
        r = atm_skew_exact(0.5, flat)
        assert abs(r.skew_exact) < 1e-10
        assert abs(r.skew_fd) < 1e-6
        assert r.skew_asym == 0.0

    def test_report(self, params):
        r = atm_skew_exact(0.5, params)
        assert r.T == 0.5 and r.atm_vol == atm_implied_vol(0.5, params)
        assert default_fd_step(0.5, params) == pytest.approx(1e-4)

    def test_domain(self, params):
        with pytest.raises(DomainError):
            atm_skew_exact(0.0, params)
        with pytest.raises(DomainError):
            dC_dk(-0.1, 1.0, params)


class TestCentralLimit:
    def test_value_and_slope_at_zero(self, params):
        h = 1e-6
        for side in Branch:
            assert clr_sigma(0.0, params, side) == pytest.approx(params.sigma_atm0, abs=1e-15)
            slope = (clr_sigma(h, params, side) - clr_sigma(-h, params, side)) / (2 * h)
            assert slope == pytest.approx(SKEW_LIMIT, abs=1e-9)

    @pytest.mark.parametrize("gamma", [-0.05, -0.02, 0.02, 0.05])
    def test_polynomial_is_taylor_of_limit(self, params, gamma):
        side = Branch.CALL_BRANCH if gamma >= 0 else Branch.PUT_BRANCH
        assert abs(clr_limit(gamma, params, side) - clr_sigma(gamma, params, side)) < 5 * abs(gamma) ** 3

    @pytest.mark.parametrize("gamma", [-0.05, 0.05])
    def test_implied_vol_approaches_limit(self, params, gamma):
        gaps = []
        for T in (1e-2, 1e-3):
            k = gamma * math.sqrt(T)
            spec = OptionSpec(math.exp(k), T, Side.CALL if k > 0 else Side.PUT)
            vol = implied_vol(price(spec, params).value, spec)
            gaps.append(abs(vol - clr_limit(gamma, params)))
        assert gaps[1] < 0.2 * gaps[0]

    def test_gap_helper(self, params):
        assert central_limit_gap(0.05, 1e-3, params) < 1e-3

    def test_flat_limit(self, flat):
        assert clr_limit(0.03, flat) == pytest.approx(0.3, rel=1e-12)
        # p = 1/2: no slope and no curvature
        assert clr_sigma(0.03, flat) == pytest.approx(0.3, abs=1e-15)


class TestSmile:
    def test_rows_in_order_and_consistent(self, params):
        Ks = [0.7, 0.9, 1.0, 1.2, 1.5]
        rows = smile(1.0, Ks, params, workers=3)
        assert [r.strike for r in rows] == Ks
        for r in rows:
            assert r.ok
            side = Side.CALL if r.strike >= 1 else Side.PUT
            assert implied_vol(r.price_exact, OptionSpec(r.strike, 1.0, side)) == pytest.approx(r.iv_exact, abs=1e-9)
            assert r.iv_err_ratio == pytest.approx(abs(r.iv_approx_ratio - r.iv_exact))

    def test_atm_row(self, params):
        (row,) = smile(1.0, [1.0], params)
        assert row.iv_err_ratio == 0.0
        assert row.iv_exact == pytest.approx(atm_implied_vol(1.0, params), rel=1e-12)

    @pytest.mark.parametrize("axis", list(Axis))
    def test_axes(self, params, axis):
        (row,) = smile(0.5, [1.2], params, axis=axis)
        expected = {
            Axis.STRIKE: 1.2,
            Axis.LOG_MONEYNESS: math.log(1.2),
            Axis.DELTA_MONEYNESS: math.log(1.2) / (row.iv_exact * math.sqrt(0.5)),
        }[axis]
        assert row.axis_value == pytest.approx(expected, rel=1e-14)

    def test_flat_constant_iv(self, flat):
        rows = smile(2.0, np.linspace(0.6, 1.8, 7), flat)
        np.testing.assert_allclose([r.iv_exact for r in rows], 0.3, atol=1e-9)

    def test_failed_row_is_reported(self, params):
        # deep OTM at short maturity: the price underflows and cannot be inverted
        rows = smile(1e-3, [1.0, 5.0], params)
        assert rows[0].ok
        assert not rows[1].ok
        assert math.isnan(rows[1].iv_exact)

    def test_rejects(self, params):
        with pytest.raises(DomainError):
            smile(1.0, [0.9, 0.9], params)
        with pytest.raises(DomainError):
            smile(1.0, [-1.0], params)

    def test_columns(self):
        assert SmileRow.COLUMNS[:4] == ("strike", "axis_value", "price_exact", "iv_exact")
