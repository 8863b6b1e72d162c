import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as si

from oracle_values import DENSITY_T1
from reference import marginal_from_joint
from skewvol.density import (
    DriftSpec,
    JointPoint,
    joint_density_general,
    joint_density_model,
    local_time_kernel,
    local_time_tail,
    marginal_density,
    model_drift,
    occupation_density,
    terminal_mass,
)
from skewvol.errors import DomainError
from skewvol.model import ModelParams, s_of_x
from skewvol.quadrature import QuadSpec, Singularity, integrate
from skewvol.specfun import phi

TIGHT = QuadSpec(1e-12, 0, 1024)


class TestJointPoint:
    @pytest.mark.parametrize(
        "kw",
        [dict(t=0.5, v=0.6, x=0, l=0, T=1), dict(t=1.5, v=0.1, x=0, l=0, T=1),
         dict(t=0.5, v=0.1, x=0, l=-1, T=1), dict(t=0.5, v=0.1, x=math.nan, l=0, T=1),
         dict(t=0, v=0, x=0, l=0, T=0)],
    )
    def test_invariants(self, kw):
        with pytest.raises(DomainError):
            JointPoint(**kw)


class TestJointDensity:
    @settings(max_examples=100)
    @given(
        st.floats(0.01, 0.99), st.floats(0.0, 1.0), st.floats(-3, 3), st.floats(0.0, 2.0),
    )
    def test_general_drift_reduces_to_model(self, tfrac, vfrac, x, l):
        params = ModelParams(0.2, 0.9)
        T = 1.3
        t = tfrac * T
        pt = JointPoint(t, vfrac * t, x, l, T)
        a = joint_density_general(pt, model_drift(params))
        b = joint_density_model(pt, params)
        assert a == pytest.approx(b, rel=1e-13, abs=1e-300)

    def test_zero_drift_symmetric_skew_bm_is_reflection(self):
        # p = 1/2 and no drift: X_T and -X_T have the same law
        d = DriftSpec(0.0, 0.0, 0.5)
        a = joint_density_general(JointPoint(0.4, 0.1, 0.7, 0.3, 1.0), d)
        b = joint_density_general(JointPoint(0.4, 0.3, -0.7, 0.3, 1.0), d)
        assert a == pytest.approx(b, rel=1e-14)

    def test_drift_spec_rejects(self):
        with pytest.raises(DomainError):
            DriftSpec(0.0, 0.0, 1.5)
        with pytest.raises(DomainError):
            DriftSpec(math.inf, 0.0, 0.5)
        with pytest.raises(DomainError):
            DriftSpec(0.0, 0.0, 0.3, 0.6)


class TestClosedFormPieces:
    @pytest.mark.parametrize("v,u", [(0.3, 0.5), (0.01, 0.9), (1.2, 0.02)])
    def test_kernel_against_quadrature(self, params, v, u):
        def f(l):
            a, b = l * params.p, l * params.q
            return (a / math.sqrt(2 * math.pi * v**3) * math.exp(-a * a / (2 * v))
                    * b / math.sqrt(2 * math.pi * u**3) * math.exp(-b * b / (2 * u)))

        ref = si.quad(f, 0, math.inf, epsabs=0, epsrel=1e-12)[0]
        assert local_time_kernel(v, u, params) == pytest.approx(ref, rel=1e-10)
        assert local_time_tail(v, u, 0.0, params) == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("level", [0.1, 0.5, 2.0])
    def test_tail_against_quadrature(self, params, level):
        v, u = 0.4, 0.3

        def f(l):
            a, b = l * params.p, l * params.q
            return a * b / (2 * math.pi * (v * u) ** 1.5) * math.exp(-a * a / (2 * v) - b * b / (2 * u))

        ref = si.quad(f, level, math.inf, epsabs=0, epsrel=1e-12)[0]
        assert local_time_tail(v, u, level, params) == pytest.approx(ref, rel=1e-10)

    @pytest.mark.parametrize("lo,hi", [(-math.inf, math.inf), (0.3, 2.0), (-1.0, 0.5), (-2.0, -0.5)])
    def test_terminal_mass_against_quadrature(self, params, lo, hi):
        s = 0.6

        def f(x):
            pos = x >= 0
            alpha = params.p if pos else params.q
            sx = params.sigma_plus if pos else params.sigma_minus
            return (2 * alpha * abs(x) / math.sqrt(2 * math.pi * s**3)
                    * math.exp(-x * x / (2 * s) - sx * sx * s / 8 - sx * x / 2))

        parts = [(a, b) for a, b in [(lo, min(hi, 0.0)), (max(lo, 0.0), hi)] if a < b]
        ref = sum(si.quad(f, a, b, epsabs=0, epsrel=1e-12)[0] for a, b in parts)
        assert terminal_mass(s, params, lo, hi) == pytest.approx(ref, rel=1e-10)

    def test_terminal_mass_rejects_reversed(self, params):
        with pytest.raises(DomainError):
            terminal_mass(0.5, params, 1.0, 0.0)


class TestMarginal:
    @pytest.mark.parametrize("x", list(DENSITY_T1))
    def test_frozen(self, params, x):
        assert marginal_density(x, 1.0, params) == pytest.approx(DENSITY_T1[x], rel=1e-11)

    @pytest.mark.parametrize("x", [-1.5, -0.3, 0.2, 1.7])
    def test_marginalizes_joint(self, params, x):
        assert marginal_from_joint(x, 1.0, params) == pytest.approx(marginal_density(x, 1.0, params), abs=1e-6)

    @pytest.mark.parametrize("T", [0.1, 1.0, 5.0])
    def test_normalized(self, params, T):
        f = lambda x: marginal_density(x, T, params)
        span = 12 * math.sqrt(T) + T
        neg = integrate(f, -span, 0.0, TIGHT)[0]
        pos = integrate(f, 0.0, span, TIGHT)[0]
        assert neg + pos == pytest.approx(1.0, abs=1e-9)

    def test_martingale(self, params):
        T = 1.0
        f = lambda x: s_of_x(x, params) * marginal_density(x, T, params)
        total = integrate(f, -60.0, 0.0, TIGHT)[0] + integrate(f, 0.0, 60.0, TIGHT)[0]
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_jump_at_zero(self, params):
        T = 0.7
        right = marginal_density(1e-10, T, params)
        left = marginal_density(-1e-10, T, params)
        assert right / left == pytest.approx(params.p / params.q, rel=1e-6)
        assert marginal_density(0.0, T, params) == pytest.approx(2 * params.p * phi(T, params), rel=1e-15)

    def test_flat_model_is_gaussian_with_drift(self, flat):
        sig, T = flat.sigma_plus, 1.5
        for x in (-1.0, 0.4, 2.2):
            ref = math.exp(-((x + sig * T / 2) ** 2) / (2 * T)) / math.sqrt(2 * math.pi * T)
            assert marginal_density(x, T, flat) == pytest.approx(ref, rel=1e-10)

    def test_far_tail_is_zero(self, params):
        assert marginal_density(500.0, 1.0, params) == 0.0

    def test_vectorized(self, params):
        xs = np.array([[-0.3, 0.2], [1.7, -1.5]])
        out = marginal_density(xs, 1.0, params)
        assert out.shape == (2, 2)
        assert out[1, 0] == pytest.approx(DENSITY_T1[1.7], rel=1e-11)

    def test_domain(self, params):
        with pytest.raises(DomainError):
            marginal_density(0.1, 0.0, params)
        with pytest.raises(DomainError):
            marginal_density(math.inf, 1.0, params)


class TestOccupation:
    def test_normalized(self, params):
        T = 1.0
        spec = QuadSpec(1e-9, 0, 512, Singularity.INV_SQRT, Singularity.INV_SQRT)
        total = integrate(lambda v: occupation_density(v, T, params), 0.0, T, spec)[0]
        assert total == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("v", [0.05, 0.2, 0.5, 0.8])
    def test_driftless_limit(self, v):
        # Brownian limit: tau is arcsine and V | tau is uniform on [0, tau],
        # so V has density (2 / pi) sqrt((1 - v) / v) on (0, 1).
        m = ModelParams(1e-6, 1e-6)
        expected = 2 / math.pi * math.sqrt((1 - v) / v)
        assert occupation_density(v, 1.0, m) == pytest.approx(expected, rel=1e-8)

    def test_outside_support(self, params):
        np.testing.assert_array_equal(occupation_density([0.0, 1.0, 1.5], 1.0, params), [0.0, 0.0, 0.0])
