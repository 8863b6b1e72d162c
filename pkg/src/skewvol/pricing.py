"""Option prices under the two-valued local volatility model.

Spot and threshold are both normalized to 1 and rates are zero, so every price
is an undiscounted expectation. Calls are native above the threshold and puts
below it; the other side follows from put-call parity ``C - P = 1 - K``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import ModelParams, OptionSpec, Side
from .quadrature import PRICING_SPEC, QuadSpec, Singularity, integrate
from .specfun import (
    DEFAULT_PHI_MODE,
    SQRTPI,
    PhiBranch,
    erf,
    norm_cdf,
    norm_pdf,
    phi,
    phi_integral,
    psi_scaled,
)

#: Maturities below this are priced at intrinsic value.
MIN_MATURITY = 1e-8

_EPS = np.finfo(float).eps
_Z_SPAN = 40.0


class Method(enum.Enum):
    EXACT_QUAD = "exact"
    ATM_CLOSED_FORM = "atm-closed-form"
    DUPIRE_CONV = "dupire"
    BS = "bs"
    APPROX_2P = "approx2p"
    APPROX_RATIO = "approx-ratio"
    PARITY = "parity"
    INTRINSIC = "intrinsic"


@dataclass(frozen=True)
class PriceResult:
    value: float
    method: Method
    err_estimate: float = 0.0

    def __post_init__(self):
        if not self.err_estimate >= 0:
            raise DomainError("err_estimate must be non-negative")


def F(T: float, a: float, k: float, params: ModelParams, quad: QuadSpec = PRICING_SPEC):
    """``int_0^T phi(T - s) psi(a, s, k) exp(-a^2 s / 2) ds``.

    Returns ``(value, err_estimate)``.
    """
    if not T > 0:
        raise DomainError(f"F requires T > 0, got {T}")

    def f(s):
        return phi(T - s, params) * psi_scaled(a, s, k)

    return integrate(f, 0.0, T, quad)


def _check_T(T):
    if not (math.isfinite(T) and T > 0):
        raise DomainError(f"maturity must be positive and finite, got {T}")


def call_price(K: float, T: float, params: ModelParams, quad: QuadSpec = PRICING_SPEC) -> PriceResult:
    """Call struck above the threshold (``K > 1``)."""
    if not K > 1:
        raise DomainError(f"call_price is the native formula for K > 1, got K={K}")
    _check_T(T)
    sp = params.sigma_plus
    k = math.log(K) / sp
    f1, e1 = F(T, 0.5 * sp, k, params, quad)
    f2, e2 = F(T, -0.5 * sp, k, params, quad)
    growth = math.exp(sp * k)
    value = 2.0 * params.p * (f1 - growth * f2)
    err = 2.0 * params.p * (e1 + growth * e2)
    return PriceResult(min(max(value, 0.0), 1.0), Method.EXACT_QUAD, err)


def put_price(K: float, T: float, params: ModelParams, quad: QuadSpec = PRICING_SPEC) -> PriceResult:
    """Put struck below the threshold (``0 < K < 1``)."""
    if not 0 < K < 1:
        raise DomainError(f"put_price is the native formula for 0 < K < 1, got K={K}")
    _check_T(T)
    sm = params.sigma_minus
    k = math.log(K) / sm
    f1, e1 = F(T, -0.5 * sm, k, params, quad)
    f2, e2 = F(T, 0.5 * sm, k, params, quad)
    growth = math.exp(sm * k)
    value = 2.0 * params.q * (growth * f1 - f2)
    err = 2.0 * params.q * (growth * e1 + e2)
    return PriceResult(min(max(value, 0.0), K), Method.EXACT_QUAD, err)


def _atm_I(x: float, T: float) -> float:
    # Antiderivative piece of the ATM closed form for one volatility level.
    return math.sqrt(8.0 * T) / (x * SQRTPI) * math.exp(-x * x * T / 8.0) + (
        4.0 / (x * x) + T
    ) * math.erf(x * math.sqrt(T / 8.0))


def atm_value(T: float, params: ModelParams) -> float:
    """ATM call (= ATM put) price as a plain float."""
    if not T >= 0:
        raise DomainError(f"atm price requires T >= 0, got {T}")
    if T == 0:
        return 0.0
    sp, sm = params.sigma_plus, params.sigma_minus
    if DEFAULT_PHI_MODE.resolve(params) is PhiBranch.DEGENERATE_LIMIT:
        return params.p * sp * float(phi_integral(T, params))
    coef = sm * sm * sp * sp / (4.0 * (sm * sm - sp * sp))
    return coef * (_atm_I(sp, T) - _atm_I(sm, T))


def atm_price(T: float, params: ModelParams) -> PriceResult:
    value = atm_value(T, params)
    return PriceResult(value, Method.ATM_CLOSED_FORM, 4.0 * _EPS * max(value, _EPS))


def price_via_dupire(K: float, T: float, params: ModelParams, quad: QuadSpec = PRICING_SPEC) -> PriceResult:
    """Price by convolving the ATM price term structure with a first-passage density.

    Calls for ``K > 1`` and puts for ``K < 1``.
    """
    if not (math.isfinite(K) and K > 0) or K == 1:
        raise DomainError(f"price_via_dupire requires K > 0 and K != 1, got K={K}")
    _check_T(T)
    # Both sides carry sqrt(K): the forward equation in log-strike becomes a heat
    # equation with killing rate sigma^2 / 8 after factoring out K^(1/2).
    sig = params.sigma_plus if K > 1 else params.sigma_minus
    y = abs(math.log(K)) / sig
    scale = math.sqrt(K)
    lo = y / math.sqrt(T)
    if lo > _Z_SPAN:
        return PriceResult(0.0, Method.DUPIRE_CONV, 0.0)
    y2 = y * y
    atm_vec = np.vectorize(lambda r: atm_value(r, params) if r > 0 else 0.0, otypes=[float])

    # s = y^2 / z^2 turns h(s, y) ds into 2 n(z) dz.
    def f(z):
        s = y2 / (z * z)
        return 2.0 * norm_pdf(z) * atm_vec(np.maximum(T - s, 0.0)) * np.exp(-sig * sig * s / 8.0)

    spec = quad.with_singularities(Singularity.INV_SQRT, Singularity.NONE)
    val, err = integrate(f, lo, lo + _Z_SPAN, spec)
    return PriceResult(scale * val, Method.DUPIRE_CONV, scale * err)


# Black-Scholes with spot 1 and zero rates.

def _d1(sigma, K, T):
    st = sigma * np.sqrt(T)
    return -np.log(K) / st + 0.5 * st


def bs_call(sigma, K, T):
    sigma, K, T = (np.asarray(z, dtype=float) for z in (sigma, K, T))
    if np.any(T <= 0):
        if np.all(T <= 0):
            return _scalar(np.maximum(1.0 - K, 0.0))
        raise DomainError("bs_call: mixed zero and positive maturities are not supported")
    d1 = _d1(sigma, K, T)
    d0 = d1 - sigma * np.sqrt(T)
    return _scalar(norm_cdf(d1) - K * norm_cdf(d0))


def bs_put(sigma, K, T):
    sigma, K, T = (np.asarray(z, dtype=float) for z in (sigma, K, T))
    if np.any(T <= 0):
        if np.all(T <= 0):
            return _scalar(np.maximum(K - 1.0, 0.0))
        raise DomainError("bs_put: mixed zero and positive maturities are not supported")
    d1 = _d1(sigma, K, T)
    d0 = d1 - sigma * np.sqrt(T)
    return _scalar(K * norm_cdf(-d0) - norm_cdf(-d1))


def bs_atm(sigma, T):
    return erf(np.asarray(sigma) * np.sqrt(np.asarray(T, dtype=float) / 8.0))


def bs_vega(sigma, K, T):
    """Derivative of the BS price in ``sigma`` (same for calls and puts)."""
    return _scalar(norm_pdf(_d1(np.asarray(sigma, float), K, T)) * np.sqrt(T))


def bs_price(sigma, K, T, side: Side):
    return bs_call(sigma, K, T) if side is Side.CALL else bs_put(sigma, K, T)


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def approx_price_2p(K: float, T: float, params: ModelParams) -> PriceResult:
    """Short-maturity approximation ``2p * BS(sigma_plus)`` (calls) or ``2q * BS(sigma_minus)`` (puts)."""
    if K == 1 or not K > 0:
        raise DomainError(f"approx_price_2p requires K > 0 and K != 1, got K={K}")
    _check_T(T)
    if K > 1:
        value = 2.0 * params.p * bs_call(params.sigma_plus, K, T)
    else:
        value = 2.0 * params.q * bs_put(params.sigma_minus, K, T)
    return PriceResult(value, Method.APPROX_2P)


def approx_price_ratio(K: float, T: float, params: ModelParams) -> PriceResult:
    """BS price rescaled so that it reproduces the exact ATM price."""
    if K == 1 or not K > 0:
        raise DomainError(f"approx_price_ratio requires K > 0 and K != 1, got K={K}")
    _check_T(T)
    v_atm = atm_value(T, params)
    if K > 1:
        sig = params.sigma_plus
        value = v_atm / bs_atm(sig, T) * bs_call(sig, K, T)
    else:
        sig = params.sigma_minus
        value = v_atm / bs_atm(sig, T) * bs_put(sig, K, T)
    return PriceResult(value, Method.APPROX_RATIO)


def price(spec: OptionSpec, params: ModelParams, quad: QuadSpec = PRICING_SPEC) -> PriceResult:
    """Price any European call or put, using parity for the non-native side."""
    K, T = spec.strike, spec.maturity
    if T < MIN_MATURITY:
        intrinsic = max(1.0 - K, 0.0) if spec.side is Side.CALL else max(K - 1.0, 0.0)
        return PriceResult(intrinsic, Method.INTRINSIC)
    if K == 1:
        return atm_price(T, params)
    if K > 1:
        native = call_price(K, T, params, quad)
        if spec.side is Side.CALL:
            return native
        return PriceResult(native.value + (K - 1.0), Method.PARITY, native.err_estimate)
    native = put_price(K, T, params, quad)
    if spec.side is Side.PUT:
        return native
    return PriceResult(native.value + (1.0 - K), Method.PARITY, native.err_estimate)
