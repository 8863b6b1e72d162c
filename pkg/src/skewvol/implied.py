"""Implied volatility, ATM term structure, ATM skew and the central-limit smile."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from scipy import optimize

from .errors import ConvergenceError, DomainError
from .model import ModelParams, OptionSpec, Side
from .parallel import ordered_map
from .pricing import (
    PRICING_SPEC,
    F,
    approx_price_2p,
    approx_price_ratio,
    atm_value,
    bs_call,
    bs_price,
    bs_vega,
    price,
)
from .quadrature import QuadSpec
from .specfun import erf_inv, norm_cdf, norm_pdf

VOL_LO = 1e-8
VOL_HI = 10.0
PRICE_TOL = 1e-12

#: Tighter pricing spec for finite differences of implied vols.
FD_SPEC = QuadSpec(1e-13, 1e-16, 2048, PRICING_SPEC.left_singularity, PRICING_SPEC.right_singularity)


def _band(spec: OptionSpec) -> tuple[float, float]:
    K = spec.strike
    if spec.side is Side.CALL:
        return max(1.0 - K, 0.0), 1.0
    return max(K - 1.0, 0.0), K


def implied_vol(target_price: float, spec: OptionSpec, quad: QuadSpec | None = None) -> float:
    """Black-Scholes volatility reproducing ``target_price`` for ``spec`` (spot 1, zero rates).

    ``quad`` is accepted for interface symmetry with the pricers and unused.
    """
    K, T, side = spec.strike, spec.maturity, spec.side
    lower, upper = _band(spec)
    if not math.isfinite(target_price):
        raise DomainError("target price must be finite")
    if target_price <= lower:
        raise DomainError(f"price {target_price!r} is at or below the intrinsic bound {lower!r}")
    if target_price >= upper:
        raise DomainError(f"price {target_price!r} is at or above the upper bound {upper!r}")

    def diff(sig):
        return bs_price(sig, K, T, side) - target_price

    lo, hi = VOL_LO, VOL_HI
    f_lo, f_hi = diff(lo), diff(hi)
    if f_lo > 0:
        raise DomainError(f"price {target_price!r} lies below the BS price at sigma={VOL_LO:g}")
    if f_hi < 0:
        raise DomainError(f"price {target_price!r} lies above the BS price at sigma={VOL_HI:g}")

    # Start from the ATM-style guess clipped into the bracket.
    sig = min(max(math.sqrt(2.0 * abs(math.log(K)) / T) + 0.1, lo), hi) if K != 1 else 0.3
    for _ in range(200):
        d = diff(sig)
        if d == 0.0:
            return sig
        if d < 0:
            lo = sig
        else:
            hi = sig
        vega = bs_vega(sig, K, T)
        step = d / vega if vega > 0 else math.inf
        cand = sig - step
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi) if hi / lo < 4.0 else math.sqrt(lo * hi)
        if abs(cand - sig) <= 4e-16 * sig and abs(d) <= PRICE_TOL:
            return cand
        if hi - lo <= 4e-16 * hi:
            break
        sig = cand
    if abs(diff(sig)) <= PRICE_TOL:
        return sig
    raise ConvergenceError("implied vol did not converge", sig, hi - lo)


def atm_implied_vol(T: float, params: ModelParams) -> float:
    """ATM implied volatility in closed form: ``sqrt(8/T) erf_inv(V_atm(T))``."""
    if not T > 0:
        raise DomainError(f"atm_implied_vol requires T > 0, got {T}")
    return math.sqrt(8.0 / T) * float(erf_inv(atm_value(T, params)))


def dC_dk(k: float, T: float, params: ModelParams, quad: QuadSpec = PRICING_SPEC) -> float:
    """Derivative of the call price with respect to the log-strike ``k >= 0``."""
    if not k >= 0:
        raise DomainError(f"dC_dk requires k >= 0, got {k}")
    f, _ = F(T, -0.5 * params.sigma_plus, k / params.sigma_plus, params, quad)
    return -2.0 * params.p * f * math.exp(k)


@dataclass(frozen=True)
class SkewReport:
    T: float
    skew_exact: float
    skew_asym: float
    skew_fd: float
    atm_vol: float


def skew_asymptote(T: float, params: ModelParams) -> float:
    """Leading small-maturity ATM skew, proportional to ``T^(-1/2)``."""
    sp, sm = params.sigma_plus, params.sigma_minus
    return math.sqrt(math.pi / (2.0 * T)) * (sp - sm) / (sm + sp)


def skew_exact(T: float, params: ModelParams, quad: QuadSpec = PRICING_SPEC) -> float:
    """Exact ATM skew ``d sigma_BS / dk`` at ``k = 0``."""
    a = 0.5 * params.sigma_plus
    f_minus, _ = F(T, -a, 0.0, params, quad)
    f_plus, _ = F(T, a, 0.0, params, quad)
    vol = atm_implied_vol(T, params)
    return (
        math.sqrt(math.pi / (2.0 * T))
        * math.exp(vol * vol * T / 8.0)
        * (1.0 - 2.0 * params.p * (f_minus + f_plus))
    )


def _vol_at_logstrike(k: float, T: float, params: ModelParams, quad: QuadSpec) -> float:
    if k == 0.0:
        return atm_implied_vol(T, params)
    side = Side.CALL if k > 0 else Side.PUT
    spec = OptionSpec(math.exp(k), T, side)
    return implied_vol(price(spec, params, quad).value, spec)


def default_fd_step(T: float, params: ModelParams) -> float:
    return 1e-4 * max(1.0, atm_implied_vol(T, params) * math.sqrt(T))


def skew_fd(T: float, params: ModelParams, h: float | None = None, quad: QuadSpec = FD_SPEC) -> float:
    """Finite-difference ATM skew.

    The implied vol has a jump in its second derivative at ``k = 0`` (the density
    of ``S_T`` jumps at the threshold), so a central difference is only first
    order. Averaging one-sided second-order stencils from each side keeps the
    error ``O(h^2)``.
    """
    if h is None:
        h = default_fd_step(T, params)
    v0 = atm_implied_vol(T, params)
    vals = {j: _vol_at_logstrike(j * h, T, params, quad) for j in (-2, -1, 1, 2)}
    right = (-3.0 * v0 + 4.0 * vals[1] - vals[2]) / (2.0 * h)
    left = (3.0 * v0 - 4.0 * vals[-1] + vals[-2]) / (2.0 * h)
    return 0.5 * (right + left)


def atm_skew_exact(T: float, params: ModelParams, quad: QuadSpec = PRICING_SPEC) -> SkewReport:
    if not T > 0:
        raise DomainError(f"atm_skew_exact requires T > 0, got {T}")
    return SkewReport(
        T=T,
        skew_exact=skew_exact(T, params, quad),
        skew_asym=skew_asymptote(T, params),
        skew_fd=skew_fd(T, params),
        atm_vol=atm_implied_vol(T, params),
    )


class Branch(enum.Enum):
    CALL_BRANCH = "call"
    PUT_BRANCH = "put"


def clr_sigma(gamma: float, params: ModelParams, side: Branch | None = None) -> float:
    """Small-maturity limit of the implied vol at ``K = exp(gamma sqrt(T))``, to second order in gamma.

    Without an explicit branch, ``gamma >= 0`` uses the call branch. Intended
    for ``|gamma| <= 0.5 * sigma_atm0``.

    The curvature is ``(4 p^2 - 1) / (4 p sigma_plus)`` on the call branch and
    the ``(q, sigma_minus)`` mirror on the put branch. It comes from
    ``C_BS(sigma, 1, exp(gamma sqrt T), T) / sqrt(T) -> sigma n(gamma/sigma) - gamma N(-gamma/sigma)``,
    whose ``gamma^2`` coefficient is ``1 / (2 sigma sqrt(2 pi))``.
    """
    if side is None:
        side = Branch.CALL_BRANCH if gamma >= 0 else Branch.PUT_BRANCH
    c1 = math.sqrt(math.pi / 2.0) * (1.0 - 2.0 * params.p)
    if side is Branch.CALL_BRANCH:
        p, s = params.p, params.sigma_plus
    else:
        p, s = params.q, params.sigma_minus
    return 2.0 * p * s + c1 * gamma + (4.0 * p * p - 1.0) / (4.0 * p * s) * gamma * gamma


def _scaled_bs(sigma: float, gamma: float, side: Branch) -> float:
    # Limit of the BS price over sqrt(T) at log-strike gamma sqrt(T).
    z = gamma / sigma
    if side is Branch.CALL_BRANCH:
        return sigma * float(norm_pdf(z)) - gamma * float(norm_cdf(-z))
    return sigma * float(norm_pdf(z)) + gamma * float(norm_cdf(z))


def clr_limit(gamma: float, params: ModelParams, side: Branch | None = None) -> float:
    """Exact small-maturity limit of the implied vol at ``K = exp(gamma sqrt(T))``.

    Solves ``BS(sigma) = 2p BS(sigma_plus)`` (call branch) or
    ``BS(sigma) = 2q BS(sigma_minus)`` (put branch) at leading order in ``sqrt(T)``.
    :func:`clr_sigma` is its second-order Taylor polynomial in ``gamma``.
    """
    if side is None:
        side = Branch.CALL_BRANCH if gamma >= 0 else Branch.PUT_BRANCH
    if side is Branch.CALL_BRANCH:
        w, s = 2.0 * params.p, params.sigma_plus
    else:
        w, s = 2.0 * params.q, params.sigma_minus
    target = w * _scaled_bs(s, gamma, side)
    return optimize.brentq(lambda sg: _scaled_bs(sg, gamma, side) - target, VOL_LO, VOL_HI, xtol=1e-15)


class Axis(enum.Enum):
    STRIKE = "strike"
    LOG_MONEYNESS = "logm"
    DELTA_MONEYNESS = "deltam"


@dataclass(frozen=True)
class SmileRow:
    strike: float
    axis_value: float
    price_exact: float
    iv_exact: float
    price_approx2p: float
    iv_approx2p: float
    price_approx_ratio: float
    iv_approx_ratio: float
    iv_err_2p: float
    iv_err_ratio: float
    error: str | None = None

    COLUMNS = (
        "strike",
        "axis_value",
        "price_exact",
        "iv_exact",
        "price_approx2p",
        "iv_approx2p",
        "price_approx_ratio",
        "iv_approx_ratio",
        "iv_err_2p",
        "iv_err_ratio",
    )

    @property
    def ok(self) -> bool:
        return self.error is None


def _smile_row(K: float, T: float, params: ModelParams, quad: QuadSpec, axis: Axis) -> SmileRow:
    nan = math.nan
    try:
        side = Side.CALL if K >= 1 else Side.PUT
        spec = OptionSpec(K, T, side)
        exact = price(spec, params, quad).value
        if K == 1:
            # K = 1 limits of the approximations (call side).
            p2 = 2.0 * params.p * bs_call(params.sigma_plus, 1.0, T)
            pr = atm_value(T, params)
        else:
            p2 = approx_price_2p(K, T, params).value
            pr = approx_price_ratio(K, T, params).value
        iv = implied_vol(exact, spec)
        iv2 = implied_vol(p2, spec)
        ivr = implied_vol(pr, spec)
    except (DomainError, ConvergenceError, FloatingPointError) as exc:
        return SmileRow(K, nan, nan, nan, nan, nan, nan, nan, nan, nan, error=f"{type(exc).__name__}: {exc}")
    if axis is Axis.STRIKE:
        x = K
    elif axis is Axis.LOG_MONEYNESS:
        x = math.log(K)
    else:
        x = math.log(K) / (iv * math.sqrt(T))
    return SmileRow(K, x, exact, iv, p2, iv2, pr, ivr, abs(iv2 - iv), abs(ivr - iv))


def smile(
    T: float,
    strike_grid: Sequence[float],
    params: ModelParams,
    quad: QuadSpec = PRICING_SPEC,
    axis: Axis = Axis.STRIKE,
    workers: int | None = None,
) -> list[SmileRow]:
    """Exact and approximate prices with their implied vols along a strike grid.

    Rows whose inversion fails carry an ``error`` message and NaN values.
    """
    strikes = [float(k) for k in strike_grid]
    if any(not k > 0 for k in strikes):
        raise DomainError("strikes must be positive")
    if len(set(strikes)) != len(strikes):
        raise DomainError("strikes must be distinct")
    axis = axis if isinstance(axis, Axis) else Axis(axis)
    return ordered_map(lambda K: _smile_row(K, T, params, quad, axis), strikes, workers)


def central_limit_gap(gamma: float, T: float, params: ModelParams, quad: QuadSpec = FD_SPEC) -> float:
    """``|sigma_BS(T, gamma sqrt(T)) - clr_sigma(gamma)|``."""
    vol = _vol_at_logstrike(gamma * math.sqrt(T), T, params, quad)
    return abs(vol - clr_sigma(gamma, params))


def atm_slope_richardson(params: ModelParams, Ts: Sequence[float] = (1e-2, 1e-3, 1e-4)) -> float:
    """Richardson-extrapolated ``T``-slope of the ATM implied vol at ``T = 0``.

    Uses the secant slopes ``(sigma_atm(T) - sigma_atm0) / T``, which are linear
    in ``T`` to leading order, and extrapolates the last two to ``T = 0``.
    """
    Ts = sorted(Ts, reverse=True)
    slopes = [(atm_implied_vol(t, params) - params.sigma_atm0) / t for t in Ts]
    (t1, s1), (t2, s2) = (Ts[-2], slopes[-2]), (Ts[-1], slopes[-1])
    return s2 - (s1 - s2) * t2 / (t1 - t2)


__all__ = [
    "Axis",
    "Branch",
    "SkewReport",
    "SmileRow",
    "atm_implied_vol",
    "atm_skew_exact",
    "atm_slope_richardson",
    "central_limit_gap",
    "clr_limit",
    "clr_sigma",
    "dC_dk",
    "default_fd_step",
    "implied_vol",
    "skew_asymptote",
    "skew_exact",
    "skew_fd",
    "smile",
]
