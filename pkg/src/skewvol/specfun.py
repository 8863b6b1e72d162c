"""Scalar special functions used by the densities and pricing formulas.

All functions take floats or numpy arrays and return a float for scalar input.

Error budget (double precision):
    norm_cdf, erf          ~1e-16 absolute
    erf_inv                ~1e-15 relative (one Newton polish on scipy's erfinv)
    fpt_density_h, psi     a few ulp relative
    phi (exact branch)     ~eps / rel_gap relative; the degenerate branch takes
                           over below ``PhiEvalMode.threshold``
    phi_integral           same as phi
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError
from .model import ModelParams

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
SQRTPI = math.sqrt(math.pi)


def _ret(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return _ret(np.exp(-0.5 * z * z) / SQRT2PI)


def norm_cdf(z):
    return _ret(special.ndtr(np.asarray(z, dtype=float)))


def erf(x):
    return _ret(special.erf(np.asarray(x, dtype=float)))


def erf_inv(y):
    """Inverse error function on (-1, 1)."""
    y = np.asarray(y, dtype=float)
    if np.any(~(np.abs(y) < 1.0)):
        raise DomainError("erf_inv requires |y| < 1")
    x = special.erfinv(y)
    # One Newton step on erf(x) = y; the derivative never vanishes inside (-1, 1).
    deriv = 2.0 / SQRTPI * np.exp(-x * x)
    x = x - (special.erf(x) - y) / deriv
    return _ret(x)


def fpt_density_h(s, y):
    """Density at time ``s`` of the first hitting time of 0 by a BM started at ``y``."""
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(~(s > 0)):
        raise DomainError("fpt_density_h requires s > 0")
    z = np.abs(y) / np.sqrt(s)
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.where(z < 40.0, z * np.exp(-0.5 * z * z) / (SQRT2PI * s), 0.0)
    return _ret(val)


def _psi_parts(a, s, k):
    a, s, k = np.broadcast_arrays(
        np.asarray(a, dtype=float), np.asarray(s, dtype=float), np.asarray(k, dtype=float)
    )
    if np.any(~(s > 0)):
        raise DomainError("psi requires s > 0")
    sg = np.where(k >= 0, 1.0, -1.0)
    rs = np.sqrt(s)
    w = sg * (a * s - k) / rs
    return a, s, k, sg, rs, w


def psi(a, s, k):
    """``psi(a, s, k)``: integral of ``exp(a x) h(s, x)`` over the half-line beyond ``k``.

    For ``k >= 0`` the half-line is ``[k, inf)``, for ``k < 0`` it is ``(-inf, k]``.
    """
    a, s, k, sg, rs, w = _psi_parts(a, s, k)
    with np.errstate(over="ignore", invalid="ignore"):
        pos = np.exp(a * k - k * k / (2.0 * s)) / (SQRT2PI * rs) + a * sg * np.exp(
            0.5 * a * a * s
        ) * special.ndtr(w)
    # w < 0: fold exp(a^2 s/2) N(w) into the Gaussian factor so nothing cancels or overflows.
    neg = np.exp(a * k - k * k / (2.0 * s)) * (
        1.0 / (SQRT2PI * rs) + 0.5 * a * sg * special.erfcx(-w / SQRT2)
    )
    return _ret(np.where(w >= 0, pos, neg))


def psi_scaled(a, s, k):
    """``psi(a, s, k) * exp(-a^2 s / 2)``, the combination that enters ``F``.

    Bounded for every argument, unlike ``psi`` itself.
    """
    a, s, k, sg, rs, w = _psi_parts(a, s, k)
    z = (k - a * s) / rs
    gauss = np.exp(-0.5 * z * z)
    pos = gauss / (SQRT2PI * rs) + a * sg * special.ndtr(w)
    neg = gauss * (1.0 / (SQRT2PI * rs) + 0.5 * a * sg * special.erfcx(-w / SQRT2))
    return _ret(np.where(w >= 0, pos, neg))


class PhiBranch(enum.Enum):
    EXACT = "exact"
    DEGENERATE_LIMIT = "degenerate"


@dataclass(frozen=True)
class PhiEvalMode:
    """Branch selection for ``phi`` and ``phi_integral``.

    ``mode=None`` picks the degenerate series whenever the relative volatility
    gap is below ``threshold``; an explicit branch is always honoured.
    """

    mode: PhiBranch | None = None
    threshold: float = 1e-6

    def __post_init__(self):
        if not (0.0 < self.threshold <= 1e-3):
            raise DomainError("PhiEvalMode.threshold must lie in (0, 1e-3]")

    def resolve(self, params: ModelParams) -> PhiBranch:
        if self.mode is not None:
            return self.mode
        return PhiBranch.DEGENERATE_LIMIT if params.rel_gap < self.threshold else PhiBranch.EXACT


DEFAULT_PHI_MODE = PhiEvalMode()


def _ndiff(hi, lo):
    """``N(hi) - N(lo)`` without cancelling against 1/2 or 1."""
    hi = np.asarray(hi, dtype=float)
    lo = np.asarray(lo, dtype=float)
    small = 0.5 * (special.erf(hi / SQRT2) - special.erf(lo / SQRT2))
    large = 0.5 * (special.erfc(lo / SQRT2) - special.erfc(hi / SQRT2))
    return np.where(np.maximum(np.abs(hi), np.abs(lo)) < 1.0, small, large)


def phi(t, params: ModelParams, mode: PhiEvalMode = DEFAULT_PHI_MODE):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("phi requires t > 0")
    sp, sm = params.sigma_plus, params.sigma_minus
    if mode.resolve(params) is PhiBranch.DEGENERATE_LIMIT:
        # phi is sp*sm times the mean of k(x) = exp(-x^2 t/8) / (x^2 sqrt(2 pi t))
        # over [sm, sp]; expand that mean around the midpoint.
        c, d = 0.5 * (sp + sm), 0.5 * (sp - sm)
        beta = t / 8.0
        base = np.exp(-beta * c * c) / np.sqrt(2.0 * np.pi * t)
        k0 = base / c**2
        k2 = base * (6.0 / c**4 + 6.0 * beta / c**2 + 4.0 * beta**2)
        return _ret(sp * sm * (k0 + k2 * d * d / 6.0))
    rt = np.sqrt(t)
    first = (sp * np.exp(-sm * sm * t / 8.0) - sm * np.exp(-sp * sp * t / 8.0)) / (
        SQRT2PI * rt * (sp - sm)
    )
    second = 0.5 * sp * sm / (sp - sm) * _ndiff(rt * sm / 2.0, rt * sp / 2.0)
    return _ret(first + second)


def phi_integral(T, params: ModelParams, mode: PhiEvalMode = DEFAULT_PHI_MODE):
    """Closed form of the integral of ``phi`` over ``[0, T]``."""
    T = np.asarray(T, dtype=float)
    if np.any(~(T >= 0)):
        raise DomainError("phi_integral requires T >= 0")
    sp, sm = params.sigma_plus, params.sigma_minus
    kappa = np.sqrt(T / 8.0)
    if mode.resolve(params) is PhiBranch.DEGENERATE_LIMIT:
        # Integrating k(x) over time gives m(x) = 2 erf(kappa x) / x^3.
        c, d = 0.5 * (sp + sm), 0.5 * (sp - sm)
        e0 = special.erf(kappa * c)
        e1 = 2.0 * kappa / SQRTPI * np.exp(-kappa * kappa * c * c)
        e2 = -2.0 * kappa * kappa * c * e1
        m0 = 2.0 * e0 / c**3
        m2 = 2.0 * (e2 / c**3 - 6.0 * e1 / c**4 + 12.0 * e0 / c**5)
        return _ret(sp * sm * (m0 + m2 * d * d / 6.0))
    rt = np.sqrt(T)
    out = (
        rt / SQRT2PI / (sm - sp) * (sm * np.exp(-sp * sp * T / 8.0) - sp * np.exp(-sm * sm * T / 8.0))
        + sm * (4.0 + sp * sp * T) / (4.0 * sp * (sm - sp)) * special.erf(sp * kappa)
        - sp * (4.0 + sm * sm * T) / (4.0 * sm * (sm - sp)) * special.erf(sm * kappa)
    )
    return _ret(out)
