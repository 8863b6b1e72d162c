"""Densities of the skew-BM coordinate and of its path functionals.

The functionals are the last zero ``tau`` before the horizon, the time ``V``
spent in ``[0, inf)`` before ``tau``, the terminal value ``X_T`` and the local
time ``L_T`` at the origin. With ``X_0 = 0`` the first zero is 0, so it does
not enter the joint density.

Besides the pointwise densities this module exposes the closed-form partial
integrals used to marginalize them:

* :func:`local_time_kernel` integrates out ``L_T``,
* :func:`local_time_tail` integrates ``L_T`` over ``[l, inf)``,
* :func:`terminal_mass` integrates ``X_T`` over an interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import ModelParams
from .quadrature import QuadSpec, Singularity, integrate
from .specfun import SQRT2PI, norm_cdf, phi, psi_scaled

#: Integration spec for the marginal density in the ``z = |x| / sqrt(s)`` variable.
MARGINAL_SPEC = QuadSpec(1e-11, 1e-15, 1024, Singularity.INV_SQRT, Singularity.NONE)

# Beyond this many standard deviations the Gaussian weight underflows.
_Z_SPAN = 40.0


@dataclass(frozen=True)
class JointPoint:
    """A point ``(tau, V, X_T, L_T)`` together with the horizon ``T``."""

    t: float
    v: float
    x: float
    l: float
    T: float

    def __post_init__(self):
        vals = (self.t, self.v, self.x, self.l, self.T)
        if not all(math.isfinite(float(z)) for z in vals):
            raise DomainError("JointPoint fields must be finite")
        if not self.T > 0:
            raise DomainError(f"horizon T must be positive, got {self.T}")
        if not (0 <= self.v <= self.t <= self.T):
            raise DomainError(f"need 0 <= v <= t <= T, got v={self.v}, t={self.t}, T={self.T}")
        if self.l < 0:
            raise DomainError(f"local time must be non-negative, got {self.l}")


@dataclass(frozen=True)
class DriftSpec:
    """Skew BM with drift ``m1`` on ``[0, inf)``, ``m2`` below, and skewness ``p``."""

    m1: float
    m2: float
    p: float
    #: ``1 - p``; may be given explicitly when a more accurate value is at hand
    #: (the density is sensitive to it through ``h(u, l q)``).
    q: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise DomainError(f"p must lie in [0, 1], got {self.p}")
        if not (math.isfinite(self.m1) and math.isfinite(self.m2)):
            raise DomainError("drifts must be finite")
        if self.q is None:
            object.__setattr__(self, "q", 1.0 - self.p)
        elif abs(self.p + self.q - 1.0) > 1e-12:
            raise DomainError(f"p + q must equal 1, got {self.p} + {self.q}")


def model_drift(params: ModelParams) -> DriftSpec:
    """Drift of the skew-BM coordinate: ``-sigma(x) / 2`` on each side."""
    return DriftSpec(-0.5 * params.sigma_plus, -0.5 * params.sigma_minus, params.p, params.q)


def _h(s, y):
    # First-passage density extended by 0 to s <= 0 (its limit for y != 0).
    s = np.asarray(s, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    safe = np.where(s > 0, s, 1.0)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        # z exp(-z^2/2) / (sqrt(2 pi) s) with z = |y| / sqrt(s) never forms s^3.
        z = y / np.sqrt(safe)
        val = np.where(z < 40.0, z * np.exp(-0.5 * z * z) / (SQRT2PI * safe), 0.0)
    return np.where(s > 0, val, 0.0)


def _ret(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def joint_density_general(pt: JointPoint, drift: DriftSpec) -> float:
    """Joint density of ``(tau, V, Z_T, L_T)`` for skew BM with a two-valued drift."""
    t, v, x, l, T = pt.t, pt.v, pt.x, pt.l, pt.T
    p, q = drift.p, drift.q
    pos = x >= 0
    alpha = p if pos else q
    m = drift.m1 if pos else drift.m2
    core = 2.0 * alpha * _h(v, l * p) * _h(t - v, l * q) * _h(T - t, x)
    expo = (
        -0.5 * (drift.m1**2 * v + drift.m2**2 * (t - v) + m * m * (T - t))
        - l * (p * drift.m1 - q * drift.m2)
        + m * x
    )
    return float(core * math.exp(expo))


def joint_density_model(pt: JointPoint, params: ModelParams) -> float:
    """Joint density of ``(tau, V, X_T, L_T)`` for the model coordinate."""
    t, v, x, l, T = pt.t, pt.v, pt.x, pt.l, pt.T
    sp, sm = params.sigma_plus, params.sigma_minus
    pos = x >= 0
    alpha = params.p if pos else params.q
    sx = sp if pos else sm
    core = 2.0 * alpha * _h(v, l * params.p) * _h(t - v, l * params.q) * _h(T - t, x)
    expo = -(sp * sp * v + sm * sm * (t - v) + sx * sx * (T - t)) / 8.0 - 0.5 * sx * x
    return float(core * math.exp(expo))


def local_time_kernel(v, u, params: ModelParams):
    """``int_0^inf h(v, l p) h(u, l q) dl`` in closed form (``v, u >= 0``, not both 0)."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    p, q = params.p, params.q
    return _ret(p * q / (2.0 * SQRT2PI * (p * p * u + q * q * v) ** 1.5))


def local_time_tail(v, u, level, params: ModelParams):
    """``int_level^inf h(v, l p) h(u, l q) dl`` for ``v, u > 0`` and ``level >= 0``."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    level = np.asarray(level, dtype=float)
    p, q = params.p, params.q
    c = p * p / v + q * q / u
    rc = np.sqrt(c)
    # int_L^inf l^2 exp(-c l^2 / 2) dl = L e^{-c L^2/2} / c + sqrt(2 pi) c^{-3/2} N(-L sqrt(c))
    moment = level * np.exp(-0.5 * c * level * level) / c + SQRT2PI / (c * rc) * norm_cdf(-level * rc)
    return _ret(p * q / (2.0 * np.pi * (v * u) ** 1.5) * moment)


def _positive_mass(a, s, lo, hi):
    """``int_lo^hi exp(a x - a^2 s / 2) h(s, x) dx`` for ``0 <= lo <= hi <= inf``."""
    upper = 0.0 if math.isinf(hi) else psi_scaled(a, s, hi)
    return psi_scaled(a, s, lo) - upper


def terminal_mass(s, params: ModelParams, lo: float = -math.inf, hi: float = math.inf):
    """Mass of ``2 alpha(x) h(s, x) exp(-sigma(x)^2 s / 8 - sigma(x) x / 2)`` on ``[lo, hi]``.

    This is the ``X_T`` factor of the joint density integrated over an interval,
    with ``s = T - tau`` the time since the last zero.
    """
    s = np.asarray(s, dtype=float)
    if not lo <= hi:
        raise DomainError("terminal_mass needs lo <= hi")
    total = np.zeros_like(s)
    if hi > 0:
        a = -0.5 * params.sigma_plus
        total = total + 2.0 * params.p * _positive_mass(a, s, max(lo, 0.0), hi)
    if lo < 0:
        # Reflect the negative half-line: exp(-sm x / 2) at x < 0 is exp(+sm y / 2), y = -x.
        a = 0.5 * params.sigma_minus
        total = total + 2.0 * params.q * _positive_mass(a, s, max(-hi, 0.0), -lo)
    return _ret(total)


def marginal_density(x, T: float, params: ModelParams, spec: QuadSpec = MARGINAL_SPEC):
    """Density of ``X_T`` at ``x`` (``X_0 = 0``).

    At ``x = 0`` the right limit ``2 p phi(T)`` is returned. Accepts a scalar
    or an array of points.
    """
    if not T > 0:
        raise DomainError(f"marginal_density requires T > 0, got {T}")
    xs = np.asarray(x, dtype=float)
    out = np.array([_marginal_scalar(float(xi), float(T), params, spec) for xi in xs.ravel()])
    return _ret(out.reshape(xs.shape))


def _marginal_scalar(x: float, T: float, params: ModelParams, spec: QuadSpec) -> float:
    if not math.isfinite(x):
        raise DomainError("marginal_density requires finite x")
    pos = x >= 0
    alpha = params.p if pos else params.q
    sx = params.sigma_plus if pos else params.sigma_minus
    if x == 0.0:
        return 2.0 * alpha * float(phi(T, params))
    ax = abs(x)
    lo = ax / math.sqrt(T)
    if lo > _Z_SPAN:
        return 0.0
    y2 = x * x

    # With s = x^2 / z^2, h(s, x) ds becomes 2 n(z) dz on z in (|x|/sqrt(T), inf).
    def f(z):
        s = y2 / (z * z)
        rest = np.maximum(T - s, 0.0)
        val = 2.0 * np.exp(-0.5 * z * z - sx * sx * s / 8.0) / SQRT2PI
        return val * phi(np.where(rest > 0, rest, T), params) * (rest > 0)

    val, _ = integrate(f, lo, lo + _Z_SPAN, spec)
    return 2.0 * alpha * math.exp(-0.5 * sx * x) * val


def occupation_density(v, T: float, params: ModelParams, spec: QuadSpec = QuadSpec(1e-9, 1e-14)):
    """Density of the occupation time ``V`` at ``v in (0, T)``."""
    if not T > 0:
        raise DomainError(f"occupation_density requires T > 0, got {T}")
    vs = np.asarray(v, dtype=float)
    sp2, sm2 = params.sigma_plus**2, params.sigma_minus**2
    inner = spec.with_singularities(Singularity.NONE, Singularity.INV_SQRT)

    def one(vi):
        if not (0.0 < vi < T):
            return 0.0

        # u = tau - v is the negative time before the last zero; T - tau follows.
        def f(u):
            w = np.exp(-(sp2 * vi + sm2 * u) / 8.0)
            return local_time_kernel(vi, u, params) * w * terminal_mass(T - vi - u, params)

        return integrate(f, 0.0, T - vi, inner)[0]

    out = np.array([one(float(vi)) for vi in vs.ravel()])
    return _ret(out.reshape(vs.shape))
