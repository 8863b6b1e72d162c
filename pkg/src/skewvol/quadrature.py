"""Adaptive Gauss-Kronrod integration with inverse-square-root endpoint handling.

Endpoints flagged ``INV_SQRT`` are removed by the substitution
``s = endpoint +/- u**2`` before any refinement, which turns integrands such as
``g(s) / sqrt(s)`` into smooth ones. An infinite upper limit is mapped onto
``[0, 1)`` with ``s = lo + u / (1 - u)``, and the ``u -> 1`` end is then
treated like an ``INV_SQRT`` endpoint.

Integrands are called with numpy arrays of abscissae and must return an array
of the same shape.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConvergenceError, DomainError

# 7-point Gauss / 15-point Kronrod pair (QUADPACK qk15), non-negative half.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# Full 15-node rule on [-1, 1]; Gauss nodes sit at the odd positions of _XGK.
KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS_FULL = np.zeros(15)
GAUSS_WEIGHTS_FULL[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS_FULL[[9, 11, 13]] = _WG[2::-1]
GAUSS_WEIGHTS_FULL[7] = _WG[3]

_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny


class Singularity(enum.Enum):
    NONE = "none"
    INV_SQRT = "inv_sqrt"


@dataclass(frozen=True)
class QuadSpec:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-13
    max_subdivisions: int = 512
    left_singularity: Singularity = Singularity.NONE
    right_singularity: Singularity = Singularity.NONE

    def __post_init__(self):
        if not (1e-14 <= self.rel_tol <= 1e-3):
            raise DomainError("QuadSpec.rel_tol must lie in [1e-14, 1e-3]")
        if not self.abs_tol >= 0:
            raise DomainError("QuadSpec.abs_tol must be non-negative")
        if not (8 <= self.max_subdivisions <= 4096):
            raise DomainError("QuadSpec.max_subdivisions must lie in [8, 4096]")

    def with_singularities(self, left: Singularity, right: Singularity) -> "QuadSpec":
        return QuadSpec(self.rel_tol, self.abs_tol, self.max_subdivisions, left, right)


#: Default used by the pricing integrals: both endpoints treated as ``1/sqrt``.
PRICING_SPEC = QuadSpec(1e-10, 1e-13, 512, Singularity.INV_SQRT, Singularity.INV_SQRT)


# Each piece maps u in [u0, u1] to s(u) with Jacobian ds/du.
def _identity(u):
    return u, np.ones_like(u)


def _sqrt_left(lo):
    return lambda u: (lo + u * u, 2.0 * u)


def _sqrt_right(hi):
    return lambda u: (hi - u * u, 2.0 * u)


def _tail(lo):
    # s = lo + u / (1 - u) with u = 1 - w**2, so algebraic s**-1.5 tails stay smooth in w.
    def f(w):
        w2 = w * w
        return lo + (1.0 - w2) / w2, 2.0 / (w2 * w)
    return f


def _pieces(lo: float, hi: float, spec: QuadSpec):
    left = spec.left_singularity is Singularity.INV_SQRT
    right = spec.right_singularity is Singularity.INV_SQRT
    if math.isinf(hi):
        pieces = []
        start = lo
        if left:
            pieces.append((_sqrt_left(lo), 0.0, 1.0))
            start = lo + 1.0
        pieces.append((_tail(start), 0.0, 1.0))
        return pieces
    width = hi - lo
    if left and right:
        half = 0.5 * width
        r = math.sqrt(half)
        return [(_sqrt_left(lo), 0.0, r), (_sqrt_right(hi), 0.0, r)]
    if left:
        return [(_sqrt_left(lo), 0.0, math.sqrt(width))]
    if right:
        return [(_sqrt_right(hi), 0.0, math.sqrt(width))]
    return [(_identity, lo, hi)]


def _gk15(f, transforms, piece_idx, a, b):
    """Apply the G7/K15 pair to intervals ``[a_i, b_i]`` of their pieces."""
    centre = 0.5 * (a + b)
    half = 0.5 * (b - a)
    u = centre[:, None] + half[:, None] * KRONROD_NODES[None, :]
    s = np.empty_like(u)
    jac = np.empty_like(u)
    for idx, transform in enumerate(transforms):
        rows = piece_idx == idx
        if np.any(rows):
            s[rows], jac[rows] = transform(u[rows])
    vals = np.asarray(f(s.ravel()), dtype=float).reshape(s.shape) * jac
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("integrand returned a non-finite value")
    resk = vals @ KRONROD_WEIGHTS
    resg = vals @ GAUSS_WEIGHTS_FULL
    mean = 0.5 * resk
    resabs = np.abs(vals) @ KRONROD_WEIGHTS * np.abs(half)
    resasc = np.abs(vals - mean[:, None]) @ KRONROD_WEIGHTS * np.abs(half)
    value = resk * half
    err = np.abs((resk - resg) * half)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where((resasc != 0) & (err != 0), scaled, err)
    err = np.where(resabs > _TINY / (50 * _EPS), np.maximum(50 * _EPS * resabs, err), err)
    return value, err


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    spec: QuadSpec = QuadSpec(),
) -> tuple[float, float]:
    """Integrate ``f`` over ``(lo, hi)``.

    Returns ``(value, err_estimate)`` where ``err_estimate`` is the engine's own
    bound. Raises :class:`ConvergenceError` (carrying the best value) if the
    subdivision budget runs out first.
    """
    lo = float(lo)
    hi = float(hi)
    if math.isnan(lo) or math.isnan(hi) or not lo < hi or math.isinf(lo):
        raise DomainError(f"integrate requires finite lo < hi, got ({lo}, {hi})")
    pieces = _pieces(lo, hi, spec)
    transforms = [p[0] for p in pieces]
    piece_idx = np.arange(len(pieces))
    a = np.array([p[1] for p in pieces], dtype=float)
    b = np.array([p[2] for p in pieces], dtype=float)
    val, err = _gk15(f, transforms, piece_idx, a, b)

    while True:
        total = float(np.sum(val))
        total_err = float(np.sum(err))
        tol = max(spec.abs_tol, spec.rel_tol * abs(total))
        if total_err <= tol:
            return total, total_err
        n = len(a)
        room = spec.max_subdivisions - n
        if room <= 0:
            raise ConvergenceError(
                f"no convergence after {n} subintervals (err {total_err:.3g} > tol {tol:.3g})",
                total,
                total_err,
            )
        order = np.argsort(err)[::-1]
        remaining = total_err - np.cumsum(err[order])
        count = int(np.searchsorted(-remaining, -0.5 * tol)) + 1
        chosen = order[: max(1, min(count, room))]
        mids = 0.5 * (a[chosen] + b[chosen])
        new_a = np.concatenate([a[chosen], mids])
        new_b = np.concatenate([mids, b[chosen]])
        new_idx = np.concatenate([piece_idx[chosen], piece_idx[chosen]])
        nv, ne = _gk15(f, transforms, new_idx, new_a, new_b)
        keep = np.ones(n, dtype=bool)
        keep[chosen] = False
        a = np.concatenate([a[keep], new_a])
        b = np.concatenate([b[keep], new_b])
        piece_idx = np.concatenate([piece_idx[keep], new_idx])
        val = np.concatenate([val[keep], nv])
        err = np.concatenate([err[keep], ne])


def integrate_value(f, lo, hi, spec: QuadSpec = QuadSpec()) -> float:
    return integrate(f, lo, hi, spec)[0]


def gauss_legendre_panels(lo: float, hi: float, n_panels: int, order: int = 16):
    """Nodes and weights of a composite Gauss-Legendre rule on ``[lo, hi]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    centre = 0.5 * (edges[1:] + edges[:-1])
    nodes = (centre[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights
