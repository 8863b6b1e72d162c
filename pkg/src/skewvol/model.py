"""Model parameters and the maps between price space and the skew-BM coordinate.

The volatility switches from ``sigma_minus`` to ``sigma_plus`` at the threshold
price 1 (prices quoted relative to the threshold). The boundary itself belongs
to the upper branch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

SIGMA_MIN = 1e-12
SIGMA_MAX = 1e3


def _check_sigma(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= SIGMA_MIN or value >= SIGMA_MAX:
        raise DomainError(f"{name} must be finite and in ({SIGMA_MIN:g}, {SIGMA_MAX:g}), got {value!r}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Two-valued local volatility model.

    Attributes:
        sigma_plus: volatility at or above the threshold.
        sigma_minus: volatility below the threshold.
        p: probability that an excursion of the skew-BM coordinate is positive.
        q: ``1 - p``.
        sigma_atm0: short-maturity limit of the ATM implied volatility.
    """

    sigma_plus: float
    sigma_minus: float
    p: float = field(init=False)
    q: float = field(init=False)
    sigma_atm0: float = field(init=False)

    def __post_init__(self):
        sp = _check_sigma("sigma_plus", self.sigma_plus)
        sm = _check_sigma("sigma_minus", self.sigma_minus)
        total = sm + sp
        object.__setattr__(self, "sigma_plus", sp)
        object.__setattr__(self, "sigma_minus", sm)
        object.__setattr__(self, "p", sm / total)
        object.__setattr__(self, "q", sp / total)
        object.__setattr__(self, "sigma_atm0", 2.0 * sm * sp / total)

    @property
    def rel_gap(self) -> float:
        """``|sigma_plus - sigma_minus| / max(sigma_plus, sigma_minus)``."""
        return abs(self.sigma_plus - self.sigma_minus) / max(self.sigma_plus, self.sigma_minus)

    def sigma(self, x):
        """Volatility for SBM coordinate (or log-price) ``x``; ``x >= 0`` takes ``sigma_plus``."""
        return np.where(np.asarray(x) >= 0, self.sigma_plus, self.sigma_minus)

    def swapped(self) -> "ModelParams":
        return ModelParams(self.sigma_minus, self.sigma_plus)


def new_params(sigma_plus: float, sigma_minus: float) -> ModelParams:
    return ModelParams(sigma_plus, sigma_minus)


class Side(enum.Enum):
    CALL = "call"
    PUT = "put"


@dataclass(frozen=True)
class OptionSpec:
    """European option on the normalized price (spot 1, threshold 1, zero rates)."""

    strike: float
    maturity: float
    side: Side = Side.CALL

    def __post_init__(self):
        k, t = float(self.strike), float(self.maturity)
        if not (math.isfinite(k) and k > 0):
            raise DomainError(f"strike must be positive and finite, got {self.strike!r}")
        if not (math.isfinite(t) and t > 0):
            raise DomainError(f"maturity must be positive and finite, got {self.maturity!r}")
        side = self.side if isinstance(self.side, Side) else Side(str(self.side).lower())
        object.__setattr__(self, "strike", k)
        object.__setattr__(self, "maturity", t)
        object.__setattr__(self, "side", side)

    @property
    def log_strike(self) -> float:
        return math.log(self.strike)


def x_of_s(s, params: ModelParams):
    """Map price ``s > 0`` to the skew-BM coordinate ``log(s) / sigma(log s)``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(~(s_arr > 0)):
        raise DomainError("price must be strictly positive")
    logs = np.log(s_arr)
    out = np.where(logs >= 0, logs / params.sigma_plus, logs / params.sigma_minus)
    return float(out) if out.ndim == 0 else out


def s_of_x(x, params: ModelParams):
    """Inverse of :func:`x_of_s`."""
    x_arr = np.asarray(x, dtype=float)
    out = np.exp(x_arr * np.where(x_arr >= 0, params.sigma_plus, params.sigma_minus))
    return float(out) if out.ndim == 0 else out
