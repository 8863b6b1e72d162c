"""Two-valued local volatility: exact densities, prices, implied vols and a Monte-Carlo oracle."""

from .errors import ConvergenceError, DomainError
from .model import ModelParams, OptionSpec, Side, s_of_x, x_of_s
from .pricing import Method, PriceResult, atm_price, price, price_via_dupire
from .implied import atm_skew_exact, clr_limit, clr_sigma, implied_vol, smile

__all__ = [
    "ConvergenceError",
    "DomainError",
    "Method",
    "ModelParams",
    "OptionSpec",
    "PriceResult",
    "Side",
    "atm_price",
    "atm_skew_exact",
    "clr_limit",
    "clr_sigma",
    "implied_vol",
    "price",
    "price_via_dupire",
    "s_of_x",
    "smile",
    "x_of_s",
]
