"""Closed-form Black-Scholes values used as reference prices in reports and tests."""

from __future__ import annotations

import math

from scipy.stats import norm

__all__ = ["d1_d2", "call_price", "digital_price", "appendix_digital_price",
           "call_delta", "digital_delta"]


def d1_d2(s: float, strike: float, r: float, sigma: float, maturity: float) -> tuple[float, float]:
    if min(s, strike, sigma, maturity) <= 0:
        raise ValueError("s, strike, sigma and maturity must all be positive")
    d1 = (math.log(s / strike) + (r + 0.5 * sigma * sigma) * maturity) / (sigma * math.sqrt(maturity))
    return d1, d1 - sigma * math.sqrt(maturity)


def call_price(s: float, strike: float, r: float, sigma: float, maturity: float) -> float:
    """European call value s N(d1) - K e^{-rT} N(d2)."""
    d1, d2 = d1_d2(s, strike, r, sigma, maturity)
    return s * norm.cdf(d1) - strike * math.exp(-r * maturity) * norm.cdf(d2)


def digital_price(s: float, strike: float, r: float, sigma: float, maturity: float) -> float:
    """Cash-or-nothing value e^{-rT} N(d2)."""
    _, d2 = d1_d2(s, strike, r, sigma, maturity)
    return math.exp(-r * maturity) * norm.cdf(d2)


def appendix_digital_price(s: float, strike: float, r: float, sigma: float, maturity: float) -> float:
    """Value of the scaled digital payoff 5 e^{-rT} (1 + H(S_T - K))."""
    _, d2 = d1_d2(s, strike, r, sigma, maturity)
    return 5.0 * math.exp(-r * maturity) * (1.0 + norm.cdf(d2))


def call_delta(s: float, strike: float, r: float, sigma: float, maturity: float) -> float:
    """Delta of the European call, N(d1)."""
    d1, _ = d1_d2(s, strike, r, sigma, maturity)
    return norm.cdf(d1)


def digital_delta(s: float, strike: float, r: float, sigma: float, maturity: float) -> float:
    """Delta of the cash-or-nothing option, e^{-rT} phi(d2) / (s sigma sqrt(T))."""
    _, d2 = d1_d2(s, strike, r, sigma, maturity)
    return math.exp(-r * maturity) * norm.pdf(d2) / (s * sigma * math.sqrt(maturity))
