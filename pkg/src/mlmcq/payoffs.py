"""Payoff definitions and discounting.

All evaluation is vectorised over numpy arrays of terminal prices.
The Heaviside convention is H(0) = 1 (right-continuous); the event has
probability zero for continuously distributed terminals, but the
convention is fixed and tested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Payoff",
    "european",
    "asian",
    "digital",
    "digital_appendix",
    "piecewise_constant",
    "custom",
    "evaluate",
    "discount",
    "to_piecewise_constant",
]

GLOBALLY_LIPSCHITZ = "globally-lipschitz"
PIECEWISE_LIPSCHITZ = "piecewise-lipschitz"
PIECEWISE_CONSTANT = "piecewise-constant"


@dataclass(frozen=True)
class Payoff:
    """Terminal payoff with a smoothness tag used by the cost planner.

    ``prediscounted`` payoffs already include their discount factor and
    must not be discounted again by the estimation engine.
    """

    kind: str
    smoothness: str
    strike: Optional[float] = None
    breaks: Optional[tuple] = None
    values: Optional[tuple] = None
    fn: Optional[Callable] = None
    prediscounted: bool = False
    needs_time_average: bool = False
    needs_stoch_integral: bool = False
    label: str = ""


def _check_strike(k: float) -> None:
    if k <= 0:
        raise ValueError(f"strike must be positive, got {k}")


def european(strike: float) -> Payoff:
    """Call payoff max(S_T - K, 0)."""
    _check_strike(strike)
    return Payoff(kind="european", smoothness=GLOBALLY_LIPSCHITZ, strike=strike,
                  label=f"european(K={strike:g})")


def asian(strike: float) -> Payoff:
    """Call on the time average, max(mean_t S_t - K, 0)."""
    _check_strike(strike)
    return Payoff(kind="asian", smoothness=GLOBALLY_LIPSCHITZ, strike=strike,
                  needs_time_average=True, label=f"asian(K={strike:g})")


def digital(strike: float) -> Payoff:
    """Cash-or-nothing payoff H(S_T - K) with H(0) = 1."""
    _check_strike(strike)
    return Payoff(kind="digital", smoothness=PIECEWISE_CONSTANT, strike=strike,
                  label=f"digital(K={strike:g})")


def digital_appendix(strike: float, r: float, maturity: float) -> Payoff:
    """Scaled digital payoff 5 e^{-r T} (1 + H(S_T - K)); already discounted."""
    _check_strike(strike)
    lo = 5.0 * math.exp(-r * maturity)
    return Payoff(kind="digital-appendix", smoothness=PIECEWISE_CONSTANT, strike=strike,
                  breaks=(strike,), values=(lo, 2.0 * lo), prediscounted=True,
                  label=f"digital-appendix(K={strike:g})")


def piecewise_constant(breaks, values) -> Payoff:
    """Piecewise-constant payoff: values (psi_L, psi_1..psi_m, psi_R).

    Value psi_L applies below breaks[0], psi_j on [breaks[j-1], breaks[j]),
    psi_R at or above breaks[-1].
    """
    breaks = tuple(float(b) for b in breaks)
    values = tuple(float(v) for v in values)
    if len(values) != len(breaks) + 1:
        raise ValueError(f"need {len(breaks) + 1} values for {len(breaks)} breaks, got {len(values)}")
    if any(b2 <= b1 for b1, b2 in zip(breaks, breaks[1:])):
        raise ValueError("breaks must be strictly ascending")
    return Payoff(kind="piecewise-constant", smoothness=PIECEWISE_CONSTANT,
                  breaks=breaks, values=values, label="piecewise-constant")


def custom(fn: Callable, smoothness: str, needs_time_average: bool = False,
           needs_stoch_integral: bool = False) -> Payoff:
    """User payoff fn(terminal[, time_average][, stoch_integral])."""
    if smoothness not in (GLOBALLY_LIPSCHITZ, PIECEWISE_LIPSCHITZ, PIECEWISE_CONSTANT):
        raise ValueError(f"unknown smoothness tag {smoothness!r}")
    return Payoff(kind="custom", smoothness=smoothness, fn=fn,
                  needs_time_average=needs_time_average,
                  needs_stoch_integral=needs_stoch_integral, label="custom")


def evaluate(payoff: Payoff, terminal, time_average=None, stoch_integral=None):
    """Evaluate a payoff on terminal prices (and optional path functionals)."""
    if payoff.needs_time_average and time_average is None:
        raise ValueError(f"payoff {payoff.kind} requires the path time average")
    if payoff.needs_stoch_integral and stoch_integral is None:
        raise ValueError(f"payoff {payoff.kind} requires the path stochastic integral")
    s = np.asarray(terminal, dtype=float)
    if payoff.kind == "european":
        out = np.maximum(s - payoff.strike, 0.0)
    elif payoff.kind == "asian":
        a = np.asarray(time_average, dtype=float)
        out = np.maximum(a - payoff.strike, 0.0)
    elif payoff.kind == "digital":
        out = (s >= payoff.strike).astype(float)
    elif payoff.kind in ("digital-appendix", "piecewise-constant"):
        idx = np.searchsorted(np.asarray(payoff.breaks), s, side="right")
        out = np.asarray(payoff.values, dtype=float)[idx]
    elif payoff.kind == "custom":
        args = [s]
        if payoff.needs_time_average:
            args.append(np.asarray(time_average, dtype=float))
        if payoff.needs_stoch_integral:
            args.append(np.asarray(stoch_integral, dtype=float))
        out = np.asarray(payoff.fn(*args), dtype=float)
    else:
        raise ValueError(f"unknown payoff kind {payoff.kind!r}")
    if np.isscalar(terminal) or np.ndim(terminal) == 0:
        return float(out)
    return out


def discount(value, r: float, tau: float):
    """Discount a value by e^{-r tau}."""
    if tau < 0:
        raise ValueError(f"discounting horizon must be nonnegative, got {tau}")
    out = math.exp(-r * tau) * np.asarray(value, dtype=float)
    if np.isscalar(value) or np.ndim(value) == 0:
        return float(out)
    return out


def to_piecewise_constant(payoff: Payoff) -> Payoff:
    """View a piecewise-constant-valued payoff as explicit breaks/values."""
    if payoff.kind == "piecewise-constant":
        return payoff
    if payoff.kind == "digital":
        return Payoff(kind="piecewise-constant", smoothness=PIECEWISE_CONSTANT,
                      breaks=(payoff.strike,), values=(0.0, 1.0),
                      label=payoff.label)
    if payoff.kind == "digital-appendix":
        return Payoff(kind="piecewise-constant", smoothness=PIECEWISE_CONSTANT,
                      breaks=payoff.breaks, values=payoff.values,
                      prediscounted=True, label=payoff.label)
    raise ValueError(f"payoff {payoff.kind!r} is not piecewise constant")
