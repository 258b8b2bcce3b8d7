"""Delta estimation via the Malliavin weighting representation.

Delta of u(s) = E[P(X_T) | X_0 = s] is E[(1/T) P(X_T) int_0^T Y_t
sigma^{-1}(X_t) dW_t] where Y is the tangent process dY = mu'(X) Y dt +
sigma'(X) Y dW, Y_0 = 1. The weight integral is discretised with the
left-point rule, which preserves its martingale property, and the
tangent process is stepped with the same scheme family as the state.
The representation applies to the undiscounted expectation; the
discount factor multiplies the estimate afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernel, payoffs as payoffs_mod, schemes
from .blackscholes import call_delta
from .engine import FlaggedSamplesError, MAX_FLAGGED_FRACTION
from .models import SdeModel
from .payoffs import Payoff
from .schemes import get_scheme

__all__ = [
    "DeltaEstimate",
    "delta_malliavin",
    "delta_finite_difference",
    "bs_delta_closed_form",
    "gamma",
    "vega",
    "theta",
    "rho",
]

_BATCH = 1 << 14


@dataclass(frozen=True)
class DeltaEstimate:
    value: float
    stderr: float
    n_samples: int
    scheme: str
    h: float


def _joint_batch(model: SdeModel, scheme, s0, n, h, inc, sigma_floor):
    """State, tangent and Malliavin weight stepped jointly on one grid."""
    m = inc.dW.shape[0]
    x = np.full(m, float(s0))
    y = np.ones(m)
    z = np.zeros(m)
    ok = np.ones(m, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for k in range(n):
            t = k * h
            dW = inc.dW[:, k]
            sig = model.sigma(x, t)
            ok &= np.abs(sig) >= sigma_floor
            z += y * dW / np.where(np.abs(sig) >= sigma_floor, sig, 1.0)
            y = schemes._tangent_step(model, scheme, x, y, t, h, dW)
            if scheme.name == "euler":
                x = schemes.step_euler(model, x, t, h, dW)
            else:
                x = schemes.step_milstein(model, x, t, h, dW)
        ok &= np.isfinite(x) & np.isfinite(y) & np.isfinite(z)
    return x, z, ok


def delta_malliavin(model: SdeModel, scheme, payoff: Payoff, s0: float, T: float,
                    h: float, n_samples: int, seed: int,
                    sigma_floor: float = None) -> DeltaEstimate:
    """Monte Carlo Delta from the weighted-payoff representation.

    The diffusion coefficient must stay away from zero along simulated
    paths; samples breaching ``sigma_floor`` (default 1e-6 * s0) are
    flagged and the run aborts if more than a vanishing fraction are.
    """
    scheme = get_scheme(scheme)
    if scheme.name not in ("euler", "milstein"):
        raise ValueError("tangent stepping is defined for the euler and milstein schemes")
    n = round(T / h)
    if n < 1 or abs(n * h - T) > 1e-9 * T:
        raise ValueError(f"step size {h} does not divide the horizon {T}")
    if sigma_floor is None:
        sigma_floor = 1e-6 * s0
    disc = 1.0 if payoff.prediscounted else math.exp(-model.rate * T)

    total = 0.0
    total_sq = 0.0
    count = 0
    flagged = 0
    for start in range(0, n_samples, _BATCH):
        m = min(_BATCH, n_samples - start)
        gen = kernel.generator_for(seed, "greeks-malliavin", start // _BATCH)
        inc = schemes.draw_increments(scheme, gen, m, n, h)
        x, z, ok = _joint_batch(model, scheme, s0, n, h, inc, sigma_floor)
        values = disc * payoffs_mod.evaluate(payoff, x) * z / T
        values = values[ok]
        total += float(values.sum())
        total_sq += float((values * values).sum())
        count += int(ok.sum())
        flagged += int(m - ok.sum())
    if flagged > MAX_FLAGGED_FRACTION * (count + flagged):
        raise FlaggedSamplesError(
            f"{flagged} of {count + flagged} paths hit the sigma floor or overflowed")
    mean = total / count
    var = max(0.0, (total_sq - count * mean * mean) / (count - 1))
    return DeltaEstimate(value=mean, stderr=math.sqrt(var / count),
                         n_samples=count, scheme=scheme.name, h=h)


def delta_finite_difference(model_builder, scheme, payoff: Payoff, s0: float, T: float,
                            h: float, n_samples: int, seed: int,
                            bump: float = 0.5) -> DeltaEstimate:
    """Central finite difference with common random numbers.

    ``model_builder`` is unused for bumping (the start value is bumped,
    not the model) and may simply be the model; both simulations reuse
    the same Brownian increments so the difference variance stays small.
    """
    model = model_builder
    scheme = get_scheme(scheme)
    n = round(T / h)
    if n < 1 or abs(n * h - T) > 1e-9 * T:
        raise ValueError(f"step size {h} does not divide the horizon {T}")
    disc = 1.0 if payoff.prediscounted else math.exp(-model.rate * T)

    total = 0.0
    total_sq = 0.0
    count = 0
    for start in range(0, n_samples, _BATCH):
        m = min(_BATCH, n_samples - start)
        gen = kernel.generator_for(seed, "greeks-fd", start // _BATCH)
        inc = schemes.draw_increments(scheme, gen, m, n, h)
        up = schemes.terminal_from_increments(model, scheme, s0 + bump, inc)
        dn = schemes.terminal_from_increments(model, scheme, s0 - bump, inc)
        ok = ~(up.flagged | dn.flagged)
        diff = (payoffs_mod.evaluate(payoff, up.terminal)
                - payoffs_mod.evaluate(payoff, dn.terminal))
        values = (disc * diff / (2.0 * bump))[ok]
        total += float(values.sum())
        total_sq += float((values * values).sum())
        count += int(ok.sum())
    mean = total / count
    var = max(0.0, (total_sq - count * mean * mean) / (count - 1))
    return DeltaEstimate(value=mean, stderr=math.sqrt(var / count),
                         n_samples=count, scheme=scheme.name, h=h)


def bs_delta_closed_form(s: float, strike: float, r: float, sigma: float, T: float) -> float:
    """Closed-form European call Delta N(d1), the reference for tests."""
    return call_delta(s, strike, r, sigma, T)


def gamma(*args, **kwargs):
    raise NotImplementedError("gamma: not implemented")


def vega(*args, **kwargs):
    raise NotImplementedError("vega: not implemented")


def theta(*args, **kwargs):
    raise NotImplementedError("theta: not implemented")


def rho(*args, **kwargs):
    raise NotImplementedError("rho: not implemented")
