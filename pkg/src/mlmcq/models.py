"""Scalar SDE models: GBM, local volatility, and system augmentations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

__all__ = [
    "SdeModel",
    "AugmentedSystem",
    "TangentSystem",
    "gbm",
    "local_vol",
    "gbm_exact_terminal",
    "augment_path_dependent",
    "tangent_system",
]

CoefFn = Callable[..., float]


def _zero(x, t=0.0):
    return 0.0 * x


@dataclass(frozen=True)
class SdeModel:
    """Scalar SDE dX = mu(X,t) dt + sigma(X,t) dW with supplied derivatives.

    Coefficient functions must broadcast over numpy arrays. Derivatives
    are caller-supplied, not differentiated automatically; the Lipschitz
    constant is metadata asserted by the caller.
    """

    mu: CoefFn
    sigma: CoefFn
    mu_x: CoefFn
    sigma_x: CoefFn
    sigma_xx: CoefFn
    mu_xx: CoefFn = _zero
    rate: float = 0.0
    lipschitz_constant: float = 0.0
    label: str = "custom"
    # (r, sigma) when the model is exactly geometric Brownian motion
    gbm_params: Optional[tuple[float, float]] = None

    @property
    def is_gbm(self) -> bool:
        return self.gbm_params is not None


def gbm(r: float, sigma: float) -> SdeModel:
    """Geometric Brownian motion dS = r S dt + sigma S dW."""
    if sigma < 0:
        raise ValueError(f"volatility must be nonnegative, got {sigma}")
    return SdeModel(
        mu=lambda x, t: r * x,
        sigma=lambda x, t: sigma * x,
        mu_x=lambda x, t: r + 0.0 * x,
        sigma_x=lambda x, t: sigma + 0.0 * x,
        sigma_xx=_zero,
        mu_xx=_zero,
        rate=r,
        lipschitz_constant=max(abs(r), sigma),
        label="gbm",
        gbm_params=(r, sigma),
    )


def local_vol(
    r: float,
    sigma_fn: CoefFn,
    sigma_fn_x: CoefFn = _zero,
    sigma_fn_xx: CoefFn = _zero,
    lipschitz_constant: float = 0.0,
) -> SdeModel:
    """Local volatility model dS = r S dt + sigma_fn(S,t) S dW.

    ``sigma_fn_x`` and ``sigma_fn_xx`` are the spatial derivatives of the
    instantaneous volatility; the model's diffusion derivatives follow by
    the product rule.
    """
    return SdeModel(
        mu=lambda x, t: r * x,
        sigma=lambda x, t: sigma_fn(x, t) * x,
        mu_x=lambda x, t: r + 0.0 * x,
        sigma_x=lambda x, t: sigma_fn_x(x, t) * x + sigma_fn(x, t),
        sigma_xx=lambda x, t: sigma_fn_xx(x, t) * x + 2.0 * sigma_fn_x(x, t),
        mu_xx=_zero,
        rate=r,
        lipschitz_constant=lipschitz_constant,
        label="local_vol",
    )


def gbm_exact_terminal(s, r: float, sigma: float, tau: float, w):
    """Exact GBM terminal value s * exp(sigma*W + (r - sigma^2/2) tau)."""
    import numpy as np

    if np.any(np.asarray(s) <= 0):
        raise ValueError("initial price must be positive")
    if tau < 0:
        raise ValueError(f"time to maturity must be nonnegative, got {tau}")
    return s * np.exp(sigma * np.asarray(w) + (r - 0.5 * sigma * sigma) * tau)


@dataclass(frozen=True)
class AugmentedSystem:
    """State (X, Y, Z) with dY = f(X) dt and dZ = g(X) dW, Y_0 = Z_0 = 0.

    f and g must be globally Lipschitz; this is asserted by the caller.
    """

    base: SdeModel
    f: Callable
    g: Callable


def augment_path_dependent(model: SdeModel, f: Callable, g: Callable) -> AugmentedSystem:
    """Augment a model with a time integral of f and a stochastic integral of g."""
    return AugmentedSystem(base=model, f=f, g=g)


@dataclass(frozen=True)
class TangentSystem:
    """Joint system (X, Y) with dY = mu'(X) Y dt + sigma'(X) Y dW, Y_0 = 1."""

    base: SdeModel


def tangent_system(model: SdeModel) -> TangentSystem:
    """Pathwise-derivative system of a model with respect to its start value."""
    return TangentSystem(base=model)
