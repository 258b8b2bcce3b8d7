"""Discretisation schemes for scalar SDEs.

Single-step updates for Euler-Maruyama, Milstein, the strong order 1.5
Taylor-Ito scheme, and GBM-specialised strong order 2 and 3
Taylor-Stratonovich schemes, plus whole-path simulation and empirical
strong-order verification against the exact GBM terminal law.

Path simulation has two routes that produce the same estimators: a
vectorised multiplicative route for plain GBM terminals (every scheme's
one-step update is a factor independent of the state there) and a
generic step loop used for models with state-dependent coefficients or
path accumulators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import kernel
from .kernel import ItoIntegrals15, StratIntegrals, RngStream
from .models import SdeModel, gbm_exact_terminal

__all__ = [
    "SchemeId",
    "SCHEMES",
    "get_scheme",
    "FlaggedSampleError",
    "step_euler",
    "step_milstein",
    "step_strong15",
    "step_strong2_gbm",
    "step_strong3_gbm",
    "step_exact_gbm",
    "simulate_path",
    "PathResult",
    "estimate_strong_order",
    "strong_order_study",
]


class FlaggedSampleError(RuntimeError):
    """A simulated sample left the finite range and was aborted."""


@dataclass(frozen=True)
class SchemeId:
    """Scheme name with its nominal strong order.

    ``strong_order`` is None for exact GBM terminal sampling, which is
    not a discretisation. GBM-only schemes reject other models at
    dispatch.
    """

    name: str
    strong_order: Optional[float]
    gbm_only: bool = False
    normals_per_step: int = 1


SCHEMES = {
    "euler": SchemeId("euler", 0.5),
    "milstein": SchemeId("milstein", 1.0),
    "strong15": SchemeId("strong15", 1.5, normals_per_step=2),
    "strong2": SchemeId("strong2", 2.0, gbm_only=True),
    "strong3": SchemeId("strong3", 3.0, gbm_only=True),
    "exact": SchemeId("exact", None, gbm_only=True),
}


def get_scheme(scheme) -> SchemeId:
    if isinstance(scheme, SchemeId):
        return scheme
    try:
        return SCHEMES[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}") from None


def _require_gbm(model: SdeModel, scheme: SchemeId) -> tuple[float, float]:
    if not model.is_gbm:
        raise ValueError(f"scheme {scheme.name!r} is only valid for GBM models")
    return model.gbm_params


# ---------------------------------------------------------------------------
# single-step updates
# ---------------------------------------------------------------------------

def step_euler(model: SdeModel, x, t: float, h: float, dW):
    """x + mu(x,t) h + sigma(x,t) dW."""
    return x + model.mu(x, t) * h + model.sigma(x, t) * dW


def step_milstein(model: SdeModel, x, t: float, h: float, dW):
    """Euler step plus the correction sigma sigma_x ((dW)^2 - h) / 2."""
    sig = model.sigma(x, t)
    return (x + model.mu(x, t) * h + sig * dW
            + 0.5 * sig * model.sigma_x(x, t) * (dW * dW - h))


def step_strong15(model: SdeModel, x, t: float, h: float, integrals: ItoIntegrals15):
    """Strong order 1.5 Taylor-Ito update.

    The h^2/2 drift coefficient is (mu mu_x + sigma^2 mu_xx / 2); for
    models with linear drift the second-derivative part vanishes.
    """
    mu = model.mu(x, t)
    mu_x = model.mu_x(x, t)
    mu_xx = model.mu_xx(x, t)
    sig = model.sigma(x, t)
    sig_x = model.sigma_x(x, t)
    sig_xx = model.sigma_xx(x, t)
    return (x + mu * h + sig * integrals.I1
            + sig * sig_x * integrals.I11
            + sig * mu_x * integrals.I10
            + (mu * mu_x + 0.5 * sig * sig * mu_xx) * (h * h / 2.0)
            + (mu * sig_x + 0.5 * sig * sig * sig_xx) * integrals.I01
            + sig * (sig * sig_xx + sig_x * sig_x) * integrals.I111)


def step_strong2_gbm(r: float, sigma: float, x, h: float, strat: StratIntegrals, dW):
    """Strong order 2 Taylor-Stratonovich update specialised to GBM."""
    mb = r - 0.5 * sigma * sigma
    return x * (1.0 + mb * h + sigma * dW
                + sigma ** 2 * strat.J11
                + mb * sigma * h * dW
                + mb * mb * h * h / 2.0
                + sigma ** 3 * strat.J111
                + mb * sigma ** 2 * h * strat.J11
                + sigma ** 4 * strat.J1111)


def step_strong3_gbm(r: float, sigma: float, x, h: float, strat: StratIntegrals, dW):
    """Strong order 3 Taylor-Stratonovich update specialised to GBM."""
    mb = r - 0.5 * sigma * sigma
    return x * (1.0 + mb * h + sigma * dW
                + sigma ** 2 * strat.J11
                + mb * sigma * h * dW
                + mb * mb * h * h / 2.0
                + sigma ** 3 * strat.J111
                + mb * sigma ** 2 * h * strat.J11
                + sigma ** 4 * strat.J1111
                + mb * mb * sigma * (h * h / 2.0) * dW
                + mb * sigma ** 3 * h * strat.J111
                + sigma ** 5 * strat.J11111
                + mb ** 3 * h ** 3 / 6.0
                + sigma ** 6 * strat.J111111
                + mb * mb * sigma ** 2 * (h * h / 2.0) * strat.J11
                + mb * sigma ** 4 * h * strat.J1111)


def step_exact_gbm(r: float, sigma: float, x, h: float, dW):
    """Exact GBM transition x exp(sigma dW + (r - sigma^2/2) h)."""
    return x * np.exp(sigma * dW + (r - 0.5 * sigma * sigma) * h)


# ---------------------------------------------------------------------------
# increments
# ---------------------------------------------------------------------------

@dataclass
class Increments:
    """Brownian increments (and I10 integrals for the order-1.5 scheme)."""

    h: float
    dW: np.ndarray
    i10: Optional[np.ndarray] = None

    @property
    def n_steps(self) -> int:
        return self.dW.shape[-1]


def draw_increments(scheme: SchemeId, gen: np.random.Generator, n_paths: int, n_steps: int,
                    h: float) -> Increments:
    """Draw one batch of per-step increments from a stream generator."""
    sqh = math.sqrt(h)
    if scheme.normals_per_step == 2:
        z = kernel.normals(gen, (2, n_paths, n_steps))
        dw = sqh * z[0]
        i10 = 0.5 * h * sqh * (z[0] + z[1] / math.sqrt(3.0))
        return Increments(h=h, dW=dw, i10=i10)
    dw = kernel.normals(gen, (n_paths, n_steps))
    dw *= sqh
    return Increments(h=h, dW=dw)


def coarsen_increments(inc: Increments) -> Increments:
    """Pairwise-coupled increments for the grid with twice the step."""
    dw_c = kernel.couple_increments(inc.dW)
    i10_c = None
    if inc.i10 is not None:
        i10_c = kernel.coarsen_i10(inc.dW, inc.i10, inc.h)
    return Increments(h=2.0 * inc.h, dW=dw_c, i10=i10_c)


# ---------------------------------------------------------------------------
# whole-path simulation
# ---------------------------------------------------------------------------

def _gbm_factors(scheme: SchemeId, r: float, sigma: float, inc: Increments) -> np.ndarray:
    """Per-step multiplicative factors for GBM; every scheme is state-free there."""
    h = inc.h
    dW = inc.dW
    if scheme.name == "euler":
        return 1.0 + r * h + sigma * dW
    if scheme.name == "milstein":
        f = dW * dW
        f -= h
        f *= 0.5 * sigma * sigma
        f += 1.0 + r * h
        f += sigma * dW
        return f
    if scheme.name == "exact":
        f = sigma * dW
        f += (r - 0.5 * sigma * sigma) * h
        return np.exp(f, out=f)
    if scheme.name == "strong15":
        i10 = inc.i10
        i11 = 0.5 * (dW * dW - h)
        i01 = h * dW - i10
        i111 = 0.5 * (dW * dW / 3.0 - h) * dW
        return (1.0 + r * h + r * r * h * h / 2.0
                + sigma * dW + sigma * sigma * i11
                + sigma * r * i10 + r * sigma * i01
                + sigma ** 3 * i111)
    if scheme.name in ("strong2", "strong3"):
        mb = r - 0.5 * sigma * sigma
        j11 = dW * dW / 2.0
        j111 = dW * j11 / 3.0
        j1111 = dW * j111 / 4.0
        f = (1.0 + mb * h + sigma * dW
             + sigma ** 2 * j11 + mb * sigma * h * dW + mb * mb * h * h / 2.0
             + sigma ** 3 * j111 + mb * sigma ** 2 * h * j11 + sigma ** 4 * j1111)
        if scheme.name == "strong3":
            j11111 = dW * j1111 / 5.0
            j111111 = dW * j11111 / 6.0
            f += (mb * mb * sigma * (h * h / 2.0) * dW
                  + mb * sigma ** 3 * h * j111
                  + sigma ** 5 * j11111
                  + mb ** 3 * h ** 3 / 6.0
                  + sigma ** 6 * j111111
                  + mb * mb * sigma ** 2 * (h * h / 2.0) * j11
                  + mb * sigma ** 4 * h * j1111)
        return f
    raise ValueError(f"no GBM factors for scheme {scheme.name!r}")


@dataclass
class TerminalBatch:
    """Batch simulation output with optional path accumulators."""

    terminal: np.ndarray
    flagged: np.ndarray              # boolean mask of aborted samples
    time_integral: Optional[np.ndarray] = None
    stoch_integral: Optional[np.ndarray] = None
    tangent: Optional[np.ndarray] = None


def terminal_from_increments(model: SdeModel, scheme: SchemeId, s0: float, inc: Increments,
                             f: Optional[Callable] = None, g: Optional[Callable] = None,
                             tangent: bool = False) -> TerminalBatch:
    """Simulate terminals for a batch of paths from prepared increments."""
    scheme = get_scheme(scheme)
    if scheme.gbm_only:
        _require_gbm(model, scheme)
    wants_hooks = f is not None or g is not None or tangent
    with np.errstate(over="ignore", invalid="ignore"):
        if model.is_gbm and not wants_hooks:
            r, sigma = model.gbm_params
            factors = _gbm_factors(scheme, r, sigma, inc)
            terminal = s0 * np.multiply.reduce(factors, axis=-1)
            return TerminalBatch(terminal=terminal, flagged=~np.isfinite(terminal))
        return _simulate_generic(model, scheme, s0, inc, f, g, tangent)


def _tangent_step(model: SdeModel, scheme: SchemeId, x, y, t, h, dW):
    # same scheme family as the state; the Milstein correction freezes x
    mu_x = model.mu_x(x, t)
    sig_x = model.sigma_x(x, t)
    if scheme.name == "euler":
        return y + mu_x * y * h + sig_x * y * dW
    return y + mu_x * y * h + sig_x * y * dW + 0.5 * sig_x * sig_x * y * (dW * dW - h)


def _simulate_generic(model: SdeModel, scheme: SchemeId, s0: float, inc: Increments,
                      f, g, tangent) -> TerminalBatch:
    n_paths, n_steps = inc.dW.shape
    h = inc.h
    x = np.full(n_paths, float(s0))
    y_time = np.zeros(n_paths) if f is not None else None
    z_stoch = np.zeros(n_paths) if g is not None else None
    y_tan = np.ones(n_paths) if tangent else None
    gbm = model.gbm_params
    for k in range(n_steps):
        t = k * h
        dW = inc.dW[:, k]
        if f is not None:
            y_time += f(x) * h
        if g is not None:
            z_stoch += g(x) * dW
        if tangent:
            y_tan = _tangent_step(model, scheme, x, y_tan, t, h, dW)
        if scheme.name == "euler":
            x = step_euler(model, x, t, h, dW)
        elif scheme.name == "milstein":
            x = step_milstein(model, x, t, h, dW)
        elif scheme.name == "strong15":
            i1 = dW
            i10 = inc.i10[:, k]
            ints = ItoIntegrals15(h=h, I1=i1, I11=0.5 * (i1 * i1 - h), I10=i10,
                                  I01=h * i1 - i10, I111=0.5 * (i1 * i1 / 3.0 - h) * i1)
            x = step_strong15(model, x, t, h, ints)
        elif scheme.name == "strong2":
            x = step_strong2_gbm(gbm[0], gbm[1], x, h, kernel.strat_integrals(dW), dW)
        elif scheme.name == "strong3":
            x = step_strong3_gbm(gbm[0], gbm[1], x, h, kernel.strat_integrals(dW), dW)
        elif scheme.name == "exact":
            x = step_exact_gbm(gbm[0], gbm[1], x, h, dW)
        else:
            raise ValueError(f"unknown scheme {scheme.name!r}")
    flagged = ~np.isfinite(x)
    for extra in (y_time, z_stoch, y_tan):
        if extra is not None:
            flagged |= ~np.isfinite(extra)
    return TerminalBatch(terminal=x, flagged=flagged, time_integral=y_time,
                         stoch_integral=z_stoch, tangent=y_tan)


@dataclass(frozen=True)
class PathResult:
    """Terminal state of a single simulated path plus accumulator values."""

    terminal: float
    brownian_total: float
    time_integral: Optional[float] = None
    stoch_integral: Optional[float] = None
    tangent: Optional[float] = None


def simulate_path(model: SdeModel, scheme, s0: float, T: float, n: int, stream: RngStream,
                  f: Optional[Callable] = None, g: Optional[Callable] = None,
                  tangent: bool = False) -> PathResult:
    """Simulate one path on the uniform grid with n steps of size T/n.

    Accumulators integrate f(X) dt (left point), g(X) dW, and the
    tangent process alongside the state. A non-finite state aborts the
    sample by raising :class:`FlaggedSampleError`.
    """
    scheme = get_scheme(scheme)
    if n < 1:
        raise ValueError(f"need at least one step, got {n}")
    if T <= 0:
        raise ValueError(f"horizon must be positive, got {T}")
    inc = draw_increments(scheme, stream.generator(), 1, n, T / n)
    out = terminal_from_increments(model, scheme, s0, inc, f=f, g=g, tangent=tangent)
    if bool(out.flagged[0]):
        raise FlaggedSampleError(f"non-finite state in {scheme.name} path at n={n}")
    return PathResult(
        terminal=float(out.terminal[0]),
        brownian_total=float(kernel.pairwise_total(inc.dW[0])),
        time_integral=None if out.time_integral is None else float(out.time_integral[0]),
        stoch_integral=None if out.stoch_integral is None else float(out.stoch_integral[0]),
        tangent=None if out.tangent is None else float(out.tangent[0]),
    )


# ---------------------------------------------------------------------------
# strong-order verification
# ---------------------------------------------------------------------------

_BATCH = 1 << 14


@dataclass(frozen=True)
class StrongOrderResult:
    scheme: str
    step_sizes: tuple
    mean_abs_errors: tuple
    slope: float


def strong_order_study(scheme, model: SdeModel, step_grid, n_samples: int, seed: int,
                       s0: float = 100.0, T: float = 1.0) -> StrongOrderResult:
    """Pathwise error E|X_hat - X_T| against the exact GBM terminal.

    Each simulated path is paired with the exact solution driven by the
    same Brownian path; the slope is the log2-log2 regression of the
    mean absolute error on the step size.
    """
    scheme = get_scheme(scheme)
    if not model.is_gbm:
        raise ValueError("strong-order estimation needs the exact GBM solution")
    step_grid = [float(h) for h in step_grid]
    if len(step_grid) < 3:
        raise ValueError(f"need at least 3 step sizes, got {len(step_grid)}")
    r, sigma = model.gbm_params
    errors = []
    for ih, h in enumerate(step_grid):
        n = round(T / h)
        if abs(n * h - T) > 1e-12 * T or n < 1:
            raise ValueError(f"step {h} does not divide the horizon {T}")
        total = 0.0
        for start in range(0, n_samples, _BATCH):
            m = min(_BATCH, n_samples - start)
            gen = kernel.generator_for(seed, "strong-order", scheme.name, ih, start)
            inc = draw_increments(scheme, gen, m, n, h)
            out = terminal_from_increments(model, scheme, s0, inc)
            w = inc.dW.sum(axis=-1)
            exact = gbm_exact_terminal(s0, r, sigma, T, w)
            total += float(np.abs(out.terminal - exact).sum())
        errors.append(total / n_samples)
    slope = float(np.polyfit(np.log2(step_grid), np.log2(errors), 1)[0])
    return StrongOrderResult(scheme=scheme.name, step_sizes=tuple(step_grid),
                             mean_abs_errors=tuple(errors), slope=slope)


def estimate_strong_order(scheme, model: SdeModel, step_grid, n_samples: int,
                          seed: int = 0, s0: float = 100.0, T: float = 1.0) -> float:
    """Empirical strong order of a scheme on GBM (regression slope)."""
    return strong_order_study(scheme, model, step_grid, n_samples, seed, s0=s0, T=T).slope
