"""Binomial option pricing with sublinear terminal sampling.

The lattice is S_{k+1} = S_k Y_{k+1} with i.i.d. two-point factors; the
terminal price is U^k D^{n-k} S_0 with k ~ Binomial(n, p). For
piecewise-constant payoffs the payoff of a sampled k is a threshold
comparison against precomputed integer cutoffs, so the per-sample work
is independent of n: one binomial draw plus a table lookup.

The binomial sampler is exact: inversion against the CDF for small n or
small mean, otherwise rejection from a Cauchy envelope whose acceptance
test uses the exact log-pmf. Expected uniforms per sample are O(1) on
the rejection path, so measured RNG draws grow at most like log n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom as _binom

from . import kernel, payoffs as payoffs_mod
from .kernel import RngStream
from .payoffs import Payoff

__all__ = [
    "BinomialLattice",
    "ThresholdTable",
    "crr_params",
    "jr_params",
    "make_lattice",
    "terminal_price",
    "build_thresholds",
    "sample_terminal_count",
    "sample_terminal_counts",
    "bopm_estimate",
    "BopmEstimate",
    "bopm_exact",
]

# inversion below these; Cauchy-envelope rejection otherwise
_INVERSION_MAX_N = 64
_INVERSION_MAX_MEAN = 30.0

_BATCH = 1 << 16
_MAX_EXACT_N = 10 ** 6


def crr_params(r: float, sigma: float, h: float) -> tuple[float, float, float]:
    """CRR factors U = e^{sigma sqrt h}, D = 1/U and the matching p.

    Requires h <= sigma^2 / r^2 so that the up-probability stays in (0, 1).
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    if sigma <= 0:
        raise ValueError(f"CRR needs positive volatility, got {sigma}")
    if r != 0 and h > sigma * sigma / (r * r):
        raise ValueError(f"step size {h} violates h <= sigma^2/r^2 = {sigma * sigma / (r * r):g}")
    u = math.exp(sigma * math.sqrt(h))
    d = 1.0 / u
    p = (math.exp(r * h) - d) / (u - d)
    if not 0.0 < p < 1.0:
        raise ValueError(f"up-probability {p} outside (0, 1)")
    return u, d, p


def jr_params(r: float, sigma: float, h: float) -> tuple[float, float, float]:
    """Equal-probability factors U, D = e^{(r - sigma^2/2) h +- sigma sqrt h}."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    drift = (r - 0.5 * sigma * sigma) * h
    vol = sigma * math.sqrt(h)
    return math.exp(drift + vol), math.exp(drift - vol), 0.5


def _first_order_params(kind: str, r: float, sigma: float, h: float) -> tuple[float, float, float]:
    # exponential factors replaced by 1 + x throughout
    vol = sigma * math.sqrt(h)
    if kind == "crr":
        u, d = 1.0 + vol, 1.0 - vol
        if d <= 0:
            raise ValueError(f"first-order CRR needs sigma sqrt(h) < 1, got {vol}")
        p = (1.0 + r * h - d) / (u - d)
        if not 0.0 < p < 1.0:
            raise ValueError(f"up-probability {p} outside (0, 1)")
        return u, d, p
    drift = (r - 0.5 * sigma * sigma) * h
    u, d = 1.0 + drift + vol, 1.0 + drift - vol
    if d <= 0:
        raise ValueError(f"first-order JR factors must stay positive, got D={d}")
    return u, d, 0.5


@dataclass(frozen=True)
class BinomialLattice:
    """Multiplicative binomial lattice with n steps of size h from s0."""

    u: float
    d: float
    p: float
    n: int
    s0: float
    h: float
    rate: float = 0.0
    kind: str = "crr"

    @property
    def maturity(self) -> float:
        return self.n * self.h


def make_lattice(kind: str, r: float, sigma: float, s0: float, n: int, maturity: float,
                 first_order: bool = False) -> BinomialLattice:
    """Build a CRR or JR lattice for an n-step horizon."""
    if kind not in ("crr", "jr"):
        raise ValueError(f"lattice kind must be 'crr' or 'jr', got {kind!r}")
    if n < 1:
        raise ValueError(f"need at least one step, got {n}")
    if s0 <= 0:
        raise ValueError(f"initial price must be positive, got {s0}")
    h = maturity / n
    if first_order:
        u, d, p = _first_order_params(kind, r, sigma, h)
    elif kind == "crr":
        u, d, p = crr_params(r, sigma, h)
    else:
        u, d, p = jr_params(r, sigma, h)
    return BinomialLattice(u=u, d=d, p=p, n=n, s0=s0, h=h, rate=r, kind=kind)


def terminal_price(lattice: BinomialLattice, k):
    """Terminal price U^k D^{n-k} S_0, computed in log space."""
    k = np.asarray(k, dtype=float)
    return np.exp(k * math.log(lattice.u) + (lattice.n - k) * math.log(lattice.d)
                  + math.log(lattice.s0))


# ---------------------------------------------------------------------------
# payoff thresholds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdTable:
    """Integer cutoffs aligned to payoff breaks; lookup replaces evaluation.

    ``cutoffs[j]`` is the smallest up-move count whose terminal price
    reaches break j, so a sampled count resolves to its payoff value by
    a searchsorted comparison.
    """

    cutoffs: tuple[int, ...]
    values: tuple[float, ...]

    def lookup(self, k):
        idx = np.searchsorted(np.asarray(self.cutoffs), np.asarray(k), side="right")
        return np.asarray(self.values, dtype=float)[idx]


def build_thresholds(payoff: Payoff, lattice: BinomialLattice) -> ThresholdTable:
    """Cutoff counts k*_j solving k log U + (n-k) log D + log S0 = log break_j.

    The real-valued solution is rounded, then nudged until the table
    agrees with direct evaluation of the payoff at the neighbouring
    counts, which absorbs floating-point rounding of the log ratios.
    """
    if payoff.kind != "piecewise-constant":
        payoff = payoffs_mod.to_piecewise_constant(payoff)
    if lattice.u == lattice.d:
        raise ValueError("degenerate lattice: U == D has no thresholds")
    n = lattice.n
    log_ratio = math.log(lattice.u) - math.log(lattice.d)
    base = math.log(lattice.s0) + n * math.log(lattice.d)
    cutoffs = []
    for br in payoff.breaks:
        k_star = (math.log(br) - base) / log_ratio
        c = min(max(math.ceil(k_star), 0), n + 1)
        while c - 1 >= 0 and float(terminal_price(lattice, c - 1)) >= br:
            c -= 1
        while c <= n and float(terminal_price(lattice, c)) < br:
            c += 1
        if cutoffs and c < cutoffs[-1]:
            c = cutoffs[-1]
        cutoffs.append(c)
    return ThresholdTable(cutoffs=tuple(cutoffs), values=tuple(payoff.values))


# ---------------------------------------------------------------------------
# exact binomial sampling with draw accounting
# ---------------------------------------------------------------------------

def sample_terminal_counts(n: int, p: float, gen: np.random.Generator,
                           size: int) -> tuple[np.ndarray, int]:
    """Exact Binomial(n, p) sample of the up-move count, vectorised.

    Returns (counts, total uniform draws consumed).
    """
    if n < 1:
        raise ValueError(f"need at least one step, got {n}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"up-probability must be in (0, 1), got {p}")
    flipped = p > 0.5
    p_use = 1.0 - p if flipped else p
    mean = n * p_use

    if n < _INVERSION_MAX_N or mean < _INVERSION_MAX_MEAN:
        ks, draws = _sample_inversion(n, p_use, gen, size)
    else:
        ks, draws = _sample_rejection(n, p_use, gen, size)
    if flipped:
        ks = n - ks
    return ks, draws


def _sample_inversion(n: int, p: float, gen, size: int) -> tuple[np.ndarray, int]:
    # CDF table inversion: one uniform per sample. For n >= the inversion
    # cutoff the mean is small, so the table is truncated where the upper
    # tail falls below the resolution of a double.
    kmax = n
    if n >= _INVERSION_MAX_N:
        kmax = min(n, int(mean_plus_tail(n, p)))
    cdf = np.cumsum(_binom.pmf(np.arange(kmax + 1), n, p))
    u = gen.random(size=size)
    ks = np.searchsorted(cdf, u, side="right")
    np.clip(ks, 0, n, out=ks)
    return ks.astype(np.int64), size


def mean_plus_tail(n: int, p: float) -> float:
    # generous truncation point: mean + 40 sd + 20 keeps the missing tail
    # mass far below 1e-300
    return n * p + 40.0 * math.sqrt(n * p * (1.0 - p) + 1.0) + 20.0


def _sample_rejection(n: int, p: float, gen, size: int) -> tuple[np.ndarray, int]:
    # rejection from a Cauchy envelope; the acceptance ratio uses the exact
    # log-pmf so the sampled law is the binomial itself
    pc = 1.0 - p
    mean = n * p
    sq = math.sqrt(2.0 * mean * pc)
    oldg = math.lgamma(n + 1.0)
    plog = math.log(p)
    pclog = math.log(pc)
    ks = np.empty(size, dtype=np.int64)
    pending = np.arange(size)
    draws = 0
    while pending.size:
        m = pending.size
        u = gen.random(size=(2, m))
        draws += 2 * m
        y = np.tan(np.pi * u[0])
        em = sq * y + mean
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            valid = (em >= 0.0) & (em < n + 1.0)
            emf = np.floor(np.where(valid, em, 0.0))
            t = (1.2 * sq * (1.0 + y * y)
                 * np.exp(oldg - gammaln(emf + 1.0) - gammaln(n - emf + 1.0)
                          + emf * plog + (n - emf) * pclog))
            accept = valid & (u[1] <= t)
        ks[pending[accept]] = emf[accept].astype(np.int64)
        pending = pending[~accept]
    return ks, draws


def sample_terminal_count(n: int, p: float, stream: RngStream) -> int:
    """One exact Binomial(n, p) draw from a stream."""
    ks, _ = sample_terminal_counts(n, p, stream.generator(), 1)
    return int(ks[0])


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BopmEstimate:
    """Monte Carlo lattice estimate with RNG-draw accounting."""

    estimate: float
    stderr: float
    n_samples: int
    rng_draws: int

    @property
    def draws_per_sample(self) -> float:
        return self.rng_draws / self.n_samples


def bopm_estimate(payoff: Payoff, lattice: BinomialLattice, n_samples: int,
                  seed: int) -> BopmEstimate:
    """Average payoff over sampled terminal counts via threshold lookup.

    Per-sample work is one binomial draw plus a cutoff comparison; no
    loop over the n lattice steps is ever taken.
    """
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    table = build_thresholds(payoff, lattice)
    disc = 1.0 if payoff.prediscounted else math.exp(-lattice.rate * lattice.maturity)
    total = 0.0
    total_sq = 0.0
    draws = 0
    done = 0
    for start in range(0, n_samples, _BATCH):
        m = min(_BATCH, n_samples - start)
        gen = kernel.generator_for(seed, "bopm", start // _BATCH)
        ks, d = sample_terminal_counts(lattice.n, lattice.p, gen, m)
        values = table.lookup(ks) * disc
        total += float(values.sum())
        total_sq += float((values * values).sum())
        draws += d
        done += m
    mean = total / done
    var = max(0.0, (total_sq - done * mean * mean) / (done - 1))
    return BopmEstimate(estimate=mean, stderr=math.sqrt(var / done),
                        n_samples=done, rng_draws=draws)


def bopm_exact(payoff: Payoff, lattice: BinomialLattice) -> float:
    """Exact lattice value sum_k C(n,k) p^k (1-p)^{n-k} psi(U^k D^{n-k} S0).

    Binomial weights are formed in log space; the summation window is
    truncated where the weight is far below double-precision resolution,
    which also keeps the price exponents bounded.
    """
    n = lattice.n
    if n > _MAX_EXACT_N:
        raise ValueError(f"exact summation supports n <= {_MAX_EXACT_N}, got {n}")
    p = lattice.p
    sd = math.sqrt(n * p * (1.0 - p) + 1.0)
    lo = max(0, math.floor(n * p - 45.0 * sd - 5.0))
    hi = min(n, math.ceil(n * p + 45.0 * sd + 5.0))
    k = np.arange(lo, hi + 1, dtype=float)
    with np.errstate(over="ignore", under="ignore"):
        log_w = (gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
                 + k * math.log(p) + (n - k) * math.log1p(-p))
        weights = np.exp(log_w)
        values = payoffs_mod.evaluate(payoff, terminal_price(lattice, k))
        total = float(np.dot(weights, values))
    disc = 1.0 if payoff.prediscounted else math.exp(-lattice.rate * lattice.maturity)
    return disc * total
