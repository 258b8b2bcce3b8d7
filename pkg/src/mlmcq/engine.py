"""Monte Carlo and multilevel Monte Carlo estimation.

Level l uses the uniform grid with 2^l steps (step size T 2^{-l});
level differences couple the fine and coarse grids through pairwise
sums of the same Brownian increments. Sample allocation follows the
Lagrange-optimal rule N_l = ceil(lambda sqrt(V_l / C_l)) with
lambda = 2 eps^{-2} sum sqrt(V_l C_l), which bounds the estimator
variance by eps^2 / 2; the number of levels is chosen adaptively from
the bias proxy |mean of level L| / (2^alpha - 1).

Sampling is batched; each batch draws from its own keyed stream, and
batch results are merged in a fixed order, so runs are bit-identical
for a given (configuration, seed) regardless of the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import kernel, payoffs as payoffs_mod, schemes
from .kernel import RngStream
from .models import AugmentedSystem, SdeModel
from .payoffs import Payoff
from .schemes import FlaggedSampleError, Increments, SchemeId, get_scheme

__all__ = [
    "LevelStats",
    "MlmcEstimate",
    "FlaggedSamplesError",
    "LevelCapError",
    "plain_mc",
    "sample_level_difference",
    "level_statistics",
    "mlmc",
    "median_boost",
    "write_mlmc_csv",
]

BATCH_SIZE = 1 << 14
MAX_FLAGGED_FRACTION = 1e-4


class FlaggedSamplesError(RuntimeError):
    """Too many samples left the finite range; level statistics unusable."""


class LevelCapError(RuntimeError):
    """The adaptive level count exceeded the configured hard cap."""


@dataclass(frozen=True)
class LevelStats:
    """Sample statistics of the level-l difference P_l - P_{l-1}.

    ``unit_cost`` counts scheme steps per sample: 2^l + 2^{l-1} for
    l >= 1 and one step at level 0.
    """

    level: int
    n_samples: int
    mean: float
    variance: float
    unit_cost: float
    flagged: int = 0


@dataclass(frozen=True)
class MlmcEstimate:
    """Telescoped multilevel estimate with its per-level breakdown."""

    estimate: float
    levels: tuple[LevelStats, ...]
    L: int
    target_eps: float
    achieved_variance: float
    bias_proxy: float
    total_cost: float


class _Moments:
    """Mergeable running (count, mean, M2) with a flagged-sample tally."""

    __slots__ = ("count", "mean", "m2", "flagged")

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.flagged = 0

    def add(self, values: np.ndarray, flagged: int = 0) -> None:
        self.flagged += flagged
        n = values.size
        if n == 0:
            return
        mean = float(values.mean())
        m2 = float(((values - mean) ** 2).sum())
        self._merge(n, mean, m2)

    def _merge(self, n: int, mean: float, m2: float) -> None:
        if self.count == 0:
            self.count, self.mean, self.m2 = n, mean, m2
            return
        delta = mean - self.mean
        total = self.count + n
        self.mean += delta * n / total
        self.m2 += m2 + delta * delta * self.count * n / total
        self.count = total

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def stderr(self) -> float:
        if self.count < 1:
            return float("nan")
        return math.sqrt(self.variance / self.count)


def _resolve_system(model, payoff: Payoff):
    """Model plus the f/g accumulators the payoff needs."""
    if isinstance(model, AugmentedSystem):
        base = model.base
        f = model.f if payoff.needs_time_average else None
        g = model.g if payoff.needs_stoch_integral else None
        return base, f, g
    if payoff.needs_stoch_integral:
        raise ValueError("payoffs using a stochastic integral need an AugmentedSystem")
    f = (lambda x: x) if payoff.needs_time_average else None
    return model, f, None


def _payoff_values(payoff: Payoff, out: schemes.TerminalBatch, T: float) -> np.ndarray:
    avg = None if out.time_integral is None else out.time_integral / T
    return payoffs_mod.evaluate(payoff, out.terminal, time_average=avg,
                                stoch_integral=out.stoch_integral)


def _discount_factor(model: SdeModel, payoff: Payoff, T: float) -> float:
    return 1.0 if payoff.prediscounted else math.exp(-model.rate * T)


def _level_batch(model, scheme: SchemeId, payoff: Payoff, level: int, gen,
                 n_paths: int, s0: float, T: float) -> tuple[np.ndarray, int]:
    """Discounted level-difference samples for one batch; returns (values, flagged)."""
    base, f, g = _resolve_system(model, payoff)
    n_fine = 1 << level
    inc_fine = schemes.draw_increments(scheme, gen, n_paths, n_fine, T / n_fine)
    out_fine = schemes.terminal_from_increments(base, scheme, s0, inc_fine, f=f, g=g)
    values = _payoff_values(payoff, out_fine, T)
    flagged_mask = out_fine.flagged
    if level > 0:
        inc_coarse = schemes.coarsen_increments(inc_fine)
        out_coarse = schemes.terminal_from_increments(base, scheme, s0, inc_coarse, f=f, g=g)
        values = values - _payoff_values(payoff, out_coarse, T)
        flagged_mask = flagged_mask | out_coarse.flagged
    values = values * _discount_factor(base, payoff, T)
    n_flagged = int(flagged_mask.sum())
    if n_flagged:
        values = values[~flagged_mask]
    return values, n_flagged


def _collect(moments: _Moments, job: Callable[[int, int], tuple[np.ndarray, int]],
             count: int, round_id: int, workers: int) -> None:
    """Run batches of one sampling round and merge results in batch order."""
    if count <= 0:
        return
    batches = [(b, min(BATCH_SIZE, count - b * BATCH_SIZE))
               for b in range((count + BATCH_SIZE - 1) // BATCH_SIZE)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(job, (round_id, b), m) for b, m in batches]
            results = [fut.result() for fut in futures]
    else:
        results = [job((round_id, b), m) for b, m in batches]
    for values, flagged in results:
        moments.add(values, flagged)


def _check_flagged(moments: _Moments, where: str) -> None:
    total = moments.count + moments.flagged
    if total and moments.flagged > MAX_FLAGGED_FRACTION * total:
        raise FlaggedSamplesError(
            f"{moments.flagged} of {total} samples flagged non-finite in {where}")


def unit_cost(level: int) -> float:
    """Scheme steps per level-difference sample."""
    if level == 0:
        return 1.0
    return float((1 << level) + (1 << (level - 1)))


# ---------------------------------------------------------------------------
# plain Monte Carlo
# ---------------------------------------------------------------------------

def plain_mc(model, scheme, payoff: Payoff, h: float, n_samples: int, seed: int,
             s0: float = 100.0, T: float = 1.0, workers: int = 1) -> tuple[float, float, float]:
    """Average of discounted payoff samples at a single step size.

    Returns (estimate, standard error, cost in scheme steps).
    """
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    scheme = get_scheme(scheme)
    n = round(T / h)
    if n < 1 or abs(n * h - T) > 1e-9 * T:
        raise ValueError(f"step size {h} does not divide the horizon {T}")
    base, f, g = _resolve_system(model, payoff)
    disc = _discount_factor(base, payoff, T)

    def job(round_batch, m):
        gen = kernel.generator_for(seed, "plain-mc", round_batch[0], round_batch[1])
        inc = schemes.draw_increments(scheme, gen, m, n, h)
        out = schemes.terminal_from_increments(base, scheme, s0, inc, f=f, g=g)
        values = _payoff_values(payoff, out, T) * disc
        flagged = int(out.flagged.sum())
        if flagged:
            values = values[~out.flagged]
        return values, flagged

    moments = _Moments()
    _collect(moments, job, n_samples, 0, workers)
    _check_flagged(moments, f"plain MC at h={h:g}")
    return moments.mean, moments.stderr, float(n_samples) * n


# ---------------------------------------------------------------------------
# level differences
# ---------------------------------------------------------------------------

def sample_level_difference(level: int, model, scheme, payoff: Payoff, stream: RngStream,
                            s0: float = 100.0, T: float = 1.0) -> float:
    """One coupled sample of P_l - P_{l-1} (the payoff itself at level 0)."""
    if level < 0:
        raise ValueError(f"level must be nonnegative, got {level}")
    scheme = get_scheme(scheme)
    values, flagged = _level_batch(model, scheme, payoff, level, stream.generator(),
                                   1, s0, T)
    if flagged:
        raise FlaggedSampleError(f"non-finite sample at level {level}")
    return float(values[0])


def level_statistics(model, scheme, payoff: Payoff, level: int, n_samples: int, seed: int,
                     s0: float = 100.0, T: float = 1.0, tag: str = "levels",
                     workers: int = 1) -> LevelStats:
    """Mean and variance of n_samples coupled level-l differences."""
    scheme = get_scheme(scheme)
    moments = _Moments()

    def job(round_batch, m):
        gen = kernel.generator_for(seed, tag, level, round_batch[0], round_batch[1])
        return _level_batch(model, scheme, payoff, level, gen, m, s0, T)

    _collect(moments, job, n_samples, 0, workers)
    _check_flagged(moments, f"level {level}")
    return LevelStats(level=level, n_samples=moments.count, mean=moments.mean,
                      variance=moments.variance, unit_cost=unit_cost(level),
                      flagged=moments.flagged)


# ---------------------------------------------------------------------------
# multilevel Monte Carlo
# ---------------------------------------------------------------------------

def _allocate(eps: float, level_moments: list[_Moments]) -> list[int]:
    """Lagrange-optimal sample counts keeping the variance below eps^2/2."""
    costs = [unit_cost(l) for l in range(len(level_moments))]
    lam = 2.0 * eps ** -2 * sum(math.sqrt(m.variance * c)
                                for m, c in zip(level_moments, costs))
    return [max(2, math.ceil(lam * math.sqrt(m.variance / c)))
            for m, c in zip(level_moments, costs)]


def mlmc(model, scheme, payoff: Payoff, eps: float, seed: int,
         s0: float = 100.0, T: float = 1.0, pilot: int = 100,
         max_levels: int = 20, workers: int = 1,
         alpha: Optional[float] = None) -> MlmcEstimate:
    """Multilevel estimate of the discounted payoff expectation.

    Levels are added until the bias proxy |mean_L| / (2^alpha - 1) drops
    below eps / sqrt(2); alpha defaults to the scheme's nominal strong
    order. Allocation is recomputed from updated variances and topped up
    until stable so the reported variance satisfies the eps^2/2 budget.
    """
    if eps <= 0:
        raise ValueError(f"target accuracy must be positive, got {eps}")
    scheme = get_scheme(scheme)
    if alpha is None:
        alpha = scheme.strong_order  # None for exact sampling: no bias
    base, _, _ = _resolve_system(model, payoff)

    level_moments: list[_Moments] = []
    rounds: list[int] = []

    def job_for(level):
        def job(round_batch, m):
            gen = kernel.generator_for(seed, "mlmc", level, round_batch[0], round_batch[1])
            return _level_batch(model, scheme, payoff, level, gen, m, s0, T)
        return job

    def extend_to(level):
        while len(level_moments) <= level:
            l = len(level_moments)
            level_moments.append(_Moments())
            rounds.append(0)
            _collect(level_moments[l], job_for(l), pilot, rounds[l], workers)
            rounds[l] += 1
            _check_flagged(level_moments[l], f"level {l} pilot")

    def top_up_to_allocation():
        # variances move as samples accrue; iterate to a fixed point so the
        # final counts satisfy the budget with the final variance estimates
        for _ in range(16):
            targets = _allocate(eps, level_moments)
            grew = False
            for l, target in enumerate(targets):
                extra = target - level_moments[l].count
                if extra > 0:
                    _collect(level_moments[l], job_for(l), extra, rounds[l], workers)
                    rounds[l] += 1
                    _check_flagged(level_moments[l], f"level {l}")
                    grew = True
            if not grew:
                return
        raise FlaggedSamplesError("sample allocation failed to stabilise")

    L = 0
    extend_to(0)
    while True:
        top_up_to_allocation()
        if alpha is None:
            bias = 0.0
        else:
            bias = abs(level_moments[L].mean) / (2.0 ** alpha - 1.0)
        if bias <= eps / math.sqrt(2.0):
            break
        L += 1
        if L > max_levels:
            raise LevelCapError(
                f"bias proxy {bias:.3g} still above {eps / math.sqrt(2.0):.3g} "
                f"at the level cap {max_levels} (eps={eps:g}, alpha={alpha})")
        extend_to(L)

    stats = tuple(LevelStats(level=l, n_samples=m.count, mean=m.mean,
                             variance=m.variance, unit_cost=unit_cost(l),
                             flagged=m.flagged)
                  for l, m in enumerate(level_moments))
    estimate = sum(s.mean for s in stats)
    achieved = sum(s.variance / s.n_samples for s in stats)
    total_cost = sum(s.n_samples * s.unit_cost for s in stats)
    return MlmcEstimate(estimate=estimate, levels=stats, L=L, target_eps=eps,
                        achieved_variance=achieved, bias_proxy=bias,
                        total_cost=total_cost)


# ---------------------------------------------------------------------------
# probability amplification
# ---------------------------------------------------------------------------

def median_boost(run: Callable[[int], float], k: int, seed: int) -> float:
    """Median of k independent runs of a seeded estimator procedure."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"repeat count must be odd and positive, got {k}")
    child_seeds = kernel.generator_for(seed, "median-boost").integers(0, 1 << 62, size=k)
    return float(np.median([run(int(s)) for s in child_seeds]))


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def write_mlmc_csv(est: MlmcEstimate, fh) -> None:
    """Per-level CSV plus the final estimate line."""
    fh.write("l,N_l,mean,variance,unit_cost,flagged\n")
    for s in est.levels:
        fh.write(f"{s.level},{s.n_samples},{s.mean!r},{s.variance!r},"
                 f"{s.unit_cost!r},{s.flagged}\n")
    fh.write("estimate,eps,total_cost,L\n")
    fh.write(f"{est.estimate!r},{est.target_eps!r},{est.total_cost!r},{est.L}\n")
