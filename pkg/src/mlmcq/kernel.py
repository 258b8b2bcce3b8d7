"""Deterministic random-number streams and iterated stochastic integrals.

Streams are counter-based: a Philox generator keyed by a hash of
(seed, purpose, ids...). The same key always reproduces the same
variate sequence, distinct keys give statistically independent streams,
and stream creation is cheap enough to key per (level, batch, replicate).
Normal variates are produced by inverse-CDF transform of open-interval
uniforms so that the uniform-to-normal map is monotone.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = [
    "RngStream",
    "ItoIntegrals15",
    "StratIntegrals",
    "generator_for",
    "normals",
    "normal_pair",
    "ito_integrals_15",
    "strat_integrals",
    "couple_increments",
    "coarsen_i10",
    "pairwise_total",
]

# smallest uniform the inverse CDF ever sees; keeps ndtri finite
_MIN_UNIFORM = 0.5 / (1 << 53)


def _philox_key(ids: tuple) -> np.ndarray:
    digest = hashlib.sha256(repr(ids).encode("ascii")).digest()
    return np.frombuffer(digest[:16], dtype=np.uint64).copy()


def generator_for(*ids) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``ids``."""
    return np.random.Generator(np.random.Philox(key=_philox_key(ids)))


def normals(gen: np.random.Generator, size) -> np.ndarray:
    """Standard normal variates via inverse CDF of uniforms in (0, 1)."""
    u = gen.random(size=size)
    np.clip(u, _MIN_UNIFORM, None, out=u)  # u == 0.0 would map to -inf
    return ndtri(u)


@dataclass(frozen=True)
class RngStream:
    """Seeded stream identified by a (level, sample_index, replicate) triple.

    The same (seed, stream id) always yields the identical variate
    sequence; distinct stream ids are independent.
    """

    seed: int
    level: int = 0
    sample_index: int = 0
    replicate: int = 0

    def generator(self) -> np.random.Generator:
        return generator_for(self.seed, "stream", self.level, self.sample_index, self.replicate)


def normal_pair(stream: RngStream) -> tuple[float, float]:
    """First two standard normals of a stream, deterministic in the stream."""
    z = normals(stream.generator(), 2)
    return float(z[0]), float(z[1])


@dataclass(frozen=True)
class ItoIntegrals15:
    """Multiple Ito integrals over one step, as used by the order-1.5 scheme.

    I11, I01 and I111 are exact algebraic functions of I1, I10 and h:
    I11 = (I1^2 - h)/2, I01 = h*I1 - I10, I111 = ((I1^2)/3 - h)*I1/2.
    """

    h: float
    I1: float
    I11: float
    I10: float
    I01: float
    I111: float


def ito_integrals_15(h: float, u1: float, u2: float) -> ItoIntegrals15:
    """Build the order-1.5 integral set from two independent N(0,1) draws.

    I1 = sqrt(h)*u1 and I10 = h^{3/2} (u1 + u2/sqrt(3)) / 2; the rest
    follow from the exact identities.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    i1 = math.sqrt(h) * u1
    i10 = 0.5 * h ** 1.5 * (u1 + u2 / math.sqrt(3.0))
    return ItoIntegrals15(
        h=h,
        I1=i1,
        I11=0.5 * (i1 * i1 - h),
        I10=i10,
        I01=h * i1 - i10,
        I111=0.5 * (i1 * i1 / 3.0 - h) * i1,
    )


@dataclass(frozen=True)
class StratIntegrals:
    """Repeated Stratonovich integrals J_(1...1) = J1^k / k! for k = 1..6."""

    J1: float
    J11: float
    J111: float
    J1111: float
    J11111: float
    J111111: float


def strat_integrals(j1: float) -> StratIntegrals:
    """Powers-over-factorials Stratonovich integrals of a single increment."""
    return StratIntegrals(
        J1=j1,
        J11=j1 ** 2 / 2.0,
        J111=j1 ** 3 / 6.0,
        J1111=j1 ** 4 / 24.0,
        J11111=j1 ** 5 / 120.0,
        J111111=j1 ** 6 / 720.0,
    )


def couple_increments(fine):
    """Sum fine increments in pairs to get the coarse-grid increments.

    Works on the last axis; the total sum is preserved exactly when
    totals are formed with :func:`pairwise_total`.
    """
    fine = np.asarray(fine, dtype=float)
    n = fine.shape[-1]
    if n % 2:
        raise ValueError(f"fine increment count must be even, got {n}")
    return fine[..., 0::2] + fine[..., 1::2]


def coarsen_i10(i1_fine, i10_fine, h_fine: float):
    """Coarse I10 from two fine substeps via the exact refinement identity.

    Over [t, t+2h]: I10 = I10_first + h*I1_first + I10_second.
    """
    i1_fine = np.asarray(i1_fine, dtype=float)
    i10_fine = np.asarray(i10_fine, dtype=float)
    if i1_fine.shape[-1] % 2:
        raise ValueError("fine step count must be even")
    return i10_fine[..., 0::2] + h_fine * i1_fine[..., 0::2] + i10_fine[..., 1::2]


def pairwise_total(values):
    """Sum along the last axis by repeated pairing.

    The reduction tree starts with adjacent pairs, so summing coupled
    coarse increments gives bit-identical totals to summing the fine ones.
    """
    x = np.asarray(values, dtype=float)
    if x.shape[-1] == 0:
        return np.zeros(x.shape[:-1])
    while x.shape[-1] > 1:
        if x.shape[-1] % 2:
            pad = np.zeros(x.shape[:-1] + (1,))
            x = np.concatenate([x, pad], axis=-1)
        x = x[..., 0::2] + x[..., 1::2]
    return x[..., 0]
