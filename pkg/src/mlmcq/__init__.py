"""Multilevel Monte Carlo engine for SDE option pricing.

Seeded counter-based sampling, stochastic Taylor schemes up to strong
order 3 for geometric Brownian motion, MLMC with optimal sample
allocation, Malliavin Delta estimation, a sublinear binomial lattice
pricer, and a deterministic cost planner for quantum-accelerated MLMC.
"""

__version__ = "0.1.0"

from . import blackscholes, engine, kernel, models, payoffs
from .engine import MlmcEstimate, LevelStats, mlmc, plain_mc, median_boost
from .kernel import RngStream, ItoIntegrals15, StratIntegrals
from .models import SdeModel, gbm, local_vol, gbm_exact_terminal
from .payoffs import Payoff, european, asian, digital, digital_appendix, piecewise_constant
