"""Deterministic cost model for quantum-accelerated Monte Carlo methods.

Nothing here executes amplitude estimation; the module is a resource
calculator. Query counts follow the mean-estimation bound
Õ(sigma/eps) with the polylog factor
ceil(log2(1/delta)) * (log2(1/eps))^{3/2} * max(1, log2 log2 (1/eps));
all logs are base 2 and the implicit multiplicative constant is 1, so
only scaling slopes are meaningful, never absolute counts.

The level plan reproduces the three-regime construction: with
beta_hat = beta/2 compared against gamma, the per-level error budgets
eps_l are geometric (regime a), uniform (regime b), or inverse
geometric with a 2^{-(gamma-beta_hat)L/2} prefactor (regime c), and
N_l = ceil(2^{-beta_hat l} / eps_l). The budget inequalities
sum(eps_l) <= eps/2 and 2^{-alpha L} <= eps/2 are certified in exact
rational arithmetic (with a high-precision directed fallback when the
exponents' denominators are too large for integer power comparisons).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import mpmath

from .payoffs import GLOBALLY_LIPSCHITZ, PIECEWISE_CONSTANT, PIECEWISE_LIPSCHITZ

__all__ = [
    "QaPlan",
    "CostExponent",
    "BudgetCheck",
    "qamc_queries",
    "polylog_factor",
    "plan_qamlmc",
    "verify_budget",
    "asymptotic_exponents",
    "compare_costs",
    "CostRow",
]


def qamc_queries(sigma: float, eps: float, delta: float) -> int:
    """Query count of quantum-accelerated mean estimation.

    ceil((sigma/eps) (log2 sigma/eps)^{3/2} max(1, log2 log2 sigma/eps)
    * ceil(log2 1/delta)), defined for eps < sigma so the logs are positive.
    """
    if sigma <= 0:
        raise ValueError(f"standard deviation bound must be positive, got {sigma}")
    if not 0 < eps < sigma:
        raise ValueError(f"need 0 < eps < sigma, got eps={eps}, sigma={sigma}")
    if not 0 < delta < 0.5:
        raise ValueError(f"failure budget must be in (0, 1/2), got {delta}")
    ratio = sigma / eps
    log_ratio = math.log2(ratio)
    loglog = max(1.0, math.log2(log_ratio)) if log_ratio > 1 else 1.0
    return math.ceil(ratio * log_ratio ** 1.5 * loglog * math.ceil(math.log2(1.0 / delta)))


def polylog_factor(eps: float, delta: float) -> float:
    """The common multiplicative polylog factor of the level-plan cost."""
    log_eps = math.log2(1.0 / eps)
    loglog = max(1.0, math.log2(log_eps)) if log_eps > 1 else 1.0
    return math.ceil(math.log2(1.0 / delta)) * log_eps ** 1.5 * loglog


@dataclass(frozen=True)
class BudgetCheck:
    """Certified error-budget inequalities for a level plan."""

    sum_eps_ok: bool
    bias_ok: bool
    method: str  # "exact-rational" or "certified-precision"


@dataclass(frozen=True)
class QaPlan:
    """Output of the quantum-accelerated multilevel planner."""

    eps: float
    alpha: float
    beta: float
    gamma: float
    beta_hat: float
    regime: str  # "a": beta_hat > gamma, "b": equal, "c": beta_hat < gamma
    L: int
    delta: float
    eps_l: tuple[float, ...]
    n_l: tuple[int, ...]
    level_costs: tuple[float, ...]
    raw_cost: float
    polylog: float
    total_cost: float
    budget: BudgetCheck


def _exact_pow2_geq(exponent: Fraction, target: Fraction) -> Optional[bool]:
    """Exact decision of 2^exponent >= target, or None if infeasible."""
    p, q = exponent.numerator, exponent.denominator
    if target <= 0:
        return True
    if q > 64 or target.numerator.bit_length() * q > 8192 \
            or target.denominator.bit_length() * q > 8192:
        return None
    # 2^{p/q} >= target  <=>  2^p >= target^q  (q > 0)
    lhs_num = (1 << p) * target.denominator ** q if p >= 0 else target.denominator ** q
    rhs_num = target.numerator ** q if p >= 0 else target.numerator ** q << (-p)
    return lhs_num >= rhs_num


def _certified_pow2_geq(exponent: Fraction, target: Fraction) -> bool:
    """High-precision directed decision of 2^exponent >= target."""
    with mpmath.workprec(160):
        lhs = mpmath.mpf(exponent.numerator) / exponent.denominator
        rhs = mpmath.log(mpmath.mpf(target.numerator) / target.denominator, 2)
        margin = mpmath.mpf(2) ** -100
        if lhs - rhs >= margin:
            return True
        if rhs - lhs >= margin:
            return False
        # indistinguishable at working precision: treat as not satisfied so
        # callers err on the side of a larger L
        return False


def _pow2_geq(exponent: Fraction, target: Fraction) -> tuple[bool, str]:
    exact = _exact_pow2_geq(exponent, target)
    if exact is not None:
        return exact, "exact-rational"
    return _certified_pow2_geq(exponent, target), "certified-precision"


def _choose_levels(eps: Fraction, alpha: Fraction) -> tuple[int, str]:
    """Smallest L with 2^{-alpha L} <= eps/2, certified."""
    target = 2 / eps
    cand = max(0, math.ceil(math.log2(float(target)) / float(alpha)))
    method = "exact-rational"
    ok, m = _pow2_geq(alpha * cand, target)
    method = m
    while not ok:
        cand += 1
        ok, method = _pow2_geq(alpha * cand, target)
    while cand > 0:
        ok_below, _ = _pow2_geq(alpha * (cand - 1), target)
        if not ok_below:
            break
        cand -= 1
    return cand, method


def verify_budget(eps: float, alpha: float, beta: float, gamma: float, L: int) -> BudgetCheck:
    """Certify sum(eps_l) <= eps/2 and 2^{-alpha L} <= eps/2.

    The per-level budgets telescope to eps/2 (1 - 2^{-|e|(L+1)}) in
    regimes a and c with e the geometric exponent, and to exactly eps/2
    in regime b, so the sum bound reduces to an exact sign condition on
    rational exponents. The bias bound is an integer power comparison.
    """
    eps_f, alpha_f = Fraction(eps), Fraction(alpha)
    beta_hat = Fraction(beta) / 2
    gamma_f = Fraction(gamma)
    if beta_hat == gamma_f:
        sum_ok = True  # (L+1) * eps/(2(L+1)) == eps/2 exactly
    else:
        # sum eps_l == eps/2 (1 - 2^{-|beta_hat-gamma|(L+1)/2}) < eps/2
        sum_ok = abs(beta_hat - gamma_f) * (L + 1) > 0
    bias_ok, method = _pow2_geq(alpha_f * L, 2 / eps_f)
    return BudgetCheck(sum_eps_ok=bool(sum_ok), bias_ok=bool(bias_ok), method=method)


def plan_qamlmc(eps: float, alpha: float, beta: float, gamma: float) -> QaPlan:
    """Level count, per-level budgets, query counts and total planned cost."""
    if not 0 < eps < 1 / math.e:
        raise ValueError(f"precondition violated: eps < 1/e required, got eps={eps}")
    if min(alpha, beta, gamma) <= 0:
        raise ValueError("alpha, beta and gamma must all be positive")
    beta_hat = beta / 2.0
    if alpha < min(beta_hat, gamma):
        raise ValueError(
            f"precondition violated: alpha >= min(beta/2, gamma) required, "
            f"got alpha={alpha} < min({beta_hat}, {gamma})")

    L, method = _choose_levels(Fraction(eps), Fraction(alpha))
    delta = 1.0 / (100.0 * (L + 1))
    ls = range(L + 1)
    if beta_hat > gamma:
        regime = "a"
        e = (beta_hat - gamma) / 2.0
        scale = 0.5 * eps * (1.0 - 2.0 ** -e)
        eps_l = [scale * 2.0 ** (-e * l) for l in ls]
    elif beta_hat == gamma:
        regime = "b"
        eps_l = [eps / (2.0 * (L + 1))] * (L + 1)
    else:
        regime = "c"
        d = (gamma - beta_hat) / 2.0
        scale = 0.5 * eps * 2.0 ** (-d * L) * (1.0 - 2.0 ** -d)
        eps_l = [scale * 2.0 ** (d * l) for l in ls]

    n_l = [math.ceil(2.0 ** (-beta_hat * l) / e_l) for l, e_l in zip(ls, eps_l)]
    level_costs = [n * 2.0 ** (gamma * l) for l, n in zip(ls, n_l)]
    raw = sum(level_costs)
    poly = polylog_factor(eps, delta)
    budget = verify_budget(eps, alpha, beta, gamma, L)
    if method == "certified-precision":
        budget = BudgetCheck(budget.sum_eps_ok, budget.bias_ok, method)
    return QaPlan(eps=eps, alpha=alpha, beta=beta, gamma=gamma, beta_hat=beta_hat,
                  regime=regime, L=L, delta=delta, eps_l=tuple(eps_l), n_l=tuple(n_l),
                  level_costs=tuple(level_costs), raw_cost=raw, polylog=poly,
                  total_cost=raw * poly, budget=budget)


# ---------------------------------------------------------------------------
# asymptotic cost exponents
# ---------------------------------------------------------------------------

_BASE_LOG = "(log 1/eps)^{3/2} (loglog 1/eps)^2"
_B_REGIME_LOG = "(log 1/eps)^{7/2} (loglog 1/eps)^2"

_METHODS = ("mc", "qa-mc", "mlmc", "qa-mlmc", "bopm", "qa-bopm")
_CLASSES = (GLOBALLY_LIPSCHITZ, PIECEWISE_LIPSCHITZ, PIECEWISE_CONSTANT)


@dataclass(frozen=True)
class CostExponent:
    """Exponent of 1/eps in a method's cost, with its log-factor."""

    method: str
    r: float
    payoff_class: str
    exponent: float
    plus_o1: bool = False
    log_note: str = ""


def asymptotic_exponents(method: str, r: float, payoff_class: str) -> CostExponent:
    """Closed-form cost exponent of a method at scheme order r."""
    if method not in _METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {_METHODS}")
    if payoff_class not in _CLASSES:
        raise ValueError(f"unknown payoff class {payoff_class!r}; choose from {_CLASSES}")
    if r <= 0:
        raise ValueError(f"scheme order must be positive, got {r}")

    def make(exponent, plus_o1=False, log_note=""):
        return CostExponent(method=method, r=r, payoff_class=payoff_class,
                            exponent=float(exponent), plus_o1=plus_o1, log_note=log_note)

    lipschitz = payoff_class == GLOBALLY_LIPSCHITZ
    if method == "mc":
        return make(2.0 + 1.0 / r)
    if method == "qa-mc":
        return make(1.0 + 1.0 / r, log_note=_BASE_LOG)
    if method == "mlmc":
        if lipschitz:
            if r > 0.5:
                return make(2.0)
            if r == 0.5:
                return make(2.0, log_note="(log eps)^2")
            return make(1.0 / r)
        if r > 1.0:
            return make(2.0)
        return make(1.0 + 1.0 / r, plus_o1=True)
    if method == "qa-mlmc":
        if lipschitz:
            if r > 1.0:
                return make(1.0, log_note=_BASE_LOG)
            if r == 1.0:
                return make(1.0, log_note=_B_REGIME_LOG)
            return make(1.0 / r, log_note=_BASE_LOG)
        if r > 2.0:
            return make(1.0, log_note=_BASE_LOG)
        return make(0.5 + 1.0 / r, plus_o1=True, log_note=_BASE_LOG)
    # lattice methods price piecewise-constant payoffs only
    if payoff_class != PIECEWISE_CONSTANT:
        raise ValueError(f"method {method!r} covers piecewise-constant payoffs only")
    if method == "bopm":
        return make(2.0, log_note="log 1/eps")
    return make(1.0, log_note=_BASE_LOG)


# ---------------------------------------------------------------------------
# measured-vs-planned comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostRow:
    label: str
    eps: float
    measured_cost: float
    planned_cost: float
    planned_over_polylog: float


def compare_costs(eps_grid, scenarios, seed: int = 0, workers: int = 1) -> list[CostRow]:
    """Classical MLMC measured cost beside the planned QA-MLMC cost.

    Each scenario is a dict with keys label, model, scheme, payoff,
    alpha, beta, gamma and optional s0, T.
    """
    from . import engine

    eps_grid = list(eps_grid)
    if not eps_grid:
        raise ValueError("eps grid must be nonempty")
    rows = []
    for sc in scenarios:
        for eps in eps_grid:
            est = engine.mlmc(sc["model"], sc["scheme"], sc["payoff"], eps, seed,
                              s0=sc.get("s0", 100.0), T=sc.get("T", 1.0),
                              workers=workers)
            plan = plan_qamlmc(eps, sc["alpha"], sc["beta"], sc["gamma"])
            rows.append(CostRow(label=sc["label"], eps=eps,
                                measured_cost=est.total_cost,
                                planned_cost=plan.total_cost,
                                planned_over_polylog=plan.raw_cost))
    return rows
