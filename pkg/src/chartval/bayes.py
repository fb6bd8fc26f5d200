"""Exact Beta-Binomial posterior over a binomial proportion with
equal-tailed credible intervals and success/futility stopping.

The posterior after observing ``s`` successes among ``k`` trials under a
flat Beta(1,1) prior is Beta(1+s, 1+k-s).  Quantiles are computed by
inverting the regularized incomplete beta function; no external special
function library is used so that test suites can check this implementation
against independent integrators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

__all__ = [
    "PosteriorState",
    "CredibleInterval",
    "StoppingRule",
    "StoppingDecision",
    "Verdict",
    "BetaDomainError",
    "NoReviewedChartsError",
    "regularized_incomplete_beta",
    "beta_quantile",
    "posterior_update",
    "credible_interval",
    "point_estimate",
    "evaluate_stopping",
]

_CF_TOL = 1e-14
_CF_MAX_ITER = 500
# stop polishing once the bracket is a few ulps wide; anything looser lets
# steep-density roots exit before Newton has run at all
_QUANTILE_TOL = 1e-15


class BetaDomainError(ValueError):
    """Raised for quantile/CDF arguments outside the valid domain."""


class NoReviewedChartsError(ValueError):
    """Raised when a proportion is requested with zero trials."""


@dataclass(frozen=True)
class PosteriorState:
    """Success/trial counts (s, k) encoding the Beta(1+s, 1+k-s) posterior."""

    successes: int = 0
    trials: int = 0

    def __post_init__(self) -> None:
        if self.trials < 0 or self.successes < 0:
            raise ValueError("counts must be nonnegative")
        if self.successes > self.trials:
            raise ValueError(
                f"successes ({self.successes}) exceed trials ({self.trials})"
            )

    @property
    def shape_a(self) -> float:
        return 1.0 + self.successes

    @property
    def shape_b(self) -> float:
        return 1.0 + self.trials - self.successes

    @property
    def posterior_mean(self) -> float:
        return (1.0 + self.successes) / (2.0 + self.trials)


@dataclass(frozen=True)
class CredibleInterval:
    """Equal-tailed posterior interval [q_{a/2}, q_{1-a/2}]."""

    lower: float
    upper: float
    alpha: float = 0.05

    def __post_init__(self) -> None:
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise ValueError("interval endpoints must satisfy 0 <= lower <= upper <= 1")

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class StoppingRule:
    threshold: float = 0.75
    alpha: float = 0.05

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly inside (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly inside (0, 1)")


class Verdict(str, Enum):
    CONTINUE = "Continue"
    STOP_SUCCESS = "StopSuccess"
    STOP_FUTILITY = "StopFutility"


@dataclass(frozen=True)
class StoppingDecision:
    verdict: Verdict
    interval: CredibleInterval
    point_estimate: float


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        # even step
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        # odd step
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_TOL:
            return h
    raise ArithmeticError(f"continued fraction did not converge for a={a} b={b} x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), the Beta(a, b) CDF at x.

    Uses the continued-fraction expansion, switching to the symmetric form
    1 - I_{1-x}(b, a) when x is past the distribution's bulk so the fraction
    converges quickly on both sides.
    """
    if a <= 0.0 or b <= 0.0:
        raise BetaDomainError(f"shape parameters must be positive, got a={a} b={b}")
    if x <= 0.0:
        if x < 0.0:
            raise BetaDomainError(f"x={x} outside [0, 1]")
        return 0.0
    if x >= 1.0:
        if x > 1.0:
            raise BetaDomainError(f"x={x} outside [0, 1]")
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _beta_log_pdf(a: float, b: float, x: float) -> float:
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - _log_beta(a, b)


def beta_quantile(a: float, b: float, p: float) -> float:
    """Inverse of the Beta(a, b) CDF: x with I_x(a, b) = p.

    Bisection brackets the root, then Newton steps (using the beta density)
    polish it; any Newton step leaving the bracket falls back to bisection.
    Absolute tolerance 1e-10 on x.
    """
    if a <= 0.0 or b <= 0.0:
        raise BetaDomainError(f"shape parameters must be positive, got a={a} b={b}")
    if not 0.0 < p < 1.0:
        raise BetaDomainError(f"probability must lie in (0, 1), got {p}")
    if p > 0.5:
        # invert in whichever tail is nearer, via the reflection identity
        return 1.0 - beta_quantile(b, a, 1.0 - p)

    # bracket the root; geometric descent handles quantiles that sit many
    # orders of magnitude below the reach of arithmetic bisection
    lo, hi = 0.0, 1.0
    x = 0.5
    for _ in range(200):
        if regularized_incomplete_beta(a, b, x) <= p:
            lo = x
            break
        hi = x
        if x < 1e-290:
            lo = x
            break
        x *= 1e-2
    x = 0.5 * (lo + hi)
    for _ in range(40):
        if regularized_incomplete_beta(a, b, x) < p:
            lo = x
        else:
            hi = x
        x = 0.5 * (lo + hi)

    for _ in range(100):
        err = regularized_incomplete_beta(a, b, x) - p
        if err < 0.0:
            lo = x
        else:
            hi = x
        if abs(err) <= 1e-15 or hi - lo <= _QUANTILE_TOL * max(x, 1e-300):
            break
        try:
            pdf = math.exp(_beta_log_pdf(a, b, x))
        except ValueError:
            pdf = 0.0
        if pdf > 0.0:
            if x < 1e-3:
                # Newton on log(x): stable when the root hugs zero
                candidate = x * math.exp(-err / (pdf * x))
            else:
                candidate = x - err / pdf
        else:
            candidate = x
        if lo < candidate < hi:
            x = candidate
        else:
            x = 0.5 * (lo + hi)
    return min(max(x, 0.0), 1.0)


def posterior_update(state: PosteriorState, label: bool) -> PosteriorState:
    """One conjugate update: k += 1, and s += 1 iff the label is positive."""
    return PosteriorState(
        successes=state.successes + (1 if label else 0),
        trials=state.trials + 1,
    )


def credible_interval(state: PosteriorState, alpha: float = 0.05) -> CredibleInterval:
    """Equal-tailed interval from the Beta(1+s, 1+k-s) posterior."""
    if not 0.0 < alpha < 1.0:
        raise BetaDomainError(f"alpha must lie in (0, 1), got {alpha}")
    a, b = state.shape_a, state.shape_b
    return CredibleInterval(
        lower=beta_quantile(a, b, alpha / 2.0),
        upper=beta_quantile(a, b, 1.0 - alpha / 2.0),
        alpha=alpha,
    )


def point_estimate(state: PosteriorState) -> float:
    """Raw proportion s/k.  The posterior mean is available on the state."""
    if state.trials == 0:
        raise NoReviewedChartsError("point estimate undefined with zero trials")
    return state.successes / state.trials


def evaluate_stopping(state: PosteriorState, rule: StoppingRule) -> StoppingDecision:
    """Success iff the interval's lower bound strictly exceeds the threshold,
    futility iff the upper bound falls strictly below it; equality continues.
    """
    interval = credible_interval(state, rule.alpha)
    if interval.lower > rule.threshold:
        verdict = Verdict.STOP_SUCCESS
    elif interval.upper < rule.threshold:
        verdict = Verdict.STOP_FUTILITY
    else:
        verdict = Verdict.CONTINUE
    point = (
        state.successes / state.trials if state.trials > 0 else state.posterior_mean
    )
    return StoppingDecision(verdict=verdict, interval=interval, point_estimate=point)
