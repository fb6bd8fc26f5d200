"""Cohort-scale performance metrics from stratified review.

The weighted confusion matrix projects sampled-stratum labels to the full
cohort with inverse sampling-fraction weights; the claims+ cells use the
uniform-extrapolation assumption (the positive proportion among reviewable
claims+ charts applies to non-reviewable ones as well).  Uncertainty for
NPV / sensitivity / specificity comes from a seeded stratified bootstrap;
the PPV interval is the exact Beta posterior interval.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bayes import (
    CredibleInterval,
    PosteriorState,
    credible_interval,
    point_estimate,
)
from .strata import SamplingWeights, Stratum

__all__ = [
    "WeightedConfusionMatrix",
    "MetricEstimate",
    "PerformanceReport",
    "AgreementReport",
    "TimingSummary",
    "ConditionTiming",
    "UndefinedMetricError",
    "build_confusion",
    "performance_report",
    "cohen_kappa",
    "timing_summary",
    "lower_median",
    "derive_replicate_seed",
]


class UndefinedMetricError(ArithmeticError):
    """A requested metric has a zero denominator."""


@dataclass(frozen=True)
class WeightedConfusionMatrix:
    tp: float
    fp: float
    fn: float
    tn: float
    components: dict[Stratum, dict[str, float]]

    @property
    def total(self) -> float:
        return self.tp + self.fp + self.fn + self.tn


def build_confusion(
    populations: dict[Stratum, int],
    weights: SamplingWeights,
    claims_neg_labels: Sequence[bool],
    ppv_state: PosteriorState,
) -> WeightedConfusionMatrix:
    """Assemble the weighted matrix.

    claims+ cells: tp = PPV_hat * N_claims+, fp = (1 - PPV_hat) * N_claims+,
    where N_claims+ spans reviewable and non-reviewable patients.  The
    claims-/EHR+ stratum contributes its labels scaled by its weight; the
    assumed-label groups enter with weight 1.
    """
    if ppv_state.trials == 0:
        raise UndefinedMetricError("no reviewed claims+ charts: PPV undefined")
    ppv_hat = point_estimate(ppv_state)

    n_claims_pos = populations.get(Stratum.CLAIMS_POS_REVIEWABLE, 0) + populations.get(
        Stratum.CLAIMS_POS_NONREVIEWABLE, 0
    )
    tp = ppv_hat * n_claims_pos
    fp = (1.0 - ppv_hat) * n_claims_pos

    n_cne = populations.get(Stratum.CLAIMS_NEG_EHR_POS, 0)
    pos_cne = sum(1 for label in claims_neg_labels if label)
    neg_cne = len(claims_neg_labels) - pos_cne
    if n_cne > 0:
        if not claims_neg_labels:
            raise UndefinedMetricError(
                "claims-/EHR+ stratum is populated but has no adjudicated labels"
            )
        w_cne = weights[Stratum.CLAIMS_NEG_EHR_POS]
    else:
        w_cne = 0.0

    n_g1 = populations.get(Stratum.GROUP1_ASSUMED_NEGATIVE, 0)
    n_g3 = populations.get(Stratum.GROUP3_ASSUMED_POSITIVE, 0)

    fn = w_cne * pos_cne + n_g3
    tn = w_cne * neg_cne + n_g1

    components = {
        Stratum.CLAIMS_POS_REVIEWABLE: {"tp": tp, "fp": fp},
        Stratum.CLAIMS_NEG_EHR_POS: {"fn": w_cne * pos_cne, "tn": w_cne * neg_cne},
        Stratum.GROUP1_ASSUMED_NEGATIVE: {"tn": float(n_g1)},
        Stratum.GROUP3_ASSUMED_POSITIVE: {"fn": float(n_g3)},
    }
    return WeightedConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn, components=components)


@dataclass(frozen=True)
class MetricEstimate:
    value: float
    lower: float | None = None
    upper: float | None = None


@dataclass(frozen=True)
class PerformanceReport:
    ppv: MetricEstimate
    npv: MetricEstimate
    sensitivity: MetricEstimate
    specificity: MetricEstimate
    snapshot: str
    matrix: WeightedConfusionMatrix

    def to_dict(self) -> dict:
        out: dict = {"snapshot": self.snapshot}
        for name in ("ppv", "npv", "sensitivity", "specificity"):
            est: MetricEstimate = getattr(self, name)
            out[name] = est.value
            out[f"{name}_lower"] = est.lower
            out[f"{name}_upper"] = est.upper
        return out


def _ratio(num: float, den: float, what: str) -> float:
    if den == 0:
        raise UndefinedMetricError(f"{what} undefined: zero denominator")
    return num / den


def derive_replicate_seed(base_seed: int, index: int) -> int:
    """Order-independent replicate seed: a keyed hash of (base_seed, index)."""
    digest = hashlib.blake2b(
        f"{base_seed}:{index}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


def performance_report(
    populations: dict[Stratum, int],
    weights: SamplingWeights,
    claims_neg_labels: Sequence[bool],
    ppv_state: PosteriorState,
    alpha: float = 0.05,
    snapshot: str = "at-stop",
    bootstrap_reps: int = 2000,
    bootstrap_seed: int = 0,
    compute_intervals: bool = True,
    allow_undefined: bool = False,
) -> PerformanceReport:
    """Point estimates plus intervals for the four metrics.

    The bootstrap resamples annotated charts with replacement within each
    sampled stratum (fixed n_h, which for exchangeable binary labels is a
    binomial redraw of the positive count), recomputes the extrapolated
    matrix per replicate, and takes percentile intervals.
    """
    matrix = build_confusion(populations, weights, claims_neg_labels, ppv_state)
    ppv_value = point_estimate(ppv_state)
    ci = credible_interval(ppv_state, alpha)

    def ratio(num, den, what):
        if allow_undefined and den == 0:
            return None
        return _ratio(num, den, what)

    npv = ratio(matrix.tn, matrix.tn + matrix.fn, "NPV")
    sens = ratio(matrix.tp, matrix.tp + matrix.fn, "sensitivity")
    spec = ratio(matrix.tn, matrix.tn + matrix.fp, "specificity")

    if not compute_intervals:
        return PerformanceReport(
            ppv=MetricEstimate(ppv_value, ci.lower, ci.upper),
            npv=MetricEstimate(npv),
            sensitivity=MetricEstimate(sens),
            specificity=MetricEstimate(spec),
            snapshot=snapshot,
            matrix=matrix,
        )

    rng = np.random.default_rng(derive_replicate_seed(bootstrap_seed, 0))
    k = ppv_state.trials
    n_cne = len(claims_neg_labels)
    pos_cne = sum(1 for label in claims_neg_labels if label)

    ppv_rep = rng.binomial(k, ppv_state.successes / k, size=bootstrap_reps) / k
    if n_cne > 0:
        pos_rep = rng.binomial(n_cne, pos_cne / n_cne, size=bootstrap_reps)
    else:
        pos_rep = np.zeros(bootstrap_reps, dtype=int)

    n_claims_pos = populations.get(Stratum.CLAIMS_POS_REVIEWABLE, 0) + populations.get(
        Stratum.CLAIMS_POS_NONREVIEWABLE, 0
    )
    w_cne = weights[Stratum.CLAIMS_NEG_EHR_POS] if n_cne > 0 else 0.0
    n_g1 = populations.get(Stratum.GROUP1_ASSUMED_NEGATIVE, 0)
    n_g3 = populations.get(Stratum.GROUP3_ASSUMED_POSITIVE, 0)

    tp_r = ppv_rep * n_claims_pos
    fp_r = (1.0 - ppv_rep) * n_claims_pos
    fn_r = w_cne * pos_rep + n_g3
    tn_r = w_cne * (n_cne - pos_rep) + n_g1

    def _interval(num: np.ndarray, den: np.ndarray, point) -> MetricEstimate:
        if point is None:
            return MetricEstimate(None)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = num / den
        vals = vals[np.isfinite(vals)]
        if vals.size == 0:
            return MetricEstimate(point, point, point)
        lo = float(np.quantile(vals, alpha / 2.0))
        hi = float(np.quantile(vals, 1.0 - alpha / 2.0))
        return MetricEstimate(point, min(lo, point), max(hi, point))

    return PerformanceReport(
        ppv=MetricEstimate(ppv_value, ci.lower, ci.upper),
        npv=_interval(tn_r, tn_r + fn_r, npv),
        sensitivity=_interval(tp_r, tp_r + fn_r, sens),
        specificity=_interval(tn_r, tn_r + fp_r, spec),
        snapshot=snapshot,
        matrix=matrix,
    )


@dataclass(frozen=True)
class AgreementReport:
    n_double: int
    observed_agreement: float
    expected_agreement: float
    kappa: float
    passed: bool


def cohen_kappa(
    pairs: Sequence[tuple[bool, bool]],
    threshold: float = 0.8,
) -> AgreementReport:
    """Cohen's kappa for two raters over binary labels.

    kappa = (p_o - p_e) / (1 - p_e).  When both marginals are degenerate
    (p_e = 1) and the raters fully agree, kappa is 1 by convention; a
    degenerate p_e with any disagreement is undefined.
    """
    if not pairs:
        raise ValueError("kappa requires at least one label pair")
    n = len(pairs)
    p_o = sum(1 for a, b in pairs if a == b) / n
    pa_pos = sum(1 for a, _ in pairs if a) / n
    pb_pos = sum(1 for _, b in pairs if b) / n
    p_e = pa_pos * pb_pos + (1 - pa_pos) * (1 - pb_pos)
    if p_e == 1.0:
        if p_o == 1.0:
            kappa = 1.0
        else:
            raise UndefinedMetricError(
                "kappa undefined: degenerate marginals with disagreement"
            )
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)
    return AgreementReport(
        n_double=n,
        observed_agreement=p_o,
        expected_agreement=p_e,
        kappa=kappa,
        passed=kappa > threshold,
    )


def lower_median(values: Sequence[float]) -> float:
    """Median using the lower of the two middle values for even counts."""
    if not values:
        raise ValueError("median of empty sequence")
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


@dataclass(frozen=True)
class ConditionTiming:
    count: int
    median: float
    minimum: float
    maximum: float


@dataclass(frozen=True)
class TimingSummary:
    with_highlights: ConditionTiming | None
    without_highlights: ConditionTiming | None
    paired_count: int
    paired_median_with: float | None
    paired_median_without: float | None
    reduction_pct: float | None


def _condition_stats(durations: Sequence[float]) -> ConditionTiming | None:
    if not durations:
        return None
    return ConditionTiming(
        count=len(durations),
        median=lower_median(durations),
        minimum=min(durations),
        maximum=max(durations),
    )


def timing_summary(
    records: Sequence[tuple[str, bool, float]],
) -> TimingSummary:
    """Per-condition review-duration summary.

    Each record is (patient_id, highlights_enabled, duration_minutes).
    Charts reviewed under both conditions form the paired subset; the
    reduction percentage compares the paired medians.
    """
    for _, _, duration in records:
        if duration < 0:
            raise ValueError("durations must be nonnegative")
    with_hl = [d for _, on, d in records if on]
    without_hl = [d for _, on, d in records if not on]

    by_patient: dict[str, dict[bool, list[float]]] = {}
    for pid, on, d in records:
        by_patient.setdefault(pid, {}).setdefault(on, []).append(d)
    paired = [pid for pid, conds in by_patient.items() if True in conds and False in conds]

    paired_with = paired_without = reduction = None
    if paired:
        paired_with = lower_median(
            [d for pid in paired for d in by_patient[pid][True]]
        )
        paired_without = lower_median(
            [d for pid in paired for d in by_patient[pid][False]]
        )
        if paired_without > 0:
            reduction = 100.0 * (1.0 - paired_with / paired_without)
    return TimingSummary(
        with_highlights=_condition_stats(with_hl),
        without_highlights=_condition_stats(without_hl),
        paired_count=len(paired),
        paired_median_with=paired_with,
        paired_median_without=paired_without,
        reduction_pct=reduction,
    )
