"""Sampling frame construction and seeded multi-wave stratified draws.

The cohort partitions into five disjoint strata: two assumed-label groups
(claims-/EHR- assumed negative; death-record suicides otherwise invisible,
assumed positive), the claims+ patients split by in-window healthcare
contact into reviewable / non-reviewable, and the claims-/EHR+ pool.
Only ClaimsPos_Reviewable and ClaimsNeg_EhrPos are sampleable.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum
from typing import Sequence

from .highlighter import DateRange

__all__ = [
    "Stratum",
    "PatientEvidence",
    "SamplingFrame",
    "WavePlan",
    "SamplingWeights",
    "StrataError",
    "assign_strata",
    "plan_wave",
    "compute_weights",
    "SAMPLEABLE_STRATA",
]


class StrataError(ValueError):
    pass


class Stratum(str, Enum):
    GROUP1_ASSUMED_NEGATIVE = "Group1_AssumedNegative"
    GROUP3_ASSUMED_POSITIVE = "Group3_AssumedPositive"
    CLAIMS_POS_REVIEWABLE = "ClaimsPos_Reviewable"
    CLAIMS_POS_NONREVIEWABLE = "ClaimsPos_NonReviewable"
    CLAIMS_NEG_EHR_POS = "ClaimsNeg_EhrPos"


SAMPLEABLE_STRATA = (Stratum.CLAIMS_POS_REVIEWABLE, Stratum.CLAIMS_NEG_EHR_POS)


@dataclass(frozen=True)
class PatientEvidence:
    patient_id: str
    claims_positive: bool
    claims_outcome_date: date | None = None
    ehr_positive: bool = False
    death_record_suicide: bool = False
    healthcare_contact_dates: tuple[date, ...] = ()
    first_match_date: date | None = None

    def __post_init__(self) -> None:
        if self.claims_positive and self.claims_outcome_date is None:
            raise StrataError(
                f"{self.patient_id}: claims-positive patient lacks an outcome date"
            )
        if not self.claims_positive and self.claims_outcome_date is not None:
            raise StrataError(
                f"{self.patient_id}: outcome date present on a claims-negative patient"
            )
        if self.ehr_positive and self.first_match_date is None:
            raise StrataError(
                f"{self.patient_id}: EHR-positive patient lacks a first-match date"
            )


@dataclass
class WavePlan:
    wave_index: int
    draws: dict[Stratum, tuple[str, ...]]
    review_windows: dict[str, DateRange]
    pool_exhausted: bool = False

    @property
    def patient_ids(self) -> tuple[str, ...]:
        out: list[str] = []
        for stratum in SAMPLEABLE_STRATA:
            out.extend(self.draws.get(stratum, ()))
        return tuple(out)

    @property
    def size(self) -> int:
        return len(self.patient_ids)


@dataclass(frozen=True)
class SamplingWeights:
    weights: dict[Stratum, float]

    def __getitem__(self, stratum: Stratum) -> float:
        return self.weights[stratum]


class SamplingFrame:
    """Mutable sampling state: per-stratum member lists, drawn sets, and a
    seeded generator.  Draws are without replacement across all waves.
    """

    def __init__(
        self,
        members: dict[Stratum, list[str]],
        evidence: dict[str, PatientEvidence],
        seed: int,
        review_window_days: int = 60,
    ):
        self.members = {s: list(members.get(s, [])) for s in Stratum}
        self.evidence = evidence
        self.seed = seed
        self.review_window_days = review_window_days
        self.drawn: dict[Stratum, list[str]] = {s: [] for s in Stratum}
        # remaining pools kept sorted so draw order depends only on ids + seed
        self._remaining: dict[Stratum, list[str]] = {
            s: sorted(self.members[s]) for s in SAMPLEABLE_STRATA
        }
        self._rng = random.Random(seed)
        self.waves_issued = 0

    def population(self, stratum: Stratum) -> int:
        return len(self.members[stratum])

    def sampled_count(self, stratum: Stratum) -> int:
        return len(self.drawn[stratum])

    def remaining(self, stratum: Stratum) -> int:
        return len(self._remaining.get(stratum, []))

    def population_counts(self) -> dict[Stratum, int]:
        return {s: self.population(s) for s in Stratum}

    def _draw(self, stratum: Stratum, count: int) -> list[str]:
        pool = self._remaining[stratum]
        count = min(count, len(pool))
        picked = [pool.pop(self._rng.randrange(len(pool))) for _ in range(count)]
        self.drawn[stratum].extend(picked)
        return picked


def assign_strata(
    cohort: Sequence[PatientEvidence],
    window_days: int = 60,
    seed: int = 0,
) -> SamplingFrame:
    """Partition the cohort into the five strata.

    Claims+ patients are reviewable when some healthcare contact falls within
    +/- window_days of the claims outcome date.  Death-record suicides form
    the assumed-positive group only when they are otherwise invisible
    (claims- and EHR-); a death-record flag on a claims+ or EHR+ patient
    leaves them in their sampleable stratum.
    """
    members: dict[Stratum, list[str]] = {s: [] for s in Stratum}
    evidence: dict[str, PatientEvidence] = {}
    for patient in cohort:
        if patient.patient_id in evidence:
            raise StrataError(f"duplicate patient id {patient.patient_id!r}")
        evidence[patient.patient_id] = patient
        members[_stratum_of(patient, window_days)].append(patient.patient_id)
    return SamplingFrame(members, evidence, seed=seed, review_window_days=window_days)


def _stratum_of(patient: PatientEvidence, window_days: int) -> Stratum:
    if patient.claims_positive:
        anchor = patient.claims_outcome_date
        assert anchor is not None
        window = timedelta(days=window_days)
        reviewable = any(
            abs(contact - anchor) <= window
            for contact in patient.healthcare_contact_dates
        )
        return (
            Stratum.CLAIMS_POS_REVIEWABLE
            if reviewable
            else Stratum.CLAIMS_POS_NONREVIEWABLE
        )
    if patient.ehr_positive:
        return Stratum.CLAIMS_NEG_EHR_POS
    if patient.death_record_suicide:
        return Stratum.GROUP3_ASSUMED_POSITIVE
    return Stratum.GROUP1_ASSUMED_NEGATIVE


def _review_window(patient: PatientEvidence, window_days: int) -> DateRange:
    if patient.claims_positive:
        anchor = patient.claims_outcome_date
    else:
        anchor = patient.first_match_date
    if anchor is None:
        raise StrataError(f"{patient.patient_id}: no anchor date for review window")
    delta = timedelta(days=window_days)
    return DateRange(start=anchor - delta, end=anchor + delta)


def plan_wave(
    frame: SamplingFrame,
    batch_size: int = 10,
    quotas: dict[Stratum, int] | None = None,
) -> WavePlan:
    """Draw the next wave without replacement.

    Default quotas split the batch equally across the two sampleable strata.
    When one pool runs short, the shortfall is filled from the other; with
    both depleted an empty plan flagged pool_exhausted is returned.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if quotas is None:
        half = batch_size // 2
        quotas = {
            Stratum.CLAIMS_POS_REVIEWABLE: half,
            Stratum.CLAIMS_NEG_EHR_POS: batch_size - half,
        }
    if any(s not in SAMPLEABLE_STRATA for s in quotas):
        raise ValueError("quotas may reference only sampleable strata")
    if sum(quotas.values()) != batch_size:
        raise ValueError("quotas must sum to batch_size")

    frame.waves_issued += 1
    draws: dict[Stratum, list[str]] = {s: [] for s in SAMPLEABLE_STRATA}
    shortfall = 0
    for stratum in SAMPLEABLE_STRATA:
        want = quotas.get(stratum, 0)
        got = frame._draw(stratum, want)
        draws[stratum].extend(got)
        shortfall += want - len(got)
    if shortfall:
        for stratum in SAMPLEABLE_STRATA:
            if shortfall == 0:
                break
            extra = frame._draw(stratum, shortfall)
            draws[stratum].extend(extra)
            shortfall -= len(extra)

    windows = {
        pid: _review_window(frame.evidence[pid], frame.review_window_days)
        for stratum in SAMPLEABLE_STRATA
        for pid in draws[stratum]
    }
    plan = WavePlan(
        wave_index=frame.waves_issued,
        draws={s: tuple(v) for s, v in draws.items()},
        review_windows=windows,
        pool_exhausted=all(not v for v in draws.values()),
    )
    return plan


def compute_weights(
    frame: SamplingFrame,
    sampled_counts: dict[Stratum, int] | None = None,
) -> SamplingWeights:
    """Inverse sampling-fraction weights N_h/n_h at the current snapshot.

    Assumed-label strata carry weight 1.0 exactly.  ``sampled_counts``
    overrides the frame's drawn counts (e.g. to use annotated counts).
    Referencing a sampled stratum with n_h = 0 is an error.
    """
    weights: dict[Stratum, float] = {
        Stratum.GROUP1_ASSUMED_NEGATIVE: 1.0,
        Stratum.GROUP3_ASSUMED_POSITIVE: 1.0,
    }
    for stratum in SAMPLEABLE_STRATA:
        population = frame.population(stratum)
        if population == 0:
            continue
        n = (
            sampled_counts.get(stratum, 0)
            if sampled_counts is not None
            else frame.sampled_count(stratum)
        )
        if n == 0:
            raise ZeroDivisionError(
                f"stratum {stratum.value} has population {population} but no samples"
            )
        weights[stratum] = population / n
    return SamplingWeights(weights=weights)
