"""Synthetic cohorts with known ground truth and oracle annotators.

The generator is deliberately simple: a Bernoulli outcome per patient, a
claims classification consistent with the requested operating point
(sensitivity, PPV), per-patient mention flags for the strata model, and
dates placed uniformly inside a fixed study window.  Realistic note text
is a non-goal; notes are materialized separately only when a run needs a
reviewable chart surface.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field, fields
from datetime import date, timedelta
from typing import Callable, Sequence

import numpy as np

from .config import SessionConfig, parse_keyvalues
from .highlighter import ClinicalNote
from .metrics import derive_replicate_seed, performance_report
from .strata import SAMPLEABLE_STRATA, PatientEvidence, Stratum
from .workflow import (
    AdjudicationRecord,
    AnnotationRecord,
    Phase,
    ValidationSession,
    start_session,
)

__all__ = [
    "SyntheticCohortSpec",
    "OracleAnnotator",
    "ExperimentResult",
    "SweepCell",
    "InfeasibleOperatingPoint",
    "generate_cohort",
    "materialize_notes",
    "simulate_run",
    "sweep_experiment",
]

STUDY_START = date(2020, 1, 1)
STUDY_DAYS = 180


class InfeasibleOperatingPoint(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticCohortSpec:
    cohort_size: int = 10_000
    prevalence: float = 0.01
    claims_sensitivity: float = 0.8
    claims_ppv: float = 0.6
    reviewable_rate: float = 0.9
    term_mention_rate: float = 0.9
    false_mention_rate: float = 0.01
    negated_mention_rate: float = 0.2
    death_record_rate: float = 0.5
    notes_min: int = 1
    notes_max: int = 5
    seed: int = 0
    claims_fp_rate: float | None = None

    def __post_init__(self) -> None:
        if self.cohort_size < 1:
            raise ValueError("cohort_size must be >= 1")
        for name in (
            "prevalence",
            "claims_sensitivity",
            "claims_ppv",
            "reviewable_rate",
            "term_mention_rate",
            "false_mention_rate",
            "negated_mention_rate",
            "death_record_rate",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        self.false_positive_rate()  # reject infeasible operating points up front

    def false_positive_rate(self) -> float:
        """Claims+ probability for a truly negative patient, implied by the
        (sensitivity, PPV) operating point at the given prevalence."""
        if self.claims_fp_rate is not None:
            if not 0.0 <= self.claims_fp_rate <= 1.0:
                raise InfeasibleOperatingPoint("claims_fp_rate outside [0, 1]")
            return self.claims_fp_rate
        tp_mass = self.prevalence * self.claims_sensitivity
        if tp_mass == 0.0:
            return 0.0
        if self.claims_ppv == 0.0:
            raise InfeasibleOperatingPoint(
                "PPV 0 is impossible while true positives are flagged; "
                "set prevalence or sensitivity to 0, or give claims_fp_rate"
            )
        if self.prevalence >= 1.0:
            if self.claims_ppv < 1.0:
                raise InfeasibleOperatingPoint(
                    "PPV < 1 requires some truly negative patients"
                )
            return 0.0
        rate = tp_mass * (1.0 - self.claims_ppv) / (
            self.claims_ppv * (1.0 - self.prevalence)
        )
        if rate > 1.0:
            raise InfeasibleOperatingPoint(
                f"operating point implies false-positive rate {rate:.3f} > 1"
            )
        return rate

    @classmethod
    def from_file(cls, path) -> "SyntheticCohortSpec":
        raw = parse_keyvalues(path)
        kwargs = {}
        valid = {f.name for f in fields(cls)}
        int_keys = {"cohort_size", "notes_min", "notes_max", "seed"}
        for key, value in raw.items():
            if key not in valid:
                raise ValueError(f"unknown simulator spec key {key!r}")
            kwargs[key] = int(value) if key in int_keys else float(value)
        return cls(**kwargs)


@dataclass(frozen=True)
class OracleAnnotator:
    """Labels charts from hidden truth, with optional error and unsure rates.

    Deterministic per (seed, patient, annotator): the same chart always gets
    the same label from the same oracle.
    """

    error_rate: float = 0.0
    unsure_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.error_rate <= 1.0 or not 0.0 <= self.unsure_rate <= 1.0:
            raise ValueError("oracle rates must lie in [0, 1]")

    def label(self, patient_id: str, truth: bool, annotator_id: str = "") -> str:
        digest = hashlib.blake2b(
            f"{self.seed}:{patient_id}:{annotator_id}".encode(), digest_size=8
        ).digest()
        rng = random.Random(int.from_bytes(digest, "big"))
        if rng.random() < self.unsure_rate:
            return "unsure"
        flipped = rng.random() < self.error_rate
        value = truth != flipped
        return "positive" if value else "negative"


def generate_cohort(
    spec: SyntheticCohortSpec,
) -> tuple[list[PatientEvidence], dict[str, bool]]:
    """Build the cohort and its hidden truth table.

    Per patient: outcome ~ Bernoulli(prevalence); claims+ with probability
    sensitivity for cases and the implied false-positive rate for
    non-cases; in-window healthcare contact for claims+ with probability
    reviewable_rate; a (possibly negated-only) dictionary mention driving
    EHR status; a death-record flag for otherwise-invisible cases.
    """
    n = spec.cohort_size
    rng = np.random.default_rng(spec.seed)
    truth = rng.random(n) < spec.prevalence
    fp_rate = spec.false_positive_rate()
    claims_pos = np.where(
        truth,
        rng.random(n) < spec.claims_sensitivity,
        rng.random(n) < fp_rate,
    )
    reviewable = rng.random(n) < spec.reviewable_rate
    mention = np.where(
        truth,
        rng.random(n) < spec.term_mention_rate,
        rng.random(n) < spec.false_mention_rate,
    )
    negated_only = rng.random(n) < spec.negated_mention_rate
    ehr_pos = mention & ~negated_only
    death_flag = rng.random(n) < spec.death_record_rate
    outcome_offset = rng.integers(0, STUDY_DAYS, size=n)
    match_offset = rng.integers(0, STUDY_DAYS, size=n)

    width = len(str(n))
    cohort: list[PatientEvidence] = []
    hidden: dict[str, bool] = {}
    for i in range(n):
        pid = f"p{i:0{width}d}"
        is_claims = bool(claims_pos[i])
        outcome_date = (
            STUDY_START + timedelta(days=int(outcome_offset[i])) if is_claims else None
        )
        contacts: tuple[date, ...] = ()
        if is_claims:
            if reviewable[i]:
                contacts = (outcome_date + timedelta(days=10),)
            else:
                contacts = (outcome_date + timedelta(days=200),)
        is_ehr = bool(ehr_pos[i])
        invisible_case = truth[i] and not is_claims and not is_ehr
        cohort.append(
            PatientEvidence(
                patient_id=pid,
                claims_positive=is_claims,
                claims_outcome_date=outcome_date,
                ehr_positive=is_ehr,
                death_record_suicide=bool(invisible_case and death_flag[i]),
                healthcare_contact_dates=contacts,
                first_match_date=(
                    STUDY_START + timedelta(days=int(match_offset[i]))
                    if is_ehr
                    else None
                ),
            )
        )
        hidden[pid] = bool(truth[i])
    return cohort, hidden


_POSITIVE_SENTENCE = "Patient admitted after a suicide attempt last night."
_NEGATED_SENTENCE = "Patient denies suicidal ideation. No evidence of suicide attempt."
_NEUTRAL_SENTENCE = "Routine follow up visit. Medications reviewed."


def materialize_notes(
    cohort: Sequence[PatientEvidence],
    hidden: dict[str, bool],
    spec: SyntheticCohortSpec,
) -> list[ClinicalNote]:
    """Simple note text consistent with each patient's generated flags, for
    runs that exercise the highlighting and chart-view surface."""
    rng = random.Random(spec.seed ^ 0x5EED)
    notes: list[ClinicalNote] = []
    for patient in cohort:
        n_notes = rng.randint(spec.notes_min, max(spec.notes_min, spec.notes_max))
        anchor = (
            patient.claims_outcome_date
            or patient.first_match_date
            or STUDY_START
        )
        for j in range(n_notes):
            day = anchor + timedelta(days=rng.randint(-30, 30))
            notes.append(
                ClinicalNote(
                    note_id=f"{patient.patient_id}-n{j}",
                    patient_id=patient.patient_id,
                    date=day,
                    text=_NEUTRAL_SENTENCE,
                )
            )
        if patient.ehr_positive and patient.first_match_date is not None:
            text = (
                _POSITIVE_SENTENCE if hidden[patient.patient_id] else _NEGATED_SENTENCE
            )
            notes.append(
                ClinicalNote(
                    note_id=f"{patient.patient_id}-match",
                    patient_id=patient.patient_id,
                    date=patient.first_match_date,
                    text=text,
                )
            )
    return notes


@dataclass(frozen=True)
class ExperimentResult:
    stop_verdict: str | None
    stop_wave: int | None
    stop_reason: str | None
    charts_reviewed: int
    pool_total: int
    savings: float
    at_stop: dict | None
    full_review: dict | None
    true_metrics: dict

    def to_row(self) -> dict:
        row = {
            "stop_verdict": self.stop_verdict,
            "stop_wave": self.stop_wave,
            "stop_reason": self.stop_reason,
            "charts_reviewed": self.charts_reviewed,
            "pool_total": self.pool_total,
            "savings": self.savings,
        }
        for prefix, report in (("atstop", self.at_stop), ("full", self.full_review)):
            for key in ("ppv", "ppv_lower", "ppv_upper", "npv", "sensitivity", "specificity"):
                row[f"{prefix}_{key}"] = None if report is None else report.get(key)
        for key, value in self.true_metrics.items():
            row[f"true_{key}"] = value
        return row


def _true_metrics(
    cohort: Sequence[PatientEvidence], hidden: dict[str, bool]
) -> dict[str, float | None]:
    tp = fp = fn = tn = 0
    for patient in cohort:
        truth = hidden[patient.patient_id]
        if patient.claims_positive:
            tp += truth
            fp += not truth
        else:
            fn += truth
            tn += not truth
    def ratio(a, b):
        return a / b if b else None
    return {
        "ppv": ratio(tp, tp + fp),
        "npv": ratio(tn, tn + fn),
        "sensitivity": ratio(tp, tp + fn),
        "specificity": ratio(tn, tn + fp),
    }


def _report_dict(session: ValidationSession, which: str, intervals: bool) -> dict | None:
    try:
        snap = session.snapshot(which)
    except Exception:
        return None
    if snap.posterior.trials == 0:
        return None
    populations = session.frame.population_counts()
    report = performance_report(
        populations,
        snap.weights,
        list(snap.claims_neg_labels),
        snap.posterior,
        alpha=session.config.alpha,
        snapshot=which,
        compute_intervals=intervals,
        bootstrap_seed=session.config.seed,
        allow_undefined=True,
    )
    return report.to_dict()


def simulate_run(
    spec: SyntheticCohortSpec,
    oracle: OracleAnnotator,
    config: SessionConfig,
    max_waves: int | None = None,
) -> ExperimentResult:
    """One end-to-end session against a generated cohort.

    Runs waves mechanically with oracle labels (unsure charts adjudicated
    from truth) until a stopping verdict or pool depletion, scoring the
    weighted estimates against the hidden truth.
    """
    cohort, hidden = generate_cohort(spec)
    session = start_session(cohort, config)
    adjudicator = OracleAnnotator(seed=oracle.seed ^ 0xADCDE)
    waves = 0
    while session.phase is not Phase.STOPPED:
        if max_waves is not None and waves >= max_waves:
            break
        plan = session.next_batch()
        if plan.pool_exhausted:
            break
        waves += 1
        for annotator in session.annotators:
            for assignment in session.assignments_for(annotator):
                pid = assignment["patient_id"]
                session.submit_annotation(
                    AnnotationRecord(
                        wave_index=plan.wave_index,
                        patient_id=pid,
                        annotator_id=annotator,
                        label=oracle.label(pid, hidden[pid], annotator),
                    )
                )
        for chart in list(session.charts.values()):
            if chart.pending_adjudication:
                session.submit_adjudication(
                    AdjudicationRecord(
                        supersedes_seq=chart.annotation_seqs[0],
                        label="positive" if hidden[chart.patient_id] else "negative",
                        adjudicator_id="oracle_adjudicator",
                    )
                )
        session.advance_wave()

    stop = session.stop_record
    at_stop = _report_dict(session, "at-stop", intervals=False)
    full = None
    if config.continue_after_stop or (stop is not None and stop.reason == "pool_exhausted"):
        full = _report_dict(session, "full", intervals=False)
    return ExperimentResult(
        stop_verdict=stop.verdict if stop else None,
        stop_wave=stop.wave_index if stop else None,
        stop_reason=stop.reason if stop else None,
        charts_reviewed=session.reviewed_count,
        pool_total=session.pool_total,
        savings=session.savings,
        at_stop=at_stop,
        full_review=full,
        true_metrics=_true_metrics(cohort, hidden),
    )


@dataclass
class SweepCell:
    spec: SyntheticCohortSpec
    results: list[ExperimentResult] = field(default_factory=list)

    @property
    def mean_savings(self) -> float:
        return sum(r.savings for r in self.results) / len(self.results)

    @property
    def coverage(self) -> float | None:
        """Fraction of runs whose at-stop credible interval contains the
        spec's true claims PPV."""
        hits = total = 0
        for result in self.results:
            if result.at_stop is None:
                continue
            true_ppv = result.true_metrics.get("ppv")
            if true_ppv is None:
                continue
            total += 1
            if result.at_stop["ppv_lower"] <= true_ppv <= result.at_stop["ppv_upper"]:
                hits += 1
        return hits / total if total else None

    def stop_wave_distribution(self) -> dict[int | None, int]:
        out: dict[int | None, int] = {}
        for result in self.results:
            out[result.stop_wave] = out.get(result.stop_wave, 0) + 1
        return out

    def mean_error(self, metric: str, which: str = "full") -> float | None:
        errors = []
        for result in self.results:
            report = result.full_review if which == "full" else result.at_stop
            if report is None:
                continue
            est = report.get(metric)
            true = result.true_metrics.get(metric)
            if est is None or true is None:
                continue
            errors.append(est - true)
        return sum(errors) / len(errors) if errors else None


def sweep_experiment(
    specs: Sequence[SyntheticCohortSpec],
    replicates: int,
    config: SessionConfig,
    oracle: OracleAnnotator | None = None,
    base_seed: int = 0,
    progress: Callable[[int, int], None] | None = None,
) -> list[SweepCell]:
    """Run each spec cell for R replicates with derived per-replicate seeds.

    Replicate seeds are hash(base_seed, cell, index), so results do not
    depend on execution order.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    cells = []
    for cell_index, spec in enumerate(specs):
        cell = SweepCell(spec=spec)
        for rep in range(replicates):
            seed = derive_replicate_seed(base_seed, cell_index * 1_000_003 + rep)
            rep_spec = SyntheticCohortSpec(
                **{
                    **{f.name: getattr(spec, f.name) for f in fields(spec)},
                    "seed": seed,
                }
            )
            rep_oracle = oracle or OracleAnnotator(seed=seed)
            cell.results.append(simulate_run(rep_spec, rep_oracle, config))
            if progress is not None:
                progress(cell_index, rep)
        cells.append(cell)
    return cells
