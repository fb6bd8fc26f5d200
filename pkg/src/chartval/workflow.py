"""Stateful validation session: phased waves, annotation intake with
adjudication, posterior updates, stopping, and deterministic replay.

The session's event log (wave, annotation, adjudication, advance records)
is the single source of truth: rebuilding a session from (cohort, config,
log) reproduces the live state exactly, because wave draws are seeded and
every state transition is logged.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from typing import Sequence

from .bayes import (
    PosteriorState,
    StoppingDecision,
    StoppingRule,
    Verdict,
    credible_interval,
    evaluate_stopping,
    posterior_update,
)
from .config import SessionConfig
from .highlighter import ClinicalNote, DateRange, TermDictionary, classify_patient
from .metrics import AgreementReport, cohen_kappa
from .strata import (
    SAMPLEABLE_STRATA,
    PatientEvidence,
    SamplingFrame,
    SamplingWeights,
    Stratum,
    WavePlan,
    assign_strata,
    compute_weights,
    plan_wave,
)

__all__ = [
    "Phase",
    "Label",
    "FinalLabel",
    "AnnotationRecord",
    "AdjudicationRecord",
    "TrajectoryPoint",
    "StopRecord",
    "ValidationSession",
    "WorkflowError",
    "DuplicateSubmissionError",
    "UnknownAssignmentError",
    "SessionStoppedError",
    "WaveIncompleteError",
    "build_evidence",
    "start_session",
    "replay_log",
    "ReplayResult",
]

DEFAULT_ANNOTATORS = ("annotator_a", "annotator_b")


class WorkflowError(ValueError):
    pass


class DuplicateSubmissionError(WorkflowError):
    pass


class UnknownAssignmentError(WorkflowError):
    pass


class SessionStoppedError(WorkflowError):
    pass


class WaveIncompleteError(WorkflowError):
    pass


class Phase(str, Enum):
    TRAINING = "Training"
    DOUBLE_ANNOTATION = "DoubleAnnotation"
    INDEPENDENT = "Independent"
    STOPPED = "Stopped"


LABELS = ("positive", "negative", "unsure", "unannotatable")
FINAL_LABELS = ("positive", "negative", "unannotatable")
Label = str
FinalLabel = str


@dataclass(frozen=True)
class AnnotationRecord:
    wave_index: int
    patient_id: str
    annotator_id: str
    label: Label
    reason_code: str = ""
    started_at: str = ""
    submitted_at: str = ""
    highlights_enabled: bool = True
    timing_only: bool = False
    server_received_at: str = ""
    seq: int | None = None

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise WorkflowError(f"unknown label {self.label!r}")
        if self.started_at and self.submitted_at:
            if self.submitted_at < self.started_at:
                raise WorkflowError("submitted_at precedes started_at")

    def duration_minutes(self) -> float | None:
        if not (self.started_at and self.submitted_at):
            return None
        start = datetime.fromisoformat(self.started_at)
        end = datetime.fromisoformat(self.submitted_at)
        return (end - start).total_seconds() / 60.0


@dataclass(frozen=True)
class AdjudicationRecord:
    supersedes_seq: int
    label: FinalLabel
    adjudicator_id: str
    seq: int | None = None

    def __post_init__(self) -> None:
        if self.label not in FINAL_LABELS:
            raise WorkflowError(f"adjudication label must be final, got {self.label!r}")


@dataclass(frozen=True)
class TrajectoryPoint:
    wave_index: int
    successes: int
    trials: int
    point_estimate: float
    lower: float
    upper: float
    verdict: str

    def to_dict(self) -> dict:
        return {
            "wave_index": self.wave_index,
            "s": self.successes,
            "k": self.trials,
            "point_estimate": self.point_estimate,
            "lower": self.lower,
            "upper": self.upper,
            "verdict": self.verdict,
        }


@dataclass(frozen=True)
class StopRecord:
    verdict: str
    wave_index: int
    reason: str  # "criterion" or "pool_exhausted"


@dataclass
class _ChartState:
    patient_id: str
    stratum: Stratum
    wave_index: int
    submissions: dict[str, AnnotationRecord] = field(default_factory=dict)
    final_label: FinalLabel | None = None
    pending_adjudication: bool = False
    annotation_seqs: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class _Snapshot:
    posterior: PosteriorState
    annotated_counts: dict[Stratum, int]
    claims_neg_labels: tuple[bool, ...]
    weights: SamplingWeights


def build_evidence(
    cohort: Sequence[PatientEvidence],
    notes: Sequence[ClinicalNote],
    dictionary: TermDictionary,
    followup: DateRange | None = None,
    count_negated_mentions: bool = False,
) -> list[PatientEvidence]:
    """Fill in EHR status on cohort records by scanning each patient's notes."""
    by_patient: dict[str, list[ClinicalNote]] = {}
    for note in notes:
        by_patient.setdefault(note.patient_id, []).append(note)
    out = []
    for patient in cohort:
        status, first = classify_patient(
            by_patient.get(patient.patient_id, []),
            dictionary,
            followup=followup,
            count_negated_mentions=count_negated_mentions,
        )
        out.append(
            replace(patient, ehr_positive=status, first_match_date=first)
        )
    return out


class ValidationSession:
    """Seven-step review session over a stratified sampling frame."""

    def __init__(
        self,
        evidence: Sequence[PatientEvidence],
        config: SessionConfig,
        annotators: tuple[str, str] = DEFAULT_ANNOTATORS,
        session_id: str = "session",
    ):
        if len(annotators) != 2 or annotators[0] == annotators[1]:
            raise WorkflowError("exactly two distinct annotators required")
        self.session_id = session_id
        self.config = config
        self.annotators = annotators
        self.frame: SamplingFrame = assign_strata(
            evidence, window_days=config.window_days, seed=config.seed
        )
        self.posterior = PosteriorState()
        self.phase = Phase.TRAINING if config.training_batch > 0 else Phase.INDEPENDENT
        self.charts: dict[str, _ChartState] = {}
        self.log: list[dict] = []
        self.trajectory: list[TrajectoryPoint] = []
        self.stop_record: StopRecord | None = None
        self.agreement: AgreementReport | None = None
        self._open_plan: WavePlan | None = None
        self._seq = 0
        self._unannotatable = 0
        self._at_stop: _Snapshot | None = None
        if all(self.frame.remaining(s) == 0 for s in SAMPLEABLE_STRATA):
            self._stop(Verdict.CONTINUE.value, 0, "pool_exhausted")

    # --- helpers ------------------------------------------------------------

    @property
    def pool_total(self) -> int:
        return sum(self.frame.population(s) for s in SAMPLEABLE_STRATA)

    @property
    def reviewed_count(self) -> int:
        return sum(self.frame.sampled_count(s) for s in SAMPLEABLE_STRATA)

    @property
    def savings(self) -> float:
        if self.pool_total == 0:
            return 0.0
        return 1.0 - self.reviewed_count / self.pool_total

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _stop(self, verdict: str, wave_index: int, reason: str) -> None:
        self.phase = Phase.STOPPED
        self.stop_record = StopRecord(
            verdict=verdict, wave_index=wave_index, reason=reason
        )
        if self._at_stop is None:
            self._at_stop = self._make_snapshot()

    def annotated_counts(self) -> dict[Stratum, int]:
        counts = {s: 0 for s in SAMPLEABLE_STRATA}
        for chart in self.charts.values():
            if chart.final_label in ("positive", "negative"):
                counts[chart.stratum] += 1
        return counts

    def claims_neg_labels(self) -> list[bool]:
        out = []
        for chart in sorted(self.charts.values(), key=lambda c: (c.wave_index, c.patient_id)):
            if (
                chart.stratum is Stratum.CLAIMS_NEG_EHR_POS
                and chart.final_label in ("positive", "negative")
            ):
                out.append(chart.final_label == "positive")
        return out

    def _make_snapshot(self) -> _Snapshot:
        counts = self.annotated_counts()
        try:
            weights = compute_weights(self.frame, sampled_counts=counts)
        except ZeroDivisionError:
            weights = SamplingWeights(
                weights={
                    Stratum.GROUP1_ASSUMED_NEGATIVE: 1.0,
                    Stratum.GROUP3_ASSUMED_POSITIVE: 1.0,
                }
            )
        return _Snapshot(
            posterior=self.posterior,
            annotated_counts=counts,
            claims_neg_labels=tuple(self.claims_neg_labels()),
            weights=weights,
        )

    def snapshot(self, which: str = "full") -> _Snapshot:
        """Metric inputs at the requested time: 'at-stop' or 'full'."""
        if which == "at-stop":
            if self._at_stop is None:
                raise WorkflowError("no stopping decision has been recorded")
            return self._at_stop
        return self._make_snapshot()

    # --- operations ---------------------------------------------------------

    def next_batch(self) -> WavePlan:
        if self.phase is Phase.STOPPED:
            raise SessionStoppedError("session is stopped")
        if self._open_plan is not None:
            raise WorkflowError(
                f"wave {self._open_plan.wave_index} is still open; advance it first"
            )
        cfg = self.config
        if self.phase in (Phase.TRAINING, Phase.DOUBLE_ANNOTATION):
            size = cfg.training_batch if self.phase is Phase.TRAINING else cfg.batch_size
            pos = round(size * cfg.claims_pos_quota / cfg.batch_size)
            quotas = {
                Stratum.CLAIMS_POS_REVIEWABLE: pos,
                Stratum.CLAIMS_NEG_EHR_POS: size - pos,
            }
        else:
            size = cfg.batch_size
            quotas = {
                Stratum.CLAIMS_POS_REVIEWABLE: cfg.claims_pos_quota,
                Stratum.CLAIMS_NEG_EHR_POS: cfg.claims_neg_quota,
            }
        plan = plan_wave(self.frame, batch_size=size, quotas=quotas)
        if plan.pool_exhausted:
            # logged so that replay reproduces the transition to Stopped
            self.log.append(
                {
                    "type": "wave",
                    "seq": self._next_seq(),
                    "wave_index": plan.wave_index,
                    "phase": self.phase.value,
                    "draws": {s.value: [] for s in SAMPLEABLE_STRATA},
                }
            )
            self._stop(Verdict.CONTINUE.value, plan.wave_index, "pool_exhausted")
            return plan
        for stratum in SAMPLEABLE_STRATA:
            for pid in plan.draws.get(stratum, ()):
                self.charts[pid] = _ChartState(
                    patient_id=pid, stratum=stratum, wave_index=plan.wave_index
                )
        self._open_plan = plan
        self.log.append(
            {
                "type": "wave",
                "seq": self._next_seq(),
                "wave_index": plan.wave_index,
                "phase": self.phase.value,
                "draws": {s.value: list(plan.draws.get(s, ())) for s in SAMPLEABLE_STRATA},
            }
        )
        return plan

    def assignments_for(self, annotator_id: str) -> list[dict]:
        """Open chart assignments for one annotator in the current wave."""
        if annotator_id not in self.annotators:
            raise UnknownAssignmentError(f"unknown annotator {annotator_id!r}")
        if self._open_plan is None:
            return []
        double = self.phase in (Phase.TRAINING, Phase.DOUBLE_ANNOTATION)
        out = []
        for i, pid in enumerate(self._open_plan.patient_ids):
            assigned = (
                self.annotators
                if double
                else (self.annotators[i % 2],)
            )
            if annotator_id not in assigned:
                continue
            chart = self.charts[pid]
            if annotator_id in chart.submissions:
                continue
            out.append(
                {
                    "patient_id": pid,
                    "wave_index": self._open_plan.wave_index,
                    "stratum": chart.stratum.value,
                    "review_window": {
                        "start": self._open_plan.review_windows[pid].start.isoformat(),
                        "end": self._open_plan.review_windows[pid].end.isoformat(),
                    },
                    "highlights_enabled": True,
                }
            )
        return out

    def _assigned_annotators(self, chart: _ChartState) -> tuple[str, ...]:
        if self._open_plan is None or chart.wave_index != self._open_plan.wave_index:
            return ()
        if self.phase in (Phase.TRAINING, Phase.DOUBLE_ANNOTATION):
            return self.annotators
        idx = self._open_plan.patient_ids.index(chart.patient_id)
        return (self.annotators[idx % 2],)

    def submit_annotation(self, record: AnnotationRecord) -> int:
        if self.phase is Phase.STOPPED and not self.config.continue_after_stop:
            raise SessionStoppedError("session is stopped")
        if record.annotator_id not in self.annotators:
            raise UnknownAssignmentError(f"unknown annotator {record.annotator_id!r}")
        chart = self.charts.get(record.patient_id)
        if chart is None:
            raise UnknownAssignmentError(
                f"patient {record.patient_id!r} has no issued assignment"
            )
        if record.timing_only:
            return self._accept_timing_review(record, chart)
        if record.annotator_id not in self._assigned_annotators(chart):
            raise UnknownAssignmentError(
                f"{record.annotator_id!r} is not assigned to {record.patient_id!r}"
            )
        if record.annotator_id in chart.submissions:
            raise DuplicateSubmissionError(
                f"{record.annotator_id!r} already labeled {record.patient_id!r}"
            )
        seq = self._next_seq()
        record = replace(record, seq=seq, wave_index=chart.wave_index)
        chart.submissions[record.annotator_id] = record
        chart.annotation_seqs.append(seq)
        self.log.append(_annotation_to_log(record))
        self._try_finalize(chart)
        return seq

    def _accept_timing_review(self, record: AnnotationRecord, chart: _ChartState) -> int:
        # re-review of a finalized chart for the with/without-highlights
        # timing comparison; never touches labels or counters
        if chart.final_label is None:
            raise WorkflowError(
                f"timing review requires a finalized chart, {record.patient_id!r} is open"
            )
        prior = {r.annotator_id for r in chart.submissions.values()}
        if record.annotator_id in prior:
            raise DuplicateSubmissionError(
                f"{record.annotator_id!r} already reviewed {record.patient_id!r}"
            )
        seq = self._next_seq()
        record = replace(record, seq=seq, wave_index=chart.wave_index)
        self.log.append(_annotation_to_log(record))
        return seq

    def _try_finalize(self, chart: _ChartState) -> None:
        if chart.final_label is not None or chart.pending_adjudication:
            return
        double = len(self._assigned_annotators(chart)) == 2
        labels = [r.label for r in chart.submissions.values()]
        if double:
            if len(labels) < 2:
                return
            if labels[0] == labels[1] and labels[0] in FINAL_LABELS:
                self._finalize(chart, labels[0])
            else:
                chart.pending_adjudication = True
        else:
            if labels[0] in FINAL_LABELS:
                self._finalize(chart, labels[0])
            else:
                chart.pending_adjudication = True

    def _finalize(self, chart: _ChartState, label: FinalLabel) -> None:
        chart.final_label = label
        chart.pending_adjudication = False
        if label == "unannotatable":
            self._unannotatable += 1
            return
        if chart.stratum is Stratum.CLAIMS_POS_REVIEWABLE:
            self.posterior = posterior_update(self.posterior, label == "positive")

    def submit_adjudication(self, record: AdjudicationRecord) -> int:
        target = next(
            (
                c
                for c in self.charts.values()
                if record.supersedes_seq in c.annotation_seqs
            ),
            None,
        )
        if target is None:
            raise UnknownAssignmentError(
                f"adjudication references unknown seq {record.supersedes_seq}"
            )
        if not target.pending_adjudication:
            raise WorkflowError(
                f"chart {target.patient_id!r} is not awaiting adjudication"
            )
        seq = self._next_seq()
        record = replace(record, seq=seq)
        self.log.append(
            {
                "type": "adjudication",
                "seq": seq,
                "supersedes_seq": record.supersedes_seq,
                "label": record.label,
                "adjudicator_id": record.adjudicator_id,
            }
        )
        self._finalize(target, record.label)
        return seq

    def wave_complete(self) -> bool:
        if self._open_plan is None:
            return False
        return all(
            self.charts[pid].final_label is not None
            for pid in self._open_plan.patient_ids
        )

    def double_annotated_pairs(self) -> list[tuple[bool, bool]]:
        pairs = []
        for chart in sorted(
            self.charts.values(), key=lambda c: (c.wave_index, c.patient_id)
        ):
            if len(chart.submissions) < 2:
                continue
            a = chart.submissions.get(self.annotators[0])
            b = chart.submissions.get(self.annotators[1])
            if a is None or b is None:
                continue
            if a.label in ("positive", "negative") and b.label in ("positive", "negative"):
                pairs.append((a.label == "positive", b.label == "positive"))
        return pairs

    def advance_wave(self) -> StoppingDecision:
        if self._open_plan is None:
            raise WorkflowError("no open wave to advance")
        if not self.wave_complete():
            missing = [
                pid
                for pid in self._open_plan.patient_ids
                if self.charts[pid].final_label is None
            ]
            raise WaveIncompleteError(f"wave incomplete, unresolved charts: {missing}")
        wave_index = self._open_plan.wave_index
        rule = StoppingRule(threshold=self.config.threshold, alpha=self.config.alpha)
        decision = evaluate_stopping(self.posterior, rule)

        if self.phase in (Phase.TRAINING, Phase.DOUBLE_ANNOTATION):
            pairs = self.double_annotated_pairs()
            if pairs:
                self.agreement = cohen_kappa(
                    pairs, threshold=self.config.kappa_threshold
                )
                gate_passed = self.agreement.passed
            else:
                gate_passed = False
            self._record_trajectory(
                wave_index, Verdict.CONTINUE.value, decision.interval
            )
            self.phase = (
                Phase.INDEPENDENT if gate_passed else Phase.DOUBLE_ANNOTATION
            )
            decision = StoppingDecision(
                verdict=Verdict.CONTINUE,
                interval=decision.interval,
                point_estimate=decision.point_estimate,
            )
        else:
            self._record_trajectory(wave_index, decision.verdict.value, decision.interval)
            if decision.verdict is not Verdict.CONTINUE:
                if self._at_stop is None:
                    self._at_stop = self._make_snapshot()
                if not self.config.continue_after_stop:
                    self._stop(decision.verdict.value, wave_index, "criterion")
                elif self.stop_record is None:
                    self.stop_record = StopRecord(
                        verdict=decision.verdict.value,
                        wave_index=wave_index,
                        reason="criterion",
                    )
        self.log.append(
            {"type": "advance", "seq": self._next_seq(), "wave_index": wave_index}
        )
        self._open_plan = None
        return decision

    def _record_trajectory(self, wave_index, verdict, interval=None) -> None:
        if interval is None or interval.alpha != self.config.alpha:
            interval = credible_interval(self.posterior, self.config.alpha)
        point = (
            self.posterior.successes / self.posterior.trials
            if self.posterior.trials
            else self.posterior.posterior_mean
        )
        self.trajectory.append(
            TrajectoryPoint(
                wave_index=wave_index,
                successes=self.posterior.successes,
                trials=self.posterior.trials,
                point_estimate=point,
                lower=interval.lower,
                upper=interval.upper,
                verdict=verdict,
            )
        )

    def timing_records(self) -> list[tuple[str, bool, float]]:
        out = []
        for entry in self.log:
            if entry.get("type") != "annotation":
                continue
            record = _annotation_from_log(entry)
            duration = record.duration_minutes()
            if duration is not None:
                out.append((record.patient_id, record.highlights_enabled, duration))
        return out

    def state_fingerprint(self) -> dict:
        """Canonical view of all session state, for replay-equality checks."""
        return {
            "phase": self.phase.value,
            "posterior": [self.posterior.successes, self.posterior.trials],
            "drawn": {
                s.value: sorted(self.frame.drawn[s]) for s in SAMPLEABLE_STRATA
            },
            "finals": {
                pid: chart.final_label for pid, chart in sorted(self.charts.items())
            },
            "pending": sorted(
                pid for pid, c in self.charts.items() if c.pending_adjudication
            ),
            "stop": (
                None
                if self.stop_record is None
                else [
                    self.stop_record.verdict,
                    self.stop_record.wave_index,
                    self.stop_record.reason,
                ]
            ),
            "trajectory": [p.to_dict() for p in self.trajectory],
            "unannotatable": self._unannotatable,
            "log": self.log,
            "seq": self._seq,
        }


def _annotation_to_log(record: AnnotationRecord) -> dict:
    return {
        "type": "annotation",
        "seq": record.seq,
        "wave_index": record.wave_index,
        "patient_id": record.patient_id,
        "annotator_id": record.annotator_id,
        "label": record.label,
        "reason_code": record.reason_code,
        "started_at": record.started_at,
        "submitted_at": record.submitted_at,
        "highlights_enabled": record.highlights_enabled,
        "timing_only": record.timing_only,
        "server_received_at": record.server_received_at,
    }


def _annotation_from_log(entry: dict) -> AnnotationRecord:
    return AnnotationRecord(
        wave_index=entry["wave_index"],
        patient_id=entry["patient_id"],
        annotator_id=entry["annotator_id"],
        label=entry["label"],
        reason_code=entry.get("reason_code", ""),
        started_at=entry.get("started_at", ""),
        submitted_at=entry.get("submitted_at", ""),
        highlights_enabled=entry.get("highlights_enabled", True),
        timing_only=entry.get("timing_only", False),
        server_received_at=entry.get("server_received_at", ""),
        seq=entry.get("seq"),
    )


def start_session(
    evidence: Sequence[PatientEvidence],
    config: SessionConfig,
    annotators: tuple[str, str] = DEFAULT_ANNOTATORS,
    session_id: str = "session",
) -> ValidationSession:
    return ValidationSession(
        evidence, config, annotators=annotators, session_id=session_id
    )


@dataclass(frozen=True)
class ReplayResult:
    session: ValidationSession
    trajectory: tuple[TrajectoryPoint, ...]
    reviewed: int
    pool_total: int
    savings: float
    stop: StopRecord | None


def replay_log(
    evidence: Sequence[PatientEvidence],
    config: SessionConfig,
    log: Sequence[dict],
    annotators: tuple[str, str] = DEFAULT_ANNOTATORS,
) -> ReplayResult:
    """Reconstruct a session from its event log.

    Wave records are cross-checked against the regenerated seeded draws;
    any divergence, seq gap, or unknown reference is a corruption error.
    """
    session = start_session(evidence, config, annotators=annotators)
    expected_seq = 1
    for entry in log:
        seq = entry.get("seq")
        if seq != expected_seq:
            raise WorkflowError(f"log corruption: expected seq {expected_seq}, got {seq}")
        expected_seq += 1
        rtype = entry.get("type")
        if rtype == "wave":
            plan = session.next_batch()
            regenerated = {
                s.value: list(plan.draws.get(s, ())) for s in SAMPLEABLE_STRATA
            }
            if regenerated != entry.get("draws"):
                raise WorkflowError(
                    f"log corruption: wave {entry.get('wave_index')} draws diverge "
                    "from the seeded plan"
                )
        elif rtype == "annotation":
            session.submit_annotation(
                replace(_annotation_from_log(entry), seq=None)
            )
        elif rtype == "adjudication":
            session.submit_adjudication(
                AdjudicationRecord(
                    supersedes_seq=entry["supersedes_seq"],
                    label=entry["label"],
                    adjudicator_id=entry.get("adjudicator_id", ""),
                )
            )
        elif rtype == "advance":
            session.advance_wave()
        else:
            raise WorkflowError(f"log corruption: unknown record type {rtype!r}")
    return ReplayResult(
        session=session,
        trajectory=tuple(session.trajectory),
        reviewed=session.reviewed_count,
        pool_total=session.pool_total,
        savings=session.savings,
        stop=session.stop_record,
    )
