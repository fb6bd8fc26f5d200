"""Shared builders for small hand-constructed cohorts and scripted sessions."""

from datetime import date, timedelta

from chartval import PatientEvidence
from chartval.strata import Stratum
from chartval.workflow import AnnotationRecord, ValidationSession

OUTCOME = date(2020, 3, 1)


def claims_pos(pid: str, reviewable: bool = True) -> PatientEvidence:
    """A claims-positive patient, reviewable iff a contact falls in-window."""
    contact = OUTCOME + timedelta(days=10 if reviewable else 200)
    return PatientEvidence(
        patient_id=pid,
        claims_positive=True,
        claims_outcome_date=OUTCOME,
        healthcare_contact_dates=(contact,),
    )


def claims_neg_ehr_pos(pid: str) -> PatientEvidence:
    return PatientEvidence(
        patient_id=pid,
        claims_positive=False,
        ehr_positive=True,
        first_match_date=OUTCOME,
    )


def assumed_negative(pid: str) -> PatientEvidence:
    return PatientEvidence(patient_id=pid, claims_positive=False)


def assumed_positive(pid: str) -> PatientEvidence:
    return PatientEvidence(
        patient_id=pid, claims_positive=False, death_record_suicide=True
    )


def build_pool(n_claims_pos: int, n_cne: int, n_g1: int = 0, n_g3: int = 0):
    """Evidence list with the requested per-stratum counts."""
    cohort = []
    cohort.extend(claims_pos(f"cp{i:04d}") for i in range(n_claims_pos))
    cohort.extend(claims_neg_ehr_pos(f"cn{i:04d}") for i in range(n_cne))
    cohort.extend(assumed_negative(f"g1{i:04d}") for i in range(n_g1))
    cohort.extend(assumed_positive(f"g3{i:04d}") for i in range(n_g3))
    return cohort


def run_wave(session: ValidationSession, claims_pos_positives: int):
    """Issue one wave, label the requested number of claims+ charts positive
    (everything else negative, with both annotators agreeing in double
    phases), and advance.  Returns the stopping decision."""
    plan = session.next_batch()
    assert not plan.pool_exhausted
    decided: dict[str, str] = {}
    pos_left = claims_pos_positives
    for annotator in session.annotators:
        for assignment in session.assignments_for(annotator):
            pid = assignment["patient_id"]
            if pid not in decided:
                chart = session.charts[pid]
                if chart.stratum is Stratum.CLAIMS_POS_REVIEWABLE and pos_left > 0:
                    decided[pid] = "positive"
                    pos_left -= 1
                else:
                    decided[pid] = "negative"
            session.submit_annotation(
                AnnotationRecord(
                    wave_index=plan.wave_index,
                    patient_id=pid,
                    annotator_id=annotator,
                    label=decided[pid],
                )
            )
    return session.advance_wave()
