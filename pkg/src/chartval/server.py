"""HTTP gateway: serves assignments, highlighted charts, annotation intake,
and the operator dashboard endpoints.

All mutations funnel through the single in-memory session guarded by a
lock; accepted events are persisted to the append-only log before the
response is acknowledged.  Authentication is static bearer tokens with
three roles (annotator, adjudicator, operator).
"""

from __future__ import annotations

import threading
from datetime import datetime, timezone

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from pydantic import BaseModel

from .gateway import Identity, SessionDir
from .highlighter import chart_view
from .metrics import UndefinedMetricError, performance_report, timing_summary
from .workflow import (
    AdjudicationRecord,
    AnnotationRecord,
    DuplicateSubmissionError,
    SessionStoppedError,
    UnknownAssignmentError,
    WorkflowError,
)

__all__ = ["create_app"]


class AnnotationBody(BaseModel):
    patient_id: str
    label: str
    wave_index: int = 0
    annotator_id: str = ""
    reason_code: str = ""
    started_at: str = ""
    submitted_at: str = ""
    highlights_enabled: bool = True
    timing_only: bool = False


class AdjudicationBody(BaseModel):
    supersedes_seq: int
    label: str
    adjudicator_id: str = ""


def create_app(session_dir: str) -> FastAPI:
    sdir = SessionDir(session_dir)
    tokens = sdir.identities()
    lock = threading.Lock()
    app = FastAPI(title="chartval gateway")

    def identity(authorization: str = Header(default="")) -> Identity:
        if not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        token = authorization.removeprefix("Bearer ").strip()
        ident = tokens.get(token)
        if ident is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return ident

    def require_role(ident: Identity, *roles: str) -> None:
        if ident.role not in roles:
            raise HTTPException(
                status_code=403, detail=f"role {ident.role!r} may not do this"
            )

    def translate(exc: WorkflowError) -> HTTPException:
        if isinstance(exc, DuplicateSubmissionError):
            return HTTPException(status_code=409, detail=str(exc))
        if isinstance(exc, UnknownAssignmentError):
            return HTTPException(status_code=404, detail=str(exc))
        if isinstance(exc, SessionStoppedError):
            return HTTPException(status_code=423, detail=str(exc))
        return HTTPException(status_code=400, detail=str(exc))

    @app.get("/session")
    def get_session(ident: Identity = Depends(identity)) -> dict:
        s = sdir.session
        return {
            "session_id": s.session_id,
            "phase": s.phase.value,
            "successes": s.posterior.successes,
            "trials": s.posterior.trials,
            "reviewed": s.reviewed_count,
            "pool_total": s.pool_total,
            "savings": s.savings,
            "stop": None
            if s.stop_record is None
            else {
                "verdict": s.stop_record.verdict,
                "wave_index": s.stop_record.wave_index,
                "reason": s.stop_record.reason,
            },
            "config": s.config.to_mapping(),
        }

    @app.post("/waves/advance")
    def advance(ident: Identity = Depends(identity)) -> dict:
        require_role(ident, "operator")
        with lock:
            s = sdir.session
            decision = None
            try:
                if s._open_plan is not None:
                    raw = s.advance_wave()
                    decision = {
                        "verdict": raw.verdict.value,
                        "lower": raw.interval.lower,
                        "upper": raw.interval.upper,
                        "point_estimate": raw.point_estimate,
                    }
                new_wave = None
                if s.phase.value != "Stopped":
                    plan = s.next_batch()
                    new_wave = {
                        "wave_index": plan.wave_index,
                        "pool_exhausted": plan.pool_exhausted,
                        "size": plan.size,
                    }
            except WorkflowError as exc:
                raise translate(exc)
            finally:
                sdir.persist()
        return {"decision": decision, "new_wave": new_wave, "phase": s.phase.value}

    @app.get("/assignments")
    def assignments(
        annotator: str = Query(...),
        ident: Identity = Depends(identity),
    ) -> list[dict]:
        if ident.role == "annotator" and ident.user_id != annotator:
            raise HTTPException(
                status_code=403, detail="annotators may list only their own queue"
            )
        try:
            return sdir.session.assignments_for(annotator)
        except WorkflowError as exc:
            raise translate(exc)

    @app.get("/charts/{patient_id}")
    def chart(
        patient_id: str,
        highlights: bool = Query(default=True),
        ident: Identity = Depends(identity),
    ) -> dict:
        s = sdir.session
        chart_state = s.charts.get(patient_id)
        if chart_state is None:
            raise HTTPException(status_code=404, detail=f"unknown patient {patient_id!r}")
        window = None
        if s._open_plan is not None and patient_id in s._open_plan.review_windows:
            window = s._open_plan.review_windows[patient_id]
        view = chart_view(sdir.notes_for(patient_id), sdir.dictionary, window)
        return {
            "patient_id": patient_id,
            "stratum": chart_state.stratum.value,
            "review_window": None
            if window is None
            else {"start": window.start.isoformat(), "end": window.end.isoformat()},
            "highlights_enabled": highlights,
            "note_count": view.note_count,
            "notes": [
                {
                    "note_id": hn.note.note_id,
                    "date": hn.note.date.isoformat(),
                    "text": hn.note.text,
                    "spans": []
                    if not highlights
                    else [
                        {
                            "start": span.start,
                            "end": span.end,
                            "concept_id": span.concept_id,
                            "negated": span.negated,
                        }
                        for span in hn.spans
                    ],
                }
                for hn in view.notes
            ],
        }

    @app.post("/annotations")
    def post_annotation(
        body: AnnotationBody, ident: Identity = Depends(identity)
    ) -> dict:
        require_role(ident, "annotator", "operator")
        annotator_id = body.annotator_id or ident.user_id
        if ident.role == "annotator" and annotator_id != ident.user_id:
            raise HTTPException(
                status_code=403, detail="annotators submit only their own labels"
            )
        received = datetime.now(timezone.utc).isoformat()
        with lock:
            try:
                record = AnnotationRecord(
                    wave_index=body.wave_index,
                    patient_id=body.patient_id,
                    annotator_id=annotator_id,
                    label=body.label,
                    reason_code=body.reason_code,
                    started_at=body.started_at,
                    submitted_at=body.submitted_at or received,
                    highlights_enabled=body.highlights_enabled,
                    timing_only=body.timing_only,
                    server_received_at=received,
                )
                seq = sdir.session.submit_annotation(record)
            except WorkflowError as exc:
                raise translate(exc)
            finally:
                sdir.persist()
        return {"seq": seq, "server_received_at": received}

    @app.post("/adjudications")
    def post_adjudication(
        body: AdjudicationBody, ident: Identity = Depends(identity)
    ) -> dict:
        require_role(ident, "adjudicator")
        with lock:
            try:
                seq = sdir.session.submit_adjudication(
                    AdjudicationRecord(
                        supersedes_seq=body.supersedes_seq,
                        label=body.label,
                        adjudicator_id=body.adjudicator_id or ident.user_id,
                    )
                )
            except WorkflowError as exc:
                raise translate(exc)
            finally:
                sdir.persist()
        return {"seq": seq}

    @app.get("/metrics/trajectory")
    def trajectory(ident: Identity = Depends(identity)) -> list[dict]:
        return [p.to_dict() for p in sdir.session.trajectory]

    @app.get("/metrics/report")
    def report(
        snapshot: str = Query(default="full"),
        ident: Identity = Depends(identity),
    ) -> dict:
        s = sdir.session
        try:
            snap = s.snapshot(snapshot)
            result = performance_report(
                s.frame.population_counts(),
                snap.weights,
                list(snap.claims_neg_labels),
                snap.posterior,
                alpha=s.config.alpha,
                snapshot=snapshot,
                bootstrap_seed=s.config.seed,
                allow_undefined=True,
            )
        except (UndefinedMetricError, WorkflowError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return result.to_dict()

    @app.get("/agreement")
    def agreement(ident: Identity = Depends(identity)) -> dict:
        a = sdir.session.agreement
        if a is None:
            return {"n_double": 0, "kappa": None, "passed": None}
        return {
            "n_double": a.n_double,
            "observed_agreement": a.observed_agreement,
            "expected_agreement": a.expected_agreement,
            "kappa": a.kappa,
            "passed": a.passed,
        }

    @app.get("/timing")
    def timing(ident: Identity = Depends(identity)) -> dict:
        summary = timing_summary(sdir.session.timing_records())
        return {
            "with_highlights": None
            if summary.with_highlights is None
            else summary.with_highlights.__dict__,
            "without_highlights": None
            if summary.without_highlights is None
            else summary.without_highlights.__dict__,
            "paired_count": summary.paired_count,
            "paired_median_with": summary.paired_median_with,
            "paired_median_without": summary.paired_median_without,
            "reduction_pct": summary.reduction_pct,
        }

    app.state.session_dir = sdir
    return app
