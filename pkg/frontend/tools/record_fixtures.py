"""Record gateway HTTP fixtures for the frontend contract tests.

Drives the real FastAPI app through a small scripted session (two waves,
one duplicate submission) and dumps every response body the UI consumes
into frontend/fixtures/.  Re-run after any gateway contract change:

    python3 frontend/tools/record_fixtures.py
"""

import csv
import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from chartval.config import SessionConfig
from chartval.gateway import SessionDir
from chartval.server import create_app

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

OPERATOR = {"Authorization": "Bearer token-operator"}
TOKENS = {
    "annotator_a": {"Authorization": "Bearer token-annotator_a"},
    "annotator_b": {"Authorization": "Bearer token-annotator_b"},
}

TERMS = [("C1", "suicide attempt"), ("C2", "suicidal ideation")]


def write_inputs(root: Path) -> tuple[Path, Path, Path]:
    cohort = root / "cohort.jsonl"
    notes = root / "notes.jsonl"
    terms = root / "terms.csv"

    cohort_rows = []
    note_rows = []
    for i in range(8):
        pid = f"cp{i:04d}"
        cohort_rows.append(
            {
                "patient_id": pid,
                "claims_positive": True,
                "claims_outcome_date": "2020-03-01",
                "healthcare_contact_dates": ["2020-03-11"],
            }
        )
        note_rows.append(
            {
                "patient_id": pid,
                "note_id": f"{pid}-n1",
                "date": "2020-02-20",
                "text": "Admitted following a Suicide Attempt last night.",
            }
        )
        note_rows.append(
            {
                "patient_id": pid,
                "note_id": f"{pid}-n2",
                "date": "2020-03-05",
                "text": "Follow-up visit. Patient denies suicidal ideation today.",
            }
        )
    for i in range(8):
        pid = f"cn{i:04d}"
        cohort_rows.append({"patient_id": pid, "claims_positive": False})
        note_rows.append(
            {
                "patient_id": pid,
                "note_id": f"{pid}-n1",
                "date": "2020-03-01",
                "text": "Patient admitted after a suicide attempt.",
            }
        )

    cohort.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in cohort_rows)
    )
    notes.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in note_rows)
    )
    with open(terms, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["concept_id", "term"])
        writer.writerows(TERMS)
    return cohort, notes, terms


def dump(name: str, payload) -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / name).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def run_wave(client: TestClient, sdir: SessionDir, positives: dict[str, str]) -> dict:
    advance = client.post("/waves/advance", headers=OPERATOR)
    advance.raise_for_status()
    charts = []
    for annotator, headers in TOKENS.items():
        queue = client.get(
            "/assignments", params={"annotator": annotator}, headers=headers
        ).json()
        for assignment in queue:
            pid = assignment["patient_id"]
            chart = client.get(f"/charts/{pid}", headers=headers).json()
            charts.append(chart)
            label = positives.get(
                assignment["stratum"], "negative"
            )
            resp = client.post(
                "/annotations",
                headers=headers,
                json={
                    "patient_id": pid,
                    "label": label,
                    "wave_index": assignment["wave_index"],
                    "reason_code": "documented event" if label == "positive" else "",
                    "started_at": "2024-06-01T09:00:00+00:00",
                    "submitted_at": "2024-06-01T09:07:30+00:00",
                },
            )
            resp.raise_for_status()
    return {"advance": advance.json(), "charts": charts}


def main() -> None:
    tmp = Path(tempfile.mkdtemp(prefix="chartval-fixtures-"))
    cohort, notes, terms = write_inputs(tmp)
    SessionDir.init(
        tmp / "session",
        cohort,
        notes,
        terms,
        config=SessionConfig(
            batch_size=2, claims_pos_quota=1, claims_neg_quota=1,
            training_batch=0, seed=5,
        ),
    )
    app = create_app(str(tmp / "session"))
    sdir = app.state.session_dir
    client = TestClient(app)

    labels = {"ClaimsPos_Reviewable": "positive"}
    wave1 = run_wave(client, sdir, labels)

    # duplicate submission: replay annotator A's first wave-1 annotation
    first_entry = next(
        e
        for e in sdir.session.log
        if e.get("type") == "annotation" and e["annotator_id"] == "annotator_a"
    )
    duplicate_request = {
        "patient_id": first_entry["patient_id"],
        "label": first_entry["label"],
        "wave_index": first_entry["wave_index"],
        "reason_code": first_entry["reason_code"],
        "started_at": first_entry["started_at"],
        "submitted_at": first_entry["submitted_at"],
    }
    dup = client.post(
        "/annotations", headers=TOKENS["annotator_a"], json=duplicate_request
    )
    log_records = [
        e
        for e in sdir.session.log
        if e.get("type") == "annotation"
        and e["patient_id"] == first_entry["patient_id"]
        and e["annotator_id"] == "annotator_a"
    ]
    dump(
        "duplicate_submit.json",
        {
            "request": duplicate_request,
            "annotator_id": "annotator_a",
            "first_accepted_seq": first_entry["seq"],
            "second_response": {"status": dup.status_code, "body": dup.json()},
            "log_records": log_records,
        },
    )

    wave2 = run_wave(client, sdir, labels)
    client.post("/waves/advance", headers=OPERATOR).raise_for_status()

    dump("charts.json", wave1["charts"] + wave2["charts"])
    sample_pid = wave1["charts"][0]["patient_id"]
    dump(
        "chart_no_highlights.json",
        client.get(
            f"/charts/{sample_pid}",
            params={"highlights": "false"},
            headers=TOKENS["annotator_a"],
        ).json(),
    )
    dump("dictionary.json", [{"concept_id": c, "term": t} for c, t in TERMS])
    dump("session.json", client.get("/session", headers=OPERATOR).json())
    dump(
        "trajectory.json",
        client.get("/metrics/trajectory", headers=OPERATOR).json(),
    )
    dump("agreement.json", client.get("/agreement", headers=OPERATOR).json())
    dump("timing.json", client.get("/timing", headers=OPERATOR).json())
    dump(
        "report.json",
        client.get("/metrics/report", headers=OPERATOR).json(),
    )
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
