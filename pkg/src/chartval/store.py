"""Validated reading and writing of persistent artifacts.

All line-oriented files are UTF-8 JSON, one self-describing record per
line.  The annotation log is append-only: each record carries a strictly
increasing ``seq``, writes are flushed and fsynced before acknowledgement,
and a truncated tail line left by a crash is quarantined on open.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import IO, Iterable, Sequence

from .highlighter import ClinicalNote
from .strata import PatientEvidence, StrataError

__all__ = [
    "StoreError",
    "Diagnostics",
    "load_cohort",
    "save_cohort",
    "load_notes",
    "save_notes",
    "read_log",
    "AnnotationLog",
    "LogReport",
    "verify_log",
    "SessionSnapshot",
    "write_snapshot",
    "read_snapshot",
    "log_prefix_hash",
]


class StoreError(ValueError):
    pass


@dataclass
class Diagnostics:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _parse_date(value: str, where: str) -> date:
    try:
        return date.fromisoformat(value)
    except (TypeError, ValueError) as exc:
        raise StoreError(f"{where}: bad ISO-8601 date {value!r}") from exc


def _iter_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StoreError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise StoreError(f"{path}:{lineno}: expected an object")
            yield lineno, record


def load_cohort(
    path: str | Path, strict: bool = True
) -> tuple[list[PatientEvidence], Diagnostics]:
    """Read a cohort file.  EHR-status fields are derived from notes later,
    so loaded records carry ehr_positive=False.

    Strict mode (default) raises on any invalid record; lenient mode skips
    bad lines and reports them as warnings.
    """
    diagnostics = Diagnostics()
    patients: list[PatientEvidence] = []
    seen: set[str] = set()
    try:
        rows = list(_iter_jsonl(path))
    except StoreError as exc:
        if strict:
            raise
        diagnostics.warnings.append(str(exc))
        rows = []
    for lineno, record in rows:
        where = f"{path}:{lineno}"
        try:
            pid = record["patient_id"]
            if pid in seen:
                raise StoreError(f"{where}: duplicate patient id {pid!r}")
            claims_positive = bool(record["claims_positive"])
            outcome_raw = record.get("claims_outcome_date")
            if claims_positive and outcome_raw is None:
                raise StoreError(
                    f"{where}: claims_positive without claims_outcome_date"
                )
            if not claims_positive and outcome_raw is not None:
                raise StoreError(
                    f"{where}: claims_outcome_date on a claims-negative patient"
                )
            patient = PatientEvidence(
                patient_id=pid,
                claims_positive=claims_positive,
                claims_outcome_date=(
                    _parse_date(outcome_raw, where) if outcome_raw else None
                ),
                death_record_suicide=bool(record.get("death_record_suicide", False)),
                healthcare_contact_dates=tuple(
                    _parse_date(d, where)
                    for d in record.get("healthcare_contact_dates", [])
                ),
            )
        except (KeyError, StrataError, StoreError, TypeError) as exc:
            message = str(exc) if str(exc).startswith(str(path)) else f"{where}: {exc}"
            if strict:
                raise StoreError(message) from exc
            diagnostics.warnings.append(message)
            continue
        seen.add(pid)
        patients.append(patient)
    if not patients:
        diagnostics.warnings.append(f"{path}: empty cohort")
    return patients, diagnostics


def save_cohort(path: str | Path, patients: Sequence[PatientEvidence]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for p in patients:
            record = {
                "patient_id": p.patient_id,
                "claims_positive": p.claims_positive,
                "claims_outcome_date": (
                    p.claims_outcome_date.isoformat() if p.claims_outcome_date else None
                ),
                "death_record_suicide": p.death_record_suicide,
                "healthcare_contact_dates": [
                    d.isoformat() for d in p.healthcare_contact_dates
                ],
            }
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def load_notes(
    path: str | Path,
    cohort_ids: set[str] | None = None,
    strict: bool = True,
) -> tuple[list[ClinicalNote], Diagnostics]:
    diagnostics = Diagnostics()
    notes: list[ClinicalNote] = []
    seen: set[tuple[str, str]] = set()
    for lineno, record in _iter_jsonl(path):
        where = f"{path}:{lineno}"
        try:
            key = (record["patient_id"], record["note_id"])
            if key in seen:
                raise StoreError(f"{where}: duplicate note {key}")
            if cohort_ids is not None and record["patient_id"] not in cohort_ids:
                raise StoreError(
                    f"{where}: note for unknown patient {record['patient_id']!r}"
                )
            note = ClinicalNote(
                note_id=record["note_id"],
                patient_id=record["patient_id"],
                date=_parse_date(record["date"], where),
                text=record["text"],
            )
        except (KeyError, StoreError, TypeError) as exc:
            message = str(exc) if str(exc).startswith(str(path)) else f"{where}: {exc}"
            if strict:
                raise StoreError(message) from exc
            diagnostics.warnings.append(message)
            continue
        seen.add(key)
        notes.append(note)
    return notes, diagnostics


def save_notes(path: str | Path, notes: Sequence[ClinicalNote]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for n in notes:
            handle.write(
                json.dumps(
                    {
                        "patient_id": n.patient_id,
                        "note_id": n.note_id,
                        "date": n.date.isoformat(),
                        "text": n.text,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


# --- annotation log ---------------------------------------------------------

LOG_RECORD_TYPES = ("wave", "annotation", "adjudication", "advance")


def read_log(path: str | Path) -> list[dict]:
    """All complete records of a log, in file order."""
    return [record for _, record in _iter_jsonl(path)]


class AnnotationLog:
    """Single-writer append-only log with crash recovery.

    An incomplete (non-JSON or unterminated) final line is moved to a
    ``.quarantine`` sidecar on open, leaving the log usable from the last
    complete record.  The writer holds an advisory lock for its lifetime.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._recover_tail()
        self.records = read_log(self.path) if self.path.exists() else []
        self.last_seq = 0
        for record in self.records:
            seq = record.get("seq", 0)
            if seq <= self.last_seq:
                raise StoreError(
                    f"{self.path}: seq regression ({seq} after {self.last_seq})"
                )
            self.last_seq = seq
        self._handle: IO[str] = open(self.path, "a", encoding="utf-8")
        try:
            fcntl.flock(self._handle.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as exc:
            self._handle.close()
            raise StoreError(f"{self.path}: another writer holds the log") from exc

    def _recover_tail(self) -> None:
        if not self.path.exists():
            return
        raw = self.path.read_bytes()
        if not raw:
            return
        cut = len(raw) if raw.endswith(b"\n") else raw.rfind(b"\n") + 1
        tail = raw[cut:]
        if tail:
            # unterminated final line: quarantine it
            with open(str(self.path) + ".quarantine", "ab") as q:
                q.write(tail + b"\n")
            with open(self.path, "r+b") as f:
                f.truncate(cut)
            return
        # terminated but possibly malformed final line
        body = raw.rstrip(b"\n")
        if not body:
            return
        last_start = body.rfind(b"\n") + 1
        last_line = body[last_start:]
        try:
            json.loads(last_line.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            with open(str(self.path) + ".quarantine", "ab") as q:
                q.write(last_line + b"\n")
            with open(self.path, "r+b") as f:
                f.truncate(last_start)

    def append(self, record: dict) -> int:
        """Serialize, flush, and fsync one record; returns its seq."""
        record = dict(record)
        seq = record.get("seq")
        if seq is None:
            seq = self.last_seq + 1
            record["seq"] = seq
        if seq <= self.last_seq:
            raise StoreError(f"seq {seq} not greater than last seq {self.last_seq}")
        self._handle.write(json.dumps(record, sort_keys=True) + "\n")
        self._handle.flush()
        os.fsync(self._handle.fileno())
        self.last_seq = seq
        self.records.append(record)
        return seq

    def close(self) -> None:
        if not self._handle.closed:
            fcntl.flock(self._handle.fileno(), fcntl.LOCK_UN)
            self._handle.close()

    def __enter__(self) -> "AnnotationLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass
class LogReport:
    ok: bool
    findings: list[str]
    n_records: int


def verify_log(
    path: str | Path,
    cohort_ids: set[str] | None = None,
) -> LogReport:
    """Check seq density, record types, referential integrity, and
    adjudication linkage.  Findings are data, not exceptions."""
    findings: list[str] = []
    try:
        records = read_log(path)
    except StoreError as exc:
        return LogReport(ok=False, findings=[str(exc)], n_records=0)

    expected = 1
    seen_annotations: dict[int, dict] = {}
    adjudicated: set[int] = set()
    for record in records:
        seq = record.get("seq")
        if seq != expected:
            findings.append(f"seq gap: expected {expected}, found {seq}")
            if isinstance(seq, int):
                expected = seq
        expected += 1
        rtype = record.get("type")
        if rtype not in LOG_RECORD_TYPES:
            findings.append(f"seq {seq}: unknown record type {rtype!r}")
            continue
        if rtype == "annotation":
            seen_annotations[seq] = record
            pid = record.get("patient_id")
            if cohort_ids is not None and pid not in cohort_ids:
                findings.append(f"seq {seq}: unknown patient {pid!r}")
        elif rtype == "adjudication":
            target = record.get("supersedes_seq")
            if target not in seen_annotations:
                findings.append(
                    f"seq {seq}: adjudication references unknown seq {target}"
                )
            elif target in adjudicated:
                findings.append(f"seq {seq}: seq {target} adjudicated twice")
            else:
                adjudicated.add(target)
    return LogReport(ok=not findings, findings=findings, n_records=len(records))


# --- session snapshots ------------------------------------------------------


def log_prefix_hash(path: str | Path, n_records: int) -> str:
    """SHA-256 over the canonical serialization of the first n records."""
    records = read_log(path)[:n_records]
    payload = "\n".join(json.dumps(r, sort_keys=True) for r in records)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SessionSnapshot:
    config: dict[str, str]
    frame_counts: dict[str, int]
    phase: str
    successes: int
    trials: int
    wave_history_digest: str
    n_log_records: int
    log_hash: str

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "frame_counts": self.frame_counts,
            "phase": self.phase,
            "successes": self.successes,
            "trials": self.trials,
            "wave_history_digest": self.wave_history_digest,
            "n_log_records": self.n_log_records,
            "log_hash": self.log_hash,
        }


def write_snapshot(path: str | Path, snapshot: SessionSnapshot) -> None:
    Path(path).write_text(
        json.dumps(snapshot.to_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def read_snapshot(path: str | Path) -> SessionSnapshot:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return SessionSnapshot(**data)
