"""Session-directory plumbing shared by the CLI and the HTTP server.

A session directory holds everything needed to rebuild the live session:
config.cfg (key=value), paths.json (cohort / notes / dictionary file
locations plus annotator ids), tokens.json (static bearer tokens), and
log.jsonl (the append-only event log).  State is always reconstructed by
replaying the log, so the log remains the single source of truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .config import SessionConfig, format_keyvalues
from .highlighter import ClinicalNote, TermDictionary
from .store import AnnotationLog, load_cohort, load_notes, read_log
from .workflow import (
    DEFAULT_ANNOTATORS,
    ValidationSession,
    build_evidence,
    replay_log,
)

__all__ = ["SessionDir", "Identity", "GatewayError"]

CONFIG_FILE = "config.cfg"
PATHS_FILE = "paths.json"
TOKENS_FILE = "tokens.json"
LOG_FILE = "log.jsonl"


class GatewayError(ValueError):
    pass


@dataclass(frozen=True)
class Identity:
    token: str
    user_id: str
    role: str  # annotator | adjudicator | operator


def _default_tokens(annotators: tuple[str, str]) -> list[dict]:
    tokens = [
        {"token": f"token-{a}", "user_id": a, "role": "annotator"} for a in annotators
    ]
    tokens.append(
        {"token": "token-adjudicator", "user_id": "adjudicator", "role": "adjudicator"}
    )
    tokens.append({"token": "token-operator", "user_id": "operator", "role": "operator"})
    return tokens


class SessionDir:
    """Filesystem-backed session with persistence of new log events."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        if not (self.directory / CONFIG_FILE).exists():
            raise GatewayError(
                f"{self.directory}: not an initialized session directory"
            )
        self.config = SessionConfig.from_file(self.directory / CONFIG_FILE)
        paths = json.loads((self.directory / PATHS_FILE).read_text(encoding="utf-8"))
        self.annotators: tuple[str, str] = tuple(
            paths.get("annotators", DEFAULT_ANNOTATORS)
        )
        base = self.directory
        self.cohort_path = (base / paths["cohort"]).resolve()
        self.notes_path = (base / paths["notes"]).resolve()
        self.dictionary_path = (base / paths["dictionary"]).resolve()

        self.cohort, _ = load_cohort(self.cohort_path)
        self.notes, _ = load_notes(
            self.notes_path, cohort_ids={p.patient_id for p in self.cohort}
        )
        self.dictionary = TermDictionary.from_csv(self.dictionary_path)
        self.evidence = build_evidence(
            self.cohort,
            self.notes,
            self.dictionary,
            count_negated_mentions=self.config.count_negated_mentions,
        )
        self._notes_by_patient: dict[str, list[ClinicalNote]] = {}
        for note in self.notes:
            self._notes_by_patient.setdefault(note.patient_id, []).append(note)

        self.log_path = self.directory / LOG_FILE
        log_records = read_log(self.log_path) if self.log_path.exists() else []
        self.session: ValidationSession = replay_log(
            self.evidence, self.config, log_records, annotators=self.annotators
        ).session
        self._persisted = len(self.session.log)

    @staticmethod
    def init(
        directory: str | Path,
        cohort: str | Path,
        notes: str | Path,
        dictionary: str | Path,
        config: SessionConfig | None = None,
        annotators: tuple[str, str] = DEFAULT_ANNOTATORS,
    ) -> "SessionDir":
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        if (directory / CONFIG_FILE).exists():
            raise GatewayError(f"{directory}: already initialized")
        config = config or SessionConfig()
        (directory / CONFIG_FILE).write_text(
            format_keyvalues(config.to_mapping()), encoding="utf-8"
        )
        (directory / PATHS_FILE).write_text(
            json.dumps(
                {
                    "cohort": str(Path(cohort).resolve()),
                    "notes": str(Path(notes).resolve()),
                    "dictionary": str(Path(dictionary).resolve()),
                    "annotators": list(annotators),
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
        (directory / TOKENS_FILE).write_text(
            json.dumps(_default_tokens(annotators), indent=2) + "\n", encoding="utf-8"
        )
        (directory / LOG_FILE).touch()
        return SessionDir(directory)

    def identities(self) -> dict[str, Identity]:
        raw = json.loads((self.directory / TOKENS_FILE).read_text(encoding="utf-8"))
        return {
            entry["token"]: Identity(
                token=entry["token"], user_id=entry["user_id"], role=entry["role"]
            )
            for entry in raw
        }

    def notes_for(self, patient_id: str) -> list[ClinicalNote]:
        return self._notes_by_patient.get(patient_id, [])

    def persist(self) -> int:
        """Append any log events the in-memory session produced since the
        last sync; returns the number of records written."""
        new = self.session.log[self._persisted :]
        if not new:
            return 0
        with AnnotationLog(self.log_path) as log:
            for record in new:
                log.append(record)
        self._persisted = len(self.session.log)
        return len(new)
