"""Command-line surface for operators, scripts, and batch imports."""

from __future__ import annotations

import csv as csv_module
import json
import sys
from dataclasses import fields

import click

from .config import SessionConfig
from .gateway import SessionDir
from .metrics import UndefinedMetricError, performance_report, timing_summary
from .simulator import (
    OracleAnnotator,
    SyntheticCohortSpec,
    simulate_run,
    sweep_experiment,
)
from .store import read_log, verify_log
from .workflow import (
    AdjudicationRecord,
    AnnotationRecord,
    WorkflowError,
    replay_log,
)

ENV_DIR = "CHARTVAL_SESSION_DIR"


def _dir_option(f):
    return click.option(
        "--dir",
        "directory",
        envvar=ENV_DIR,
        required=True,
        type=click.Path(file_okay=False),
        help="session directory",
    )(f)


def _format_option(f):
    return click.option(
        "--format",
        "fmt",
        type=click.Choice(["text", "json"]),
        default="text",
        show_default=True,
    )(f)


def _emit(payload: dict, fmt: str) -> None:
    if fmt == "json":
        click.echo(json.dumps(payload, indent=2, sort_keys=True, default=str))
    else:
        for key, value in payload.items():
            click.echo(f"{key}: {value}")


@click.group()
def main() -> None:
    """Adaptive chart-validation workbench."""


# --- session ----------------------------------------------------------------


@main.group()
def session() -> None:
    """Manage a validation session directory."""


@session.command("init")
@_dir_option
@click.option("--cohort", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--notes", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--dictionary", required=True, type=click.Path(exists=True, dir_okay=False)
)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="override the config seed")
@click.option("--annotators", default=None, help="comma-separated pair of ids")
@_format_option
def session_init(directory, cohort, notes, dictionary, config_path, seed, annotators, fmt):
    """Create a session directory and echo the effective configuration."""
    config = (
        SessionConfig.from_file(config_path) if config_path else SessionConfig()
    )
    if seed is not None:
        config = SessionConfig(
            **{
                **{f.name: getattr(config, f.name) for f in fields(SessionConfig)},
                "seed": seed,
            }
        )
    pair = tuple(annotators.split(",")) if annotators else ("annotator_a", "annotator_b")
    if len(pair) != 2:
        raise click.UsageError("--annotators expects exactly two comma-separated ids")
    sdir = SessionDir.init(
        directory, cohort, notes, dictionary, config=config, annotators=pair
    )
    payload = {k: v for k, v in config.to_mapping().items()}
    payload["phase"] = sdir.session.phase.value
    payload["strata"] = {
        s.value: n for s, n in sdir.session.frame.population_counts().items()
    }
    _emit(payload, fmt)


def _status_payload(sdir: SessionDir) -> dict:
    s = sdir.session
    return {
        "phase": s.phase.value,
        "successes": s.posterior.successes,
        "trials": s.posterior.trials,
        "reviewed": s.reviewed_count,
        "pool_total": s.pool_total,
        "savings": s.savings,
        "stop": None if s.stop_record is None else {
            "verdict": s.stop_record.verdict,
            "wave_index": s.stop_record.wave_index,
            "reason": s.stop_record.reason,
        },
        "kappa": None if s.agreement is None else s.agreement.kappa,
    }


@session.command("status")
@_dir_option
@_format_option
def session_status(directory, fmt):
    _emit(_status_payload(SessionDir(directory)), fmt)


@session.command("next-wave")
@_dir_option
@_format_option
def session_next_wave(directory, fmt):
    """Issue the next sampling wave and print its assignments."""
    sdir = SessionDir(directory)
    try:
        plan = sdir.session.next_batch()
    except WorkflowError as exc:
        raise click.ClickException(str(exc))
    sdir.persist()
    payload = {
        "wave_index": plan.wave_index,
        "pool_exhausted": plan.pool_exhausted,
        "phase": sdir.session.phase.value,
        "draws": {s.value: list(ids) for s, ids in plan.draws.items()},
        "assignments": {
            a: sdir.session.assignments_for(a) for a in sdir.session.annotators
        },
    }
    _emit(payload, fmt)


@session.command("advance")
@_dir_option
@_format_option
def session_advance(directory, fmt):
    """Close the current wave: kappa gate or stopping evaluation."""
    sdir = SessionDir(directory)
    try:
        decision = sdir.session.advance_wave()
    except WorkflowError as exc:
        raise click.ClickException(str(exc))
    sdir.persist()
    payload = {
        "verdict": decision.verdict.value,
        "lower": decision.interval.lower,
        "upper": decision.interval.upper,
        "point_estimate": decision.point_estimate,
        "phase": sdir.session.phase.value,
    }
    if sdir.session.agreement is not None:
        payload["kappa"] = sdir.session.agreement.kappa
    _emit(payload, fmt)


# --- annotations ------------------------------------------------------------


@main.group()
def annotate() -> None:
    """Annotation intake."""


@annotate.command("import")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@_dir_option
@_format_option
def annotate_import(file, directory, fmt):
    """Import a JSONL file of annotation / adjudication records."""
    sdir = SessionDir(directory)
    accepted = 0
    errors: list[str] = []
    with open(file, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if record.get("type") == "adjudication":
                    sdir.session.submit_adjudication(
                        AdjudicationRecord(
                            supersedes_seq=record["supersedes_seq"],
                            label=record["label"],
                            adjudicator_id=record.get("adjudicator_id", ""),
                        )
                    )
                else:
                    sdir.session.submit_annotation(
                        AnnotationRecord(
                            wave_index=record.get("wave_index", 0),
                            patient_id=record["patient_id"],
                            annotator_id=record["annotator_id"],
                            label=record["label"],
                            reason_code=record.get("reason_code", ""),
                            started_at=record.get("started_at", ""),
                            submitted_at=record.get("submitted_at", ""),
                            highlights_enabled=record.get("highlights_enabled", True),
                            timing_only=record.get("timing_only", False),
                        )
                    )
                accepted += 1
            except (WorkflowError, KeyError, json.JSONDecodeError) as exc:
                errors.append(f"{file}:{lineno}: {exc}")
    sdir.persist()
    _emit({"accepted": accepted, "rejected": len(errors), "errors": errors}, fmt)
    if errors:
        sys.exit(1)


# --- metrics ----------------------------------------------------------------


@main.group()
def metrics() -> None:
    """Performance, agreement, and timing reports."""


@metrics.command("report")
@_dir_option
@click.option(
    "--snapshot",
    type=click.Choice(["at-stop", "full"]),
    default="full",
    show_default=True,
)
@click.option("--bootstrap-reps", type=int, default=2000, show_default=True)
@_format_option
def metrics_report(directory, snapshot, bootstrap_reps, fmt):
    sdir = SessionDir(directory)
    s = sdir.session
    try:
        snap = s.snapshot(snapshot)
        report = performance_report(
            s.frame.population_counts(),
            snap.weights,
            list(snap.claims_neg_labels),
            snap.posterior,
            alpha=s.config.alpha,
            snapshot=snapshot,
            bootstrap_reps=bootstrap_reps,
            bootstrap_seed=s.config.seed,
        )
    except (UndefinedMetricError, WorkflowError) as exc:
        raise click.ClickException(str(exc))
    payload = report.to_dict()
    if fmt == "text":
        click.echo(f"Performance ({snapshot}):")
        for name in ("ppv", "npv", "sensitivity", "specificity"):
            value = payload[name]
            lo, hi = payload[f"{name}_lower"], payload[f"{name}_upper"]
            click.echo(f"  {name:<12} {value:.4f} ({lo:.4f}, {hi:.4f})")
    else:
        _emit(payload, fmt)


@metrics.command("timing")
@_dir_option
@_format_option
def metrics_timing(directory, fmt):
    sdir = SessionDir(directory)
    summary = timing_summary(sdir.session.timing_records())
    payload = {
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
    _emit(payload, fmt)


# --- replay / verify --------------------------------------------------------


@main.command("replay")
@click.argument("log", type=click.Path(exists=True, dir_okay=False))
@_dir_option
@_format_option
def replay_command(log, directory, fmt):
    """Deterministically replay an event log and report the trajectory."""
    sdir = SessionDir(directory)
    try:
        result = replay_log(
            sdir.evidence, sdir.config, read_log(log), annotators=sdir.annotators
        )
    except WorkflowError as exc:
        raise click.ClickException(str(exc))
    payload = {
        "trajectory": [p.to_dict() for p in result.trajectory],
        "reviewed": result.reviewed,
        "pool_total": result.pool_total,
        "savings": result.savings,
        "stop": None
        if result.stop is None
        else {
            "verdict": result.stop.verdict,
            "wave_index": result.stop.wave_index,
            "reason": result.stop.reason,
        },
    }
    if fmt == "text":
        for point in result.trajectory:
            click.echo(
                f"wave {point.wave_index:>3}  s={point.successes:<4} k={point.trials:<4}"
                f" ppv={point.point_estimate:.4f}"
                f" ci=({point.lower:.4f}, {point.upper:.4f})  {point.verdict}"
            )
        click.echo(
            f"reviewed {result.reviewed} of {result.pool_total}; "
            f"savings {100 * result.savings:.1f}%"
        )
    else:
        _emit(payload, fmt)


@main.command("verify")
@click.argument("log", type=click.Path(exists=True, dir_okay=False))
@click.option("--cohort", type=click.Path(exists=True, dir_okay=False))
@_format_option
def verify_command(log, cohort, fmt):
    """Check a log for gaps, unknown references, and bad linkage."""
    ids = None
    if cohort:
        from .store import load_cohort

        patients, _ = load_cohort(cohort)
        ids = {p.patient_id for p in patients}
    report = verify_log(log, cohort_ids=ids)
    _emit(
        {"ok": report.ok, "n_records": report.n_records, "findings": report.findings},
        fmt,
    )
    if not report.ok:
        sys.exit(1)


# --- simulate ---------------------------------------------------------------


@main.group()
def simulate() -> None:
    """Synthetic-cohort experiments."""


def _load_sim_inputs(spec_path, config_path):
    spec = SyntheticCohortSpec.from_file(spec_path)
    config = (
        SessionConfig.from_file(config_path) if config_path else SessionConfig()
    )
    return spec, config


@simulate.command("run")
@click.argument("specfile", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--oracle-error", type=float, default=0.0, show_default=True)
@click.option("--oracle-unsure", type=float, default=0.0, show_default=True)
@_format_option
def simulate_run_command(specfile, config_path, oracle_error, oracle_unsure, fmt):
    spec, config = _load_sim_inputs(specfile, config_path)
    oracle = OracleAnnotator(
        error_rate=oracle_error, unsure_rate=oracle_unsure, seed=spec.seed
    )
    result = simulate_run(spec, oracle, config)
    _emit(result.to_row(), fmt)


@simulate.command("sweep")
@click.argument("specfile", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--replicates", type=int, default=10, show_default=True)
@click.option("--ppv-grid", default=None, help="comma-separated true PPV values")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), help="per-replicate CSV")
@_format_option
def simulate_sweep_command(specfile, config_path, replicates, ppv_grid, seed, out, fmt):
    spec, config = _load_sim_inputs(specfile, config_path)
    if ppv_grid:
        values = [float(v) for v in ppv_grid.split(",")]
        specs = [
            SyntheticCohortSpec(
                **{
                    **{f.name: getattr(spec, f.name) for f in fields(spec)},
                    "claims_ppv": value,
                }
            )
            for value in values
        ]
    else:
        specs = [spec]
    cells = sweep_experiment(specs, replicates, config, base_seed=seed)
    if out:
        rows = [
            {"cell_ppv": cell.spec.claims_ppv, "replicate": i, **r.to_row()}
            for cell in cells
            for i, r in enumerate(cell.results)
        ]
        with open(out, "w", newline="", encoding="utf-8") as handle:
            writer = csv_module.DictWriter(handle, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    payload = {
        "cells": [
            {
                "claims_ppv": cell.spec.claims_ppv,
                "mean_savings": cell.mean_savings,
                "coverage": cell.coverage,
                "stop_waves": {
                    str(k): v for k, v in sorted(
                        cell.stop_wave_distribution().items(),
                        key=lambda kv: (kv[0] is None, kv[0]),
                    )
                },
            }
            for cell in cells
        ]
    }
    _emit(payload, fmt)


# --- serve ------------------------------------------------------------------


@main.command("serve")
@click.option("--addr", default="127.0.0.1:8000", show_default=True)
@_dir_option
def serve_command(addr, directory):
    """Run the HTTP gateway against a session directory."""
    import uvicorn

    from .server import create_app

    host, _, port = addr.partition(":")
    app = create_app(directory)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))


if __name__ == "__main__":
    main()
