"""Adaptive chart-validation workbench.

Stratified multi-wave chart sampling with Beta-Binomial success/futility
stopping, dictionary-highlighted note review, inverse-weighted performance
metrics, and a simulator for end-to-end calibration experiments.
"""

from .bayes import (
    CredibleInterval,
    PosteriorState,
    StoppingDecision,
    StoppingRule,
    Verdict,
    beta_quantile,
    credible_interval,
    evaluate_stopping,
    point_estimate,
    posterior_update,
)
from .config import SessionConfig
from .highlighter import (
    ClinicalNote,
    DateRange,
    MatchSpan,
    TermDictionary,
    chart_view,
    classify_patient,
    scan_note,
)
from .metrics import (
    AgreementReport,
    PerformanceReport,
    TimingSummary,
    WeightedConfusionMatrix,
    build_confusion,
    cohen_kappa,
    performance_report,
    timing_summary,
)
from .simulator import (
    OracleAnnotator,
    SyntheticCohortSpec,
    generate_cohort,
    simulate_run,
    sweep_experiment,
)
from .strata import (
    PatientEvidence,
    SamplingFrame,
    SamplingWeights,
    Stratum,
    WavePlan,
    assign_strata,
    compute_weights,
    plan_wave,
)
from .workflow import (
    AdjudicationRecord,
    AnnotationRecord,
    Phase,
    ValidationSession,
    build_evidence,
    replay_log,
    start_session,
)

__version__ = "0.1.0"
