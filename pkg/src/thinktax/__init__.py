"""Budgeted chain-of-thought evaluation: where truncated reasoning loses accuracy, and cascades that win it back."""

from .chainstats import ChainObservation, HazardCurve, SurvivalCurve, hazard_estimate, km_estimate
from .extraction import ExtractedAnswer, StopSignal, answers_equivalent, detect_natural_stop, extract_answer, normalize_answer
from .orchestrator import (
    GatePolicy,
    IrisPolicy,
    MrsdPolicy,
    Orchestrator,
    PolicyOutcome,
    QuestionSpec,
    SelfConsistencyPolicy,
    SinglePolicy,
    TownPolicy,
    run_policy,
)

__version__ = "0.1.0"

__all__ = [
    "ChainObservation",
    "ExtractedAnswer",
    "GatePolicy",
    "HazardCurve",
    "IrisPolicy",
    "MrsdPolicy",
    "Orchestrator",
    "PolicyOutcome",
    "QuestionSpec",
    "SelfConsistencyPolicy",
    "SinglePolicy",
    "StopSignal",
    "SurvivalCurve",
    "TownPolicy",
    "answers_equivalent",
    "detect_natural_stop",
    "extract_answer",
    "hazard_estimate",
    "km_estimate",
    "normalize_answer",
    "run_policy",
]
