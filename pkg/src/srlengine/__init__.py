"""Regulated-learning engine.

Ingests learner trace events, labels them as self-regulated-learning
processes, tracks learning conditions, triggers condition-personalized
scaffolds, analyzes writing, hosts multi-agent chat and collaborative
documents, and exposes an admin/data API.
"""

from .analyzer import ConditionSnapshot, IntervalAggregate, SrlLabel, score_instrument
from .model import TraceEvent, canonical_serialize, validate_event

__all__ = [
    "ConditionSnapshot",
    "IntervalAggregate",
    "SrlLabel",
    "TraceEvent",
    "canonical_serialize",
    "score_instrument",
    "validate_event",
]

__version__ = "0.1.0"
