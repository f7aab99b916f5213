"""Annotation schema, storage, and HTTP service for label-noise review."""

from .schema import (
    Q1_OPTIONS,
    Q2_OPTIONS,
    Q3_OPTIONS,
    Q4_OPTIONS,
    QUESTION_OPTIONS,
    AnnotationRecord,
    AnnotationTask,
    has_defect,
    q4_required,
    validate,
)
from .store import AnnotationStore, load_tasks, save_tasks

__all__ = [
    "AnnotationRecord",
    "AnnotationStore",
    "AnnotationTask",
    "Q1_OPTIONS",
    "Q2_OPTIONS",
    "Q3_OPTIONS",
    "Q4_OPTIONS",
    "QUESTION_OPTIONS",
    "has_defect",
    "load_tasks",
    "q4_required",
    "save_tasks",
    "validate",
]
