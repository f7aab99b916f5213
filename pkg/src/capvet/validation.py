"""Small input-validation helpers shared across the package."""

from __future__ import annotations

from typing import Iterable, Sequence


class ValidationError(ValueError):
    """Raised when user-supplied data violates a documented contract."""


def check_probability(value: float, name: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must be in [0, 1], got {value}")
    return float(value)


def check_positive(value: float, name: str) -> float:
    if value <= 0:
        raise ValidationError(f"{name} must be > 0, got {value}")
    return value


def check_in_open_unit(value: float, name: str) -> float:
    if not 0.0 < value < 1.0:
        raise ValidationError(f"{name} must be in (0, 1), got {value}")
    return float(value)


def check_nonempty(seq: Sequence | Iterable, name: str):
    seq = list(seq) if not isinstance(seq, Sequence) else seq
    if len(seq) == 0:
        raise ValidationError(f"{name} must be non-empty")
    return seq


def check_box(box, name: str = "box"):
    x1, y1, x2, y2 = box
    if not (x2 > x1 and y2 > y1):
        raise ValidationError(f"{name} must satisfy x2 > x1 and y2 > y1, got {box}")
    return box
