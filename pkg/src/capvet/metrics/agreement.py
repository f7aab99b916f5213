"""Inter-annotator agreement and annotation-outcome summaries.

Kappa is computed per option as a one-vs-rest binary Cohen's kappa and
combined into a question-level score weighted by how often each option was
chosen. All kappa arithmetic runs on exact fractions so that hand-computed
fixtures match without tolerance.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Sequence

from ..annotation.schema import (
    QUESTION_OPTIONS,
    SKIPPED_OPTIONS,
    AnnotationRecord,
    q4_required,
)
from ..validation import ValidationError

POOLING_MODES = ("per_dataset", "pooled")


def _chosen(option: str, answer) -> bool:
    if isinstance(answer, str):
        return answer == option
    return option in answer


def binary_kappa(marks_a: Sequence[bool], marks_b: Sequence[bool]) -> Fraction:
    """Cohen's kappa for one binary option over aligned samples.

    When chance agreement is total (both annotators constant), kappa is 1 if
    the observed marks also agree everywhere and 0 otherwise.
    """
    if len(marks_a) != len(marks_b):
        raise ValidationError("annotators marked different sample counts")
    n = len(marks_a)
    if n == 0:
        raise ValidationError("no samples to compare")
    po = Fraction(sum(a == b for a, b in zip(marks_a, marks_b)), n)
    pa = Fraction(sum(marks_a), n)
    pb = Fraction(sum(marks_b), n)
    pe = pa * pb + (1 - pa) * (1 - pb)
    if pe == 1:
        return Fraction(1) if po == 1 else Fraction(0)
    return (po - pe) / (1 - pe)


def _option_counts(option: str, answers_a, answers_b) -> int:
    return sum(_chosen(option, a) for a in answers_a) + sum(_chosen(option, b) for b in answers_b)


def _question_terms(answers_a, answers_b, options: Sequence[str]) -> list[tuple[Fraction, Fraction]]:
    """(weight, kappa) per option; options never chosen by either side drop out."""
    terms = []
    for option in options:
        total = _option_counts(option, answers_a, answers_b)
        if total == 0:
            continue
        marks_a = [_chosen(option, a) for a in answers_a]
        marks_b = [_chosen(option, b) for b in answers_b]
        weight = Fraction(total, 2)
        terms.append((weight, binary_kappa(marks_a, marks_b)))
    return terms


def weighted_kappa(
    answers_a: Sequence,
    answers_b: Sequence,
    question: str,
    datasets: Sequence[str] | None = None,
    pooling: str = "per_dataset",
) -> Fraction:
    """Option-weighted Cohen's kappa for one question.

    ``answers_a`` and ``answers_b`` are aligned per-sample answers from two
    annotators: strings for the single-select question, sets for the rest.
    With ``datasets`` given and per-dataset pooling, weights and kappas are
    computed inside each dataset and combined in one weighted average;
    "pooled" concatenates all samples first.
    """
    if question not in QUESTION_OPTIONS:
        raise ValidationError(f"unknown question {question!r}")
    if pooling not in POOLING_MODES:
        raise ValidationError(f"pooling must be one of {POOLING_MODES}, got {pooling!r}")
    if len(answers_a) != len(answers_b):
        raise ValidationError("annotators answered different sample counts")
    if not answers_a:
        raise ValidationError("no samples to compare")
    options = QUESTION_OPTIONS[question]
    if datasets is not None and len(datasets) != len(answers_a):
        raise ValidationError("datasets must align with the answer sequences")

    if datasets is None or pooling == "pooled":
        terms = _question_terms(answers_a, answers_b, options)
    else:
        terms = []
        for tag in dict.fromkeys(datasets):
            idx = [i for i, d in enumerate(datasets) if d == tag]
            terms.extend(
                _question_terms([answers_a[i] for i in idx], [answers_b[i] for i in idx], options)
            )
    total_weight = sum(w for w, _ in terms)
    if total_weight == 0:
        raise ValidationError(f"{question}: no option was ever chosen")
    return sum(w * k for w, k in terms) / total_weight


def _coarse(answer) -> bool:
    """Collapse a multi-select to: did the annotator flag anything but none."""
    if isinstance(answer, str):
        raise ValidationError("coarse comparison applies to multi-select answers")
    return bool(set(answer) - {"none"})


def disagreement_rate(
    answers_a: Sequence,
    answers_b: Sequence,
    datasets: Sequence[str] | None = None,
    coarse: bool = False,
) -> Fraction:
    """Fraction of samples with differing answers, averaged over datasets.

    ``coarse`` compares only whether anything besides "none" was selected,
    the forgiving reading for the multi-select questions.
    """
    if len(answers_a) != len(answers_b):
        raise ValidationError("annotators answered different sample counts")
    if not answers_a:
        raise ValidationError("no samples to compare")
    if datasets is None:
        datasets = ["all"] * len(answers_a)
    elif len(datasets) != len(answers_a):
        raise ValidationError("datasets must align with the answer sequences")

    rates = []
    for tag in dict.fromkeys(datasets):
        idx = [i for i, d in enumerate(datasets) if d == tag]
        if coarse:
            misses = sum(_coarse(answers_a[i]) != _coarse(answers_b[i]) for i in idx)
        else:
            misses = sum(answers_a[i] != answers_b[i] for i in idx)
        rates.append(Fraction(misses, len(idx)))
    return sum(rates) / len(rates)


def _paired_answers(
    records_by_annotator: Mapping[str, Mapping[int, AnnotationRecord]],
    question: str,
) -> tuple[Sequence, Sequence, list[int]]:
    """Aligned answers from exactly two annotators on tasks both completed.

    Only tasks where both records carry the question are kept, since the
    schema makes each follow-up conditional on Q1.
    """
    if len(records_by_annotator) != 2:
        raise ValidationError(
            f"pairwise agreement needs exactly 2 annotators, got {len(records_by_annotator)}"
        )
    (recs_a, recs_b) = records_by_annotator.values()
    shared = sorted(set(recs_a) & set(recs_b))
    if not shared:
        raise ValidationError("annotators share no completed tasks")
    answers_a, answers_b, task_ids = [], [], []
    for task_id in shared:
        value_a = getattr(recs_a[task_id], question)
        value_b = getattr(recs_b[task_id], question)
        if value_a is None or value_b is None:
            continue
        answers_a.append(value_a)
        answers_b.append(value_b)
        task_ids.append(task_id)
    return answers_a, answers_b, task_ids


def agreement_summary(
    records_by_annotator: Mapping[str, Mapping[int, AnnotationRecord]],
    datasets_by_task: Mapping[int, str] | None = None,
    pooling: str = "per_dataset",
) -> dict:
    """Kappa and disagreement for every question with any shared answers."""
    out: dict = {"kappa": {}, "disagreement": {}, "n_shared": {}}
    for question in QUESTION_OPTIONS:
        answers_a, answers_b, task_ids = _paired_answers(records_by_annotator, question)
        if not answers_a:
            out["kappa"][question] = None
            out["disagreement"][question] = None
            out["n_shared"][question] = 0
            continue
        tags = None
        if datasets_by_task is not None:
            tags = [datasets_by_task.get(t, "default") for t in task_ids]
        try:
            kappa = weighted_kappa(answers_a, answers_b, question, datasets=tags, pooling=pooling)
        except ValidationError:
            kappa = None
        out["kappa"][question] = kappa
        out["disagreement"][question] = disagreement_rate(answers_a, answers_b, datasets=tags)
        if question in ("q2", "q3"):
            out["disagreement"][f"{question}_coarse"] = disagreement_rate(
                answers_a, answers_b, datasets=tags, coarse=True
            )
        out["n_shared"][question] = len(answers_a)
    return out


def _mean(values: list[Fraction]) -> Fraction:
    return sum(values, Fraction(0)) / len(values)


def annotation_distribution(
    records_by_annotator: Mapping[str, Mapping[int, AnnotationRecord]],
    include_skipped: bool = False,
) -> dict[str, dict[str, Fraction]]:
    """Per-question option shares, averaged across annotators.

    Denominators follow the schema's eligibility: Q1 over all answered tasks,
    Q2 over tasks every annotator marked absent, Q3 over tasks the annotator
    marked visible or partially visible, and Q4 over tasks where the
    annotator's answers made Q4 applicable. Catch-all options (none, other,
    unclear) are dropped unless requested.
    """
    if not records_by_annotator:
        raise ValidationError("no annotators")
    agreed_absent: set[int] | None = None
    for records in records_by_annotator.values():
        absent = {t for t, r in records.items() if r.q1 == "absent"}
        agreed_absent = absent if agreed_absent is None else agreed_absent & absent

    def options_for(question: str) -> list[str]:
        options = QUESTION_OPTIONS[question]
        if include_skipped:
            return list(options)
        return [o for o in options if o not in SKIPPED_OPTIONS]

    shares: dict[str, dict[str, list[Fraction]]] = {
        q: {o: [] for o in options_for(q)} for q in QUESTION_OPTIONS
    }
    for records in records_by_annotator.values():
        eligible = {
            "q1": list(records.values()),
            "q2": [r for t, r in records.items() if t in agreed_absent and r.q2 is not None],
            "q3": [r for r in records.values() if r.q1 in ("visible", "partially_visible")],
            "q4": [r for r in records.values() if q4_required(r.q1, r.q3)],
        }
        for question, rows in eligible.items():
            if not rows:
                continue
            for option in shares[question]:
                count = sum(_chosen(option, getattr(r, question)) for r in rows if getattr(r, question) is not None)
                shares[question][option].append(Fraction(count, len(rows)))
    return {
        question: {option: _mean(values) for option, values in table.items() if values}
        for question, table in shares.items()
    }


NOISE_OPTION_KEYS = (
    ("q1", "partially_visible"),
    ("q1", "absent"),
    ("q2", "co_occurring_context"),
    ("q2", "similar_object"),
    ("q3", "occlusion"),
    ("q3", "key_parts_missing"),
    ("q3", "atypical"),
    ("q4", "beyond_image"),
    ("q4", "past"),
    ("q4", "prepositional_phrase"),
    ("q4", "non_literal"),
    ("q4", "noun_modifier"),
    ("q4", "word_sense"),
    ("q4", "named_entity"),
)


def noise_category_recall(
    rejected_by_task: Mapping[int, bool],
    records_by_annotator: Mapping[str, Mapping[int, AnnotationRecord]],
) -> dict[str, Fraction]:
    """How often a vetting method rejected labels carrying each noise mark.

    Fully visible labels are the method's job to keep, so they are excluded;
    the eligible pool per cell is the annotator's partial/absent answers that
    carry the option. Cells with no eligible samples for any annotator are
    left out. Values average the per-annotator recalls.
    """
    if not records_by_annotator:
        raise ValidationError("no annotators")
    recalls: dict[str, list[Fraction]] = {}
    for annotator, records in records_by_annotator.items():
        noisy = [
            (t, r) for t, r in records.items() if r.q1 in ("partially_visible", "absent")
        ]
        undecided = sorted(t for t, _ in noisy if t not in rejected_by_task)
        if undecided:
            raise ValidationError(
                f"annotator {annotator}: no vetting decision for tasks {undecided}"
            )
        for question, option in NOISE_OPTION_KEYS:
            eligible = [t for t, r in noisy if _is_marked(r, question, option)]
            if not eligible:
                continue
            hit = sum(rejected_by_task[t] for t in eligible)
            recalls.setdefault(f"{question}:{option}", []).append(Fraction(hit, len(eligible)))
    return {key: _mean(values) for key, values in recalls.items()}


def _is_marked(record: AnnotationRecord, question: str, option: str) -> bool:
    value = getattr(record, question)
    if value is None:
        return False
    return _chosen(option, value)
