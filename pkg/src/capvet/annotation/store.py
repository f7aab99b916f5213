"""Append-only annotation storage with per-(task, annotator) supersession.

The log file is JSONL, one submission per line, never rewritten. The latest
record per (task_id, annotator_id) is the current answer; superseding an
existing answer requires the explicit revision flag so accidental double
submissions bounce instead of silently overwriting.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ..validation import ValidationError
from .schema import QUESTION_OPTIONS, AnnotationRecord, AnnotationTask, validate


def load_tasks(path: Path) -> list[AnnotationTask]:
    tasks = []
    seen: set[int] = set()
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            task = AnnotationTask.from_json(json.loads(line))
            if task.task_id in seen:
                raise ValidationError(f"duplicate task_id {task.task_id} in {path}")
            seen.add(task.task_id)
            tasks.append(task)
    return tasks


def save_tasks(path: Path, tasks: Iterable[AnnotationTask]) -> None:
    with open(path, "w") as handle:
        for task in tasks:
            handle.write(json.dumps(task.to_json(), sort_keys=True) + "\n")


class AnnotationStore:
    """Task pool plus the append-only submission log.

    Writes are serialized through a lock and flushed line-at-a-time, so a
    reader of the log file never sees a torn record.
    """

    def __init__(self, log_path: Path, tasks: Sequence[AnnotationTask]):
        if not tasks:
            raise ValidationError("task pool is empty")
        self._path = Path(log_path)
        self._lock = threading.Lock()
        self._tasks = {t.task_id: t for t in sorted(tasks, key=lambda t: t.task_id)}
        if len(self._tasks) != len(tasks):
            raise ValidationError("duplicate task ids in pool")
        self._history: list[AnnotationRecord] = []
        self._current: dict[tuple[int, str], AnnotationRecord] = {}
        if self._path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self._path) as handle:
            for number, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = AnnotationRecord.from_json(json.loads(line))
                except (json.JSONDecodeError, KeyError) as exc:
                    raise ValidationError(f"{self._path}:{number}: unreadable record: {exc}")
                self._history.append(record)
                self._current[(record.task_id, record.annotator_id)] = record

    @property
    def tasks(self) -> list[AnnotationTask]:
        return list(self._tasks.values())

    def task(self, task_id: int) -> AnnotationTask:
        if task_id not in self._tasks:
            raise ValidationError(f"unknown task {task_id}")
        return self._tasks[task_id]

    def submit(self, record: AnnotationRecord) -> list[str]:
        """Empty list means accepted; otherwise the violations, store untouched."""
        violations = validate(record)
        if record.task_id not in self._tasks:
            violations.append(f"task_id: {record.task_id} is not in the task pool")
        if not record.annotator_id:
            violations.append("annotator_id: must be non-empty")
        if violations:
            return violations
        key = (record.task_id, record.annotator_id)
        with self._lock:
            if key in self._current and not record.revision:
                return [
                    f"task {record.task_id} already annotated by {record.annotator_id}; "
                    "set revision to supersede"
                ]
            with open(self._path, "a") as handle:
                handle.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
                handle.flush()
            self._history.append(record)
            self._current[key] = record
        return []

    def completed(self, annotator_id: str) -> set[int]:
        with self._lock:
            return {t for t, a in self._current if a == annotator_id}

    def next_task(self, annotator_id: str) -> AnnotationTask | None:
        """Lowest-id task this annotator has not answered; None when done."""
        done = self.completed(annotator_id)
        for task_id, task in self._tasks.items():
            if task_id not in done:
                return task
        return None

    def history(self) -> list[AnnotationRecord]:
        with self._lock:
            return list(self._history)

    def current_by_annotator(self) -> dict[str, dict[int, AnnotationRecord]]:
        out: dict[str, dict[int, AnnotationRecord]] = {}
        with self._lock:
            for (task_id, annotator_id), record in self._current.items():
                out.setdefault(annotator_id, {})[task_id] = record
        return out

    def export_jsonl(self) -> str:
        """The full submission history, byte-stable for a given log."""
        lines = [json.dumps(r.to_json(), sort_keys=True) for r in self.history()]
        return "\n".join(lines) + ("\n" if lines else "")

    def agreement_report(self, datasets_by_task: Mapping[int, str] | None = None) -> dict:
        from ..metrics.agreement import agreement_summary

        by_annotator = self.current_by_annotator()
        if len(by_annotator) != 2:
            raise ValidationError(
                f"agreement needs exactly 2 annotators, store has {len(by_annotator)}"
            )
        return agreement_summary(by_annotator, datasets_by_task=datasets_by_task)

    def disagreements(self) -> list[dict]:
        """Per-task questions where the current annotators differ, for calibration."""
        by_annotator = self.current_by_annotator()
        if len(by_annotator) < 2:
            return []
        annotators = sorted(by_annotator)
        shared = set.intersection(*(set(by_annotator[a]) for a in annotators))
        rows = []
        for task_id in sorted(shared):
            for question in QUESTION_OPTIONS:
                answers = {a: getattr(by_annotator[a][task_id], question) for a in annotators}
                if len(set(answers.values())) > 1:
                    rows.append(
                        {
                            "task_id": task_id,
                            "question": question,
                            "answers": {
                                a: sorted(v) if isinstance(v, frozenset) else v
                                for a, v in answers.items()
                            },
                        }
                    )
        return rows
