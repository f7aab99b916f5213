"""HTTP service the annotation client talks to.

Endpoints: next task per annotator, rule-checked submission, JSONL export,
and the agreement/disagreement views used for calibration. The browser UI is
served as static files from the same process when a build directory is given.
"""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, Query
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from .schema import AnnotationRecord
from .store import AnnotationStore


class AnnotationIn(BaseModel):
    task_id: int
    annotator_id: str
    q1: str
    q2: list[str] | None = None
    q3: list[str] | None = None
    q4: list[str] | None = None
    timestamp: float = 0.0
    free_text: str = ""
    revision: bool = False

    def to_record(self) -> AnnotationRecord:
        return AnnotationRecord(
            task_id=self.task_id,
            annotator_id=self.annotator_id,
            q1=self.q1,
            q2=frozenset(self.q2) if self.q2 is not None else None,
            q3=frozenset(self.q3) if self.q3 is not None else None,
            q4=frozenset(self.q4) if self.q4 is not None else None,
            timestamp=self.timestamp,
            free_text=self.free_text,
            revision=self.revision,
        )


def _plain(value):
    if isinstance(value, Fraction):
        return float(value)
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def create_app(
    store: AnnotationStore,
    static_dir: Path | None = None,
    datasets_by_task: Mapping[int, str] | None = None,
) -> FastAPI:
    app = FastAPI(title="caption label annotation")

    @app.get("/api/tasks/next")
    def next_task(annotator: str = Query(min_length=1)):
        task = store.next_task(annotator)
        total = len(store.tasks)
        completed = len(store.completed(annotator))
        if task is None:
            return {"done": True, "task": None, "completed": completed, "total": total}
        return {"done": False, "task": task.to_json(), "completed": completed, "total": total}

    @app.post("/api/annotations")
    def submit(body: AnnotationIn):
        violations = store.submit(body.to_record())
        if violations:
            return JSONResponse(status_code=422, content={"violations": violations})
        return {"accepted": True}

    @app.get("/api/export")
    def export():
        return PlainTextResponse(store.export_jsonl(), media_type="application/x-ndjson")

    @app.get("/api/agreement")
    def agreement():
        by_annotator = store.current_by_annotator()
        if len(by_annotator) != 2:
            return {
                "ready": False,
                "detail": f"agreement needs exactly 2 annotators, have {len(by_annotator)}",
            }
        summary = store.agreement_report(datasets_by_task=datasets_by_task)
        return {"ready": True, **{key: _plain(table) for key, table in summary.items()}}

    @app.get("/api/disagreements")
    def disagreements():
        return {"disagreements": store.disagreements()}

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app


def serve(
    store: AnnotationStore,
    host: str = "127.0.0.1",
    port: int = 8700,
    static_dir: Path | None = None,
    datasets_by_task: Mapping[int, str] | None = None,
) -> None:
    import uvicorn

    app = create_app(store, static_dir=static_dir, datasets_by_task=datasets_by_task)
    uvicorn.run(app, host=host, port=port, log_level="warning")
