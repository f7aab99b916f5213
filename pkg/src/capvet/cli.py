"""Command-line entry point.

One verb per pipeline stage plus `run` for the whole chain, `report` for
tables and PR-curve plots from a finished run, and `annotate-serve` for the
annotation HTTP service. CAPVET_OUTPUT_DIR overrides the config's output
directory; everything else comes from the config document.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .corpus import CorpusParseError
from .validation import ValidationError

OUTPUT_DIR_ENV = "CAPVET_OUTPUT_DIR"


def _load_config(path: str):
    from .pipeline import load_config

    config = load_config(path)
    override = os.environ.get(OUTPUT_DIR_ENV)
    if override:
        config.output_dir = Path(override)
    return config


def _cmd_stage(stage: str):
    def handler(args) -> int:
        from .pipeline import run_stage

        entry = run_stage(_load_config(args.config), stage)
        print(f"{entry['stage']}: {entry['status']}; artifacts: {', '.join(sorted(entry['artifacts']))}")
        return 0

    return handler


def _cmd_run(args) -> int:
    from .pipeline import run

    manifest = run(_load_config(args.config))
    for entry in [manifest["corpus"], *manifest["stages"]]:
        print(f"{entry['stage']}: {entry['status']}")
    return 0


def _cmd_report(args) -> int:
    from .metrics import plot_pr_curves, pr_curve, text_table
    from .pipeline import PipelineContext
    from .wsod import load_detections

    config = _load_config(args.config)
    ctx = PipelineContext(config)
    if not ctx.paths.metrics_json.exists():
        raise ValidationError(f"no metrics at {ctx.paths.metrics_json}; run evaluate first")
    doc = json.loads(ctx.paths.metrics_json.read_text())

    sections = []
    if "vetting" in doc:
        v = doc["vetting"]
        rows = [[v["method"], v["precision"], v["recall"], v["f1"], v["tp"], v["fp"], v["fn"], v["tn"]]]
        sections.append("Vetting\n" + text_table(["method", "precision", "recall", "f1", "tp", "fp", "fn", "tn"], rows))
    det = doc["detection"]
    rows = [[c, det["ap_per_class"][c], det["corloc_per_class"].get(c)] for c in sorted(det["ap_per_class"])]
    rows.append(["mean", det["map"], det["corloc"]])
    sections.append("Detection\n" + text_table(["class", "ap", "corloc"], rows))
    report_path = ctx.paths.root / "report.txt"
    report_path.write_text("\n".join(sections))
    print(f"wrote {report_path}")

    if args.plot:
        detections = load_detections(ctx.paths.detections)
        test_ids = [r.record_id for r in ctx.test_records()]
        gt = ctx.detection_gt(test_ids)
        curves = {}
        for category in sorted(det["ap_per_class"]):
            recall, precision = pr_curve(detections, gt, category, iou_thresh=det["iou_thresh"])
            if len(recall):
                curves[category] = (recall.tolist(), precision.tolist())
        plot_path = ctx.paths.root / "pr_curves.png"
        plot_pr_curves(curves, plot_path)
        print(f"wrote {plot_path}")
    return 0


def _cmd_annotate_serve(args) -> int:
    from .annotation.service import serve
    from .annotation.store import AnnotationStore, load_tasks

    tasks = load_tasks(Path(args.tasks))
    store = AnnotationStore(Path(args.log), tasks)
    static_dir = Path(args.static) if args.static else None
    if static_dir is not None and not static_dir.is_dir():
        raise ValidationError(f"static dir does not exist: {static_dir}")
    print(f"serving {len(tasks)} tasks on http://{args.host}:{args.port}")
    serve(store, host=args.host, port=args.port, static_dir=static_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capvet",
        description="Caption-label vetting and weakly-supervised detection pipeline.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_config_verb(name: str, help_text: str, handler):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config (.toml or .json)")
        p.set_defaults(handler=handler)
        return p

    add_config_verb("ingest", "materialize the corpus artifacts", _cmd_stage("ingest"))
    add_config_verb("extract", "extract object labels from captions", _cmd_stage("extract"))
    add_config_verb("pseudo-label", "assign visual-presence targets", _cmd_stage("pseudo_label"))
    add_config_verb("train-veil", "train the token-level vetting model", _cmd_stage("train_veil"))
    add_config_verb("vet", "run the configured vetting method", _cmd_stage("vet"))
    add_config_verb("train-wsod", "train the weakly-supervised detector", _cmd_stage("train_wsod"))
    add_config_verb("evaluate", "compute vetting and detection metrics", _cmd_stage("evaluate"))
    add_config_verb("run", "run the full pipeline end to end", _cmd_run)
    report = add_config_verb("report", "render tables and plots from a finished run", _cmd_report)
    report.add_argument("--plot", action="store_true", help="also write per-class PR curves")

    serve_p = sub.add_parser("annotate-serve", help="serve the annotation HTTP API and UI")
    serve_p.add_argument("--tasks", required=True, help="task pool JSONL")
    serve_p.add_argument("--log", required=True, help="append-only annotation log path")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8700)
    serve_p.add_argument("--static", default="", help="directory of built UI assets to serve")
    serve_p.set_defaults(handler=_cmd_annotate_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (ValidationError, CorpusParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
