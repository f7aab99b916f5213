"""Evaluation: vetting P/R/F1, detection AP and CorLoc, agreement, reports."""

from .agreement import (
    agreement_summary,
    annotation_distribution,
    binary_kappa,
    disagreement_rate,
    noise_category_recall,
    weighted_kappa,
)
from .detection import (
    AREA_RANGES,
    ImageGroundTruth,
    ap_by_area,
    ap_from_pr,
    average_precision,
    corloc,
    pr_curve,
    top_boxes_from_detections,
)
from .reports import csv_content, fmt, plot_pr_curves, text_table, write_report
from .vetting import VettingReport, f1_score, threshold_sweep, vetting_metrics

__all__ = [
    "AREA_RANGES",
    "ImageGroundTruth",
    "VettingReport",
    "agreement_summary",
    "annotation_distribution",
    "ap_by_area",
    "ap_from_pr",
    "average_precision",
    "binary_kappa",
    "corloc",
    "csv_content",
    "disagreement_rate",
    "f1_score",
    "fmt",
    "noise_category_recall",
    "plot_pr_curves",
    "pr_curve",
    "text_table",
    "threshold_sweep",
    "top_boxes_from_detections",
    "vetting_metrics",
    "weighted_kappa",
]
