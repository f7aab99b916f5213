"""Report rendering: CSV files, aligned text tables, PR-curve plots.

Everything here is deterministic: floats use one fixed format, rows are
emitted in a stable order, and nothing stamps dates or hostnames into the
output, so identical inputs produce identical bytes.
"""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from ..validation import ValidationError
from .agreement import NOISE_OPTION_KEYS
from .vetting import VettingReport

FLOAT_PLACES = 6


def fmt(value) -> str:
    """Fixed-width float formatting; exact fractions are converted first."""
    if isinstance(value, Fraction):
        value = float(value)
    if isinstance(value, bool) or value is None:
        return "-" if value is None else str(value).lower()
    if isinstance(value, int):
        return str(value)
    return f"{value:.{FLOAT_PLACES}f}"


def csv_content(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    for row in rows:
        if len(row) != len(header):
            raise ValidationError(f"row width {len(row)} != header width {len(header)}")
    lines = [",".join(header)]
    lines.extend(",".join(fmt(cell) if not isinstance(cell, str) else cell for cell in row) for row in rows)
    return "\n".join(lines) + "\n"


def text_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[fmt(c) if not isinstance(c, str) else c for c in row] for row in rows]
    widths = [max(len(header[i]), *(len(r[i]) for r in cells)) if cells else len(header[i]) for i in range(len(header))]
    def line(row):
        return "  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip()
    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(header), rule, *(line(r) for r in cells)]) + "\n"


def vetting_rows(reports: Sequence[VettingReport]) -> tuple[list[str], list[list]]:
    header = ["method", "precision", "recall", "f1", "tp", "fp", "fn", "tn"]
    rows = [[r.method, r.precision, r.recall, r.f1, r.tp, r.fp, r.fn, r.tn] for r in reports]
    return header, rows


def detection_rows(per_class: Mapping[str, float], mean_value: float, value_name: str = "ap") -> tuple[list[str], list[list]]:
    header = ["class", value_name]
    rows = [[name, per_class[name]] for name in sorted(per_class)]
    rows.append(["mean", mean_value])
    return header, rows


def agreement_rows(summary: Mapping) -> tuple[list[str], list[list]]:
    header = ["question", "kappa", "disagreement", "n_shared"]
    rows = []
    for question in sorted(summary["kappa"]):
        rows.append(
            [
                question,
                summary["kappa"][question],
                summary["disagreement"].get(question),
                summary["n_shared"].get(question, 0),
            ]
        )
    for key in sorted(summary["disagreement"]):
        if key.endswith("_coarse"):
            rows.append([key, None, summary["disagreement"][key], summary["n_shared"].get(key.split("_")[0], 0)])
    return header, rows


def distribution_rows(distribution: Mapping[str, Mapping[str, Fraction]]) -> tuple[list[str], list[list]]:
    header = ["question", "option", "share"]
    rows = []
    for question in sorted(distribution):
        for option, share in distribution[question].items():
            rows.append([question, option, share])
    return header, rows


def noise_recall_rows(per_method: Mapping[str, Mapping[str, Fraction]]) -> tuple[list[str], list[list]]:
    """One row per method; absent cells render as "-"."""
    columns = [f"{q}:{o}" for q, o in NOISE_OPTION_KEYS]
    header = ["method", *columns]
    rows = []
    for method in sorted(per_method):
        cells = per_method[method]
        rows.append([method, *(fmt(cells[c]) if c in cells else "-" for c in columns)])
    return header, rows


def write_report(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    """CSV plus a .txt sibling with the aligned-table rendering."""
    path = Path(path)
    path.write_text(csv_content(header, rows))
    path.with_suffix(".txt").write_text(text_table(header, rows))


def plot_pr_curves(curves: Mapping[str, tuple[Sequence[float], Sequence[float]]], path: Path) -> None:
    """Write a static precision-recall figure, one line per labeled curve."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not curves:
        raise ValidationError("no curves to plot")
    fig, ax = plt.subplots(figsize=(5, 4))
    for label in sorted(curves):
        recall, precision = curves[label]
        ax.plot(recall, precision, label=label)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
