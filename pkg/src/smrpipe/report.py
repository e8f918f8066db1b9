"""Artifact emission: delimited result tables, the baseline comparison
document, and rendered figures.

Every writer is deterministic for fixed inputs: floats are serialized with
repr (shortest round-trip form), rows are ordered by subject, and nothing
embeds a timestamp. The one caveat is the fit_seconds column of
results.csv, which records measured wall-clock time and therefore varies
between runs by design.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import (BaselineTable, PUBLISHED_BASELINES, SubjectResult,
                         metrics_from_confusion)
from .model import N_CLASSES, PipelineError

RESULTS_HEADER = ("subject", "model", "accuracy", "recall", "specificity",
                  "f1", "fit_seconds", "model_bytes")
CLASS_NAMES = ("left", "right", "rest")


class IoFailure(PipelineError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def write_results_csv(path, results: list[SubjectResult]) -> None:
    lines = [",".join(RESULTS_HEADER)]
    for r in results:
        m = r.metrics
        lines.append(",".join([
            str(r.subject_id), r.model_kind, _fmt(m.accuracy), _fmt(m.recall),
            _fmt(m.specificity), _fmt(m.f1), _fmt(r.fit_seconds),
            str(r.model_bytes)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_results_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append({
                "subject": int(rec["subject"]),
                "model": rec["model"],
                "accuracy": float(rec["accuracy"]),
                "recall": float(rec["recall"]),
                "specificity": float(rec["specificity"]),
                "f1": float(rec["f1"]),
                "fit_seconds": float(rec["fit_seconds"]),
                "model_bytes": int(rec["model_bytes"]),
            })
    if not rows:
        raise IoFailure(f"{path}: no result rows")
    return rows


def write_confusion_csv(path, cm: np.ndarray) -> None:
    """Rows are true classes, columns predicted classes."""
    k = cm.shape[0]
    header = "true," + ",".join(f"pred_{c}" for c in range(k))
    lines = [header]
    for i in range(k):
        lines.append(str(i) + "," + ",".join(str(int(v)) for v in cm[i]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_confusion_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    k = len(body)
    cm = np.zeros((k, k), dtype=np.int64)
    for i, row in enumerate(body):
        cm[i] = [int(v) for v in row[1:]]
    return cm


def write_failures_csv(path, failures) -> None:
    lines = ["name,stage,message"]
    for f in failures:
        msg = f.message.replace("\n", " ").replace(",", ";")
        lines.append(f"{f.name},{f.stage},{msg}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_per_subject_csv(path, rows: list[dict]) -> None:
    """Plot-ready table: one row per subject, accuracy first."""
    lines = ["subject,accuracy,recall,specificity,f1"]
    for r in sorted(rows, key=lambda r: r["subject"]):
        lines.append(",".join([
            str(r["subject"]), _fmt(r["accuracy"]), _fmt(r["recall"]),
            _fmt(r["specificity"]), _fmt(r["f1"])]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _comparison_rows(rows: list[dict], baselines: BaselineTable) -> list[str]:
    def cell(v):
        # published values carry four decimals; keep them that way
        return f"{v:.4f}" if v is not None else ""

    acc = np.array([r["accuracy"] for r in rows])
    rec = np.array([r["recall"] for r in rows])
    spe = np.array([r["specificity"] for r in rows])
    f1 = np.array([r["f1"] for r in rows])

    out = ["| Approach | Accuracy | Recall | Specificity | F1 |",
           "|---|---|---|---|---|"]
    for b in baselines.rows:
        out.append(f"| {b.label} | {cell(b.accuracy)} | {cell(b.recall)} | "
                   f"{cell(b.specificity)} | {cell(b.f1)} |")
    out.append(f"| Ours (this run) | {_fmt(acc.mean())} | {_fmt(rec.mean())} "
               f"| {_fmt(spe.mean())} | {_fmt(f1.mean())} |")
    return out


def write_comparison_md(path, rows: list[dict],
                        confusions: dict[int, np.ndarray],
                        baselines: BaselineTable = PUBLISHED_BASELINES,
                        model_kind: str | None = None) -> None:
    """Baseline comparison plus the per-subject accuracy table.

    confusions maps subject id to its confusion matrix; degenerate-metric
    flags are recomputed from those counts so regenerating the document
    from saved artifacts reproduces it byte for byte.
    """
    rows = sorted(rows, key=lambda r: r["subject"])
    acc = np.array([r["accuracy"] for r in rows])

    lines = ["# Classification results", ""]
    if model_kind:
        lines.append(f"Model: {model_kind}. "
                     f"Subjects evaluated: {len(rows)}.")
    else:
        lines.append(f"Subjects evaluated: {len(rows)}.")
    lines.append("")
    lines.append("## Comparison with published baselines")
    lines.append("")
    lines.extend(_comparison_rows(rows, baselines))
    lines.append("")
    lines.append(f"Corpus accuracy: mean {_fmt(acc.mean())}, "
                 f"std {_fmt(acc.std())}, min {_fmt(acc.min())}, "
                 f"max {_fmt(acc.max())}.")
    lines.append("")
    lines.append("## Per-subject accuracy")
    lines.append("")
    lines.append("| Subject | Accuracy | Recall | Specificity | F1 |")
    lines.append("|---|---|---|---|---|")
    for r in rows:
        lines.append(f"| {r['subject']} | {_fmt(r['accuracy'])} | "
                     f"{_fmt(r['recall'])} | {_fmt(r['specificity'])} | "
                     f"{_fmt(r['f1'])} |")

    flagged_notes = []
    for r in rows:
        cm = confusions.get(r["subject"])
        if cm is None:
            continue
        flagged = metrics_from_confusion(cm).flagged
        if flagged:
            names = ", ".join(CLASS_NAMES[c] for c in flagged)
            flagged_notes.append(
                f"- subject {r['subject']}: degenerate 0/0 ratio for class "
                f"{names}; affected values reported as 0 and left out of "
                f"the macro mean")
    if flagged_notes:
        lines.append("")
        lines.append("## Degenerate metric flags")
        lines.append("")
        lines.extend(flagged_notes)

    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ------------------------------------------------------------------ figures

def render_accuracy_figure(path, rows: list[dict],
                           baselines: BaselineTable = PUBLISHED_BASELINES
                           ) -> None:
    """Bar chart of per-subject accuracy with baseline reference lines."""
    rows = sorted(rows, key=lambda r: r["subject"])
    subj = [r["subject"] for r in rows]
    acc = [r["accuracy"] for r in rows]

    fig, ax = plt.subplots(figsize=(10, 4), dpi=120)
    ax.bar(subj, acc, color="#3b6ea5", width=0.8)
    for b, style in zip(baselines.rows, ("--", "-.", ":", "--", "-.")):
        ax.axhline(b.accuracy, linestyle=style, linewidth=1.0,
                   color="#888888")
        ax.annotate(b.label, (subj[-1], b.accuracy),
                    xytext=(2, 2), textcoords="offset points",
                    fontsize=6, color="#555555")
    mean_acc = float(np.mean(acc))
    ax.axhline(mean_acc, color="#c23b22", linewidth=1.4)
    ax.annotate(f"corpus mean {mean_acc:.4f}", (subj[0], mean_acc),
                xytext=(2, -10), textcoords="offset points",
                fontsize=7, color="#c23b22")
    ax.set_xlabel("subject")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Per-subject accuracy")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_confusion_figure(path, cm: np.ndarray) -> None:
    """Heatmap of the corpus-summed confusion matrix with counts."""
    fig, ax = plt.subplots(figsize=(4.5, 4), dpi=120)
    im = ax.imshow(cm, cmap="Blues")
    k = cm.shape[0]
    names = CLASS_NAMES[:k]
    ax.set_xticks(range(k), names)
    ax.set_yticks(range(k), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title("Corpus confusion matrix")
    thresh = cm.max() / 2.0 if cm.max() else 0.5
    for i in range(k):
        for j in range(k):
            color = "white" if cm[i, j] > thresh else "black"
            ax.text(j, i, str(int(cm[i, j])), ha="center", va="center",
                    color=color, fontsize=9)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def emit_run_artifacts(out_dir, results: list[SubjectResult], failures=(),
                       baselines: BaselineTable = PUBLISHED_BASELINES
                       ) -> list[str]:
    """Write the full artifact set for a finished corpus run.

    Returns the artifact file names (relative to out_dir).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = sorted(results, key=lambda r: r.subject_id)
    rows = [{"subject": r.subject_id, "accuracy": r.metrics.accuracy,
             "recall": r.metrics.recall, "specificity": r.metrics.specificity,
             "f1": r.metrics.f1} for r in results]
    confusions = {r.subject_id: r.confusion for r in results}

    written = []
    write_results_csv(out / "results.csv", results)
    written.append("results.csv")
    write_per_subject_csv(out / "per_subject.csv", rows)
    written.append("per_subject.csv")
    for r in results:
        name = f"confusion_s{r.subject_id:02d}.csv"
        write_confusion_csv(out / name, r.confusion)
        written.append(name)
    write_comparison_md(out / "comparison.md", rows, confusions, baselines,
                        model_kind=results[0].model_kind)
    written.append("comparison.md")
    if failures:
        write_failures_csv(out / "failures.csv", failures)
        written.append("failures.csv")
    if any(r.validation_accuracy is not None for r in results):
        lines = ["subject,validation_accuracy"]
        for r in results:
            if r.validation_accuracy is not None:
                lines.append(f"{r.subject_id},{_fmt(r.validation_accuracy)}")
        (out / "validation.csv").write_text("\n".join(lines) + "\n",
                                            encoding="utf-8")
        written.append("validation.csv")
    return written


def emit_report(results_dir, out_dir=None,
                baselines: BaselineTable = PUBLISHED_BASELINES) -> list[str]:
    """Rebuild comparison.md, per_subject.csv and the figures from a run
    directory's saved results.csv and confusion tables."""
    src = Path(results_dir)
    out = Path(out_dir) if out_dir is not None else src
    out.mkdir(parents=True, exist_ok=True)
    results_path = src / "results.csv"
    if not results_path.exists():
        raise IoFailure(f"{results_path}: not found")
    rows = read_results_csv(results_path)

    confusions = {}
    total = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for r in rows:
        path = src / f"confusion_s{r['subject']:02d}.csv"
        if path.exists():
            cm = read_confusion_csv(path)
            confusions[r["subject"]] = cm
            total += cm

    model_kind = rows[0]["model"]
    write_comparison_md(out / "comparison.md", rows, confusions, baselines,
                        model_kind=model_kind)
    write_per_subject_csv(out / "per_subject.csv", rows)
    render_accuracy_figure(out / "accuracy_by_subject.png", rows, baselines)
    written = ["comparison.md", "per_subject.csv", "accuracy_by_subject.png"]
    if confusions:
        render_confusion_figure(out / "confusion_total.png", total)
        written.append("confusion_total.png")
    return written
