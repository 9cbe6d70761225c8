"""Per-category precision/recall/F1 and the macro/micro aggregates.

Macro-F1 averages per-class F1 over ALL classes, including classes that
never appear in truth or predictions (their F1 counts as 0). Micro-F1
aggregates the per-class counts first; for single-label classification it
equals plain accuracy.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .network import predict_proba


@dataclass(frozen=True)
class EvaluationReport:
    num_classes: int
    support: np.ndarray  # true-label counts per class
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray
    per_class_f1: np.ndarray
    macro_f1: float
    micro_f1: float
    accuracy: float


def evaluate(y_true, y_pred, num_classes: int) -> EvaluationReport:
    """Score integer predictions against truths over a fixed class set.

    Any zero denominator (no predictions for a class, no true members,
    or precision + recall = 0) yields 0 for that statistic rather than
    raising.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError("y_true and y_pred must be 1-d arrays of equal length")
    if y_true.size == 0:
        raise ValueError("cannot evaluate zero samples")
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise ValueError(f"{name} contains labels outside 0..{num_classes - 1}")

    tp = np.bincount(y_true[y_true == y_pred], minlength=num_classes).astype(np.float64)
    pred_count = np.bincount(y_pred, minlength=num_classes).astype(np.float64)
    true_count = np.bincount(y_true, minlength=num_classes).astype(np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred_count > 0, tp / pred_count, 0.0)
        recall = np.where(true_count > 0, tp / true_count, 0.0)
        pr_sum = precision + recall
        f1 = np.where(pr_sum > 0, 2 * precision * recall / np.where(pr_sum > 0, pr_sum, 1), 0.0)

    # Single division of exact integer counts; for single-label data this
    # equals accuracy to the bit, since FP and FN totals coincide.
    micro_tp = tp.sum()
    micro_fp = pred_count.sum() - micro_tp
    micro_fn = true_count.sum() - micro_tp
    denom = 2 * micro_tp + micro_fp + micro_fn
    micro_f1 = 2 * micro_tp / denom if denom > 0 else 0.0

    return EvaluationReport(
        num_classes=num_classes,
        support=true_count.astype(np.int64),
        per_class_precision=precision,
        per_class_recall=recall,
        per_class_f1=f1,
        macro_f1=float(f1.mean()),
        micro_f1=float(micro_f1),
        accuracy=float((y_true == y_pred).mean()),
    )


def argmax_predict(model, X: np.ndarray) -> np.ndarray:
    """Most probable class per row; accepts a network or anything with .net."""
    net = getattr(model, "net", model)
    return predict_proba(net, np.asarray(X, dtype=np.float64)).argmax(axis=1)


def write_report_csv(path, report: EvaluationReport, class_names=None) -> None:
    names = class_names or [str(i) for i in range(report.num_classes)]
    if len(names) != report.num_classes:
        raise ValueError("class_names length must match num_classes")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "support", "precision", "recall", "f1"])
        for i, name in enumerate(names):
            writer.writerow(
                [
                    name,
                    int(report.support[i]),
                    report.per_class_precision[i],
                    report.per_class_recall[i],
                    report.per_class_f1[i],
                ]
            )
        writer.writerow(["macro_f1", "", "", "", report.macro_f1])
        writer.writerow(["micro_f1", "", "", "", report.micro_f1])


def format_report_markdown(report: EvaluationReport, class_names=None) -> str:
    names = class_names or [str(i) for i in range(report.num_classes)]
    if len(names) != report.num_classes:
        raise ValueError("class_names length must match num_classes")
    lines = [
        "| category | support | precision | recall | f1 |",
        "| --- | ---: | ---: | ---: | ---: |",
    ]
    for i, name in enumerate(names):
        lines.append(
            f"| {name} | {int(report.support[i])} | {report.per_class_precision[i]:.4f} "
            f"| {report.per_class_recall[i]:.4f} | {report.per_class_f1[i]:.4f} |"
        )
    lines.append(f"| **macro-F1** | | | | {report.macro_f1:.4f} |")
    lines.append(f"| **micro-F1** | | | | {report.micro_f1:.4f} |")
    return "\n".join(lines) + "\n"
