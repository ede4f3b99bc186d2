"""Binary change-map scoring: confusion counts and the five summary metrics.

Counts accumulate over the whole evaluation split before any ratio is taken,
so metrics are dataset-level and invariant to sample order. Ratios of the
form 0/0 are reported as 0 and listed in the report's `degenerate` field.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path
from typing import Iterable

import numpy as np

METRIC_NAMES = ("kappa", "iou", "f1", "recall", "precision", "overall_accuracy")


def binarize(probabilities: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Pixel = 1 iff probability >= threshold (inclusive boundary)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return (np.asarray(probabilities) >= threshold).astype(np.uint8)


@dataclasses.dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
        )

    def to_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def _as_binary(arr: np.ndarray, what: str) -> np.ndarray:
    a = np.asarray(arr)
    values = np.unique(a)
    if not np.isin(values, (0, 1)).all():
        raise ValueError(f"{what} must be binary (0/1), found values {values.tolist()}")
    return a.astype(np.int64, copy=False)


def accumulate_confusion(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    """Tally one prediction/ground-truth pair; addition merges samples."""
    p = _as_binary(pred, "prediction")
    g = _as_binary(gt, "ground truth")
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    tp = int(((p == 1) & (g == 1)).sum())
    fp = int(((p == 1) & (g == 0)).sum())
    fn = int(((p == 0) & (g == 1)).sum())
    tn = int(((p == 0) & (g == 0)).sum())
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


@dataclasses.dataclass
class MetricsReport:
    kappa: float
    iou: float
    f1: float
    recall: float
    precision: float
    overall_accuracy: float
    counts: ConfusionCounts
    degenerate: tuple[str, ...] = ()
    patch_size: tuple[int, int] | None = None
    checkpoint_id: str | None = None
    threshold: float | None = None

    def to_dict(self) -> dict:
        out = {name: getattr(self, name) for name in METRIC_NAMES}
        out["counts"] = self.counts.to_dict()
        out["degenerate"] = list(self.degenerate)
        out["patch_size"] = list(self.patch_size) if self.patch_size else None
        out["checkpoint_id"] = self.checkpoint_id
        out["threshold"] = self.threshold
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def csv_header() -> list[str]:
        return list(METRIC_NAMES) + ["tp", "fp", "fn", "tn", "patch_size", "checkpoint_id"]

    def to_csv_row(self) -> list[str]:
        patch = f"{self.patch_size[0]}x{self.patch_size[1]}" if self.patch_size else ""
        return (
            [f"{getattr(self, name):.6f}" for name in METRIC_NAMES]
            + [str(v) for v in (self.counts.tp, self.counts.fp, self.counts.fn, self.counts.tn)]
            + [patch, self.checkpoint_id or ""]
        )


def compute_metrics(
    counts: ConfusionCounts,
    patch_size: tuple[int, int] | None = None,
    checkpoint_id: str | None = None,
    threshold: float | None = None,
) -> MetricsReport:
    """Derive precision/recall/F1/IoU/OA/kappa from accumulated counts."""
    if counts.total <= 0:
        raise ValueError("cannot compute metrics from empty confusion counts")
    tp, fp, fn, tn = counts.tp, counts.fp, counts.fn, counts.tn
    n = float(counts.total)
    degenerate = []

    def ratio(num: float, den: float, name: str) -> float:
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    f1 = ratio(2.0 * precision * recall, precision + recall, "f1")
    iou = ratio(tp, tp + fp + fn, "iou")
    overall_accuracy = (tp + tn) / n
    # chance agreement of the two-class marginals
    p_e = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n)
    kappa = ratio(overall_accuracy - p_e, 1.0 - p_e, "kappa")
    return MetricsReport(
        kappa=kappa,
        iou=iou,
        f1=f1,
        recall=recall,
        precision=precision,
        overall_accuracy=overall_accuracy,
        counts=counts,
        degenerate=tuple(degenerate),
        patch_size=patch_size,
        checkpoint_id=checkpoint_id,
        threshold=threshold,
    )


def write_report_json(report: MetricsReport, path: str | Path) -> None:
    Path(path).write_text(report.to_json() + "\n")


def write_reports_csv(reports: Iterable[MetricsReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MetricsReport.csv_header())
        for report in reports:
            writer.writerow(report.to_csv_row())
