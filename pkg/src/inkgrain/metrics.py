"""Segmentation quality metrics: IoU, mean IoU, pixel accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .segmentation import ALL_LABELS, LABEL_NAMES, LABEL_O, LABEL_PC, LABEL_PM, validate_label_map


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks.

    Defined as 1.0 when both masks are empty (perfect agreement on
    absence avoids the 0/0 case).
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"iou: mask shapes disagree, {a.shape} vs {b.shape}")
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a, b).sum()) / union


def mean_iou(pairs) -> float:
    """Arithmetic mean of iou over (predicted, truth) mask pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("mean_iou: empty pair list")
    return float(np.mean([iou(a, b) for a, b in pairs]))


def pixel_accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of pixels whose labels match exactly."""
    p = np.asarray(pred)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise ValueError(f"pixel_accuracy: shapes disagree, {p.shape} vs {t.shape}")
    return float(np.mean(p == t))


@dataclass(frozen=True)
class MetricReport:
    """Per-class and aggregate comparison of a predicted label map to truth.

    per_class_iou holds the strict one-vs-rest IoUs. The *_incl_overlap
    variants score each ink's full footprint (pure + overlap), matching
    how per-ink masks are usually displayed. pixel_counts is the
    truth-by-prediction confusion matrix; its entries sum to the pixel
    count.
    """

    per_class_iou: dict
    mean_iou: float
    pixel_accuracy: float
    pixel_counts: dict
    iou_cyan_incl_overlap: float
    iou_magenta_incl_overlap: float

    def to_dict(self) -> dict:
        return {
            "mean_iou": self.mean_iou,
            "pixel_accuracy": self.pixel_accuracy,
            "per_class_iou": dict(self.per_class_iou),
            "iou_pc_strict": self.per_class_iou["pc"],
            "iou_pm_strict": self.per_class_iou["pm"],
            "iou_cyan_incl_overlap": self.iou_cyan_incl_overlap,
            "iou_magenta_incl_overlap": self.iou_magenta_incl_overlap,
            "pixel_counts": {k: dict(v) for k, v in self.pixel_counts.items()},
        }


def compare_label_maps(pred: np.ndarray, truth: np.ndarray) -> MetricReport:
    """Score a predicted four-way label map against ground truth."""
    pred = validate_label_map(pred)
    truth = validate_label_map(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"compare_label_maps: shapes disagree, {pred.shape} vs {truth.shape}")

    per_class = {
        LABEL_NAMES[k]: iou(pred == k, truth == k) for k in ALL_LABELS
    }
    n_classes = len(ALL_LABELS)
    confusion = np.bincount(
        (truth.astype(np.int64) * n_classes + pred).ravel(), minlength=n_classes * n_classes
    ).reshape(n_classes, n_classes)
    counts = {
        LABEL_NAMES[t]: {LABEL_NAMES[p]: int(confusion[t, p]) for p in ALL_LABELS}
        for t in ALL_LABELS
    }
    cyan = iou(
        (pred == LABEL_PC) | (pred == LABEL_O), (truth == LABEL_PC) | (truth == LABEL_O)
    )
    magenta = iou(
        (pred == LABEL_PM) | (pred == LABEL_O), (truth == LABEL_PM) | (truth == LABEL_O)
    )
    return MetricReport(
        per_class_iou=per_class,
        mean_iou=float(np.mean(list(per_class.values()))),
        pixel_accuracy=pixel_accuracy(pred, truth),
        pixel_counts=counts,
        iou_cyan_incl_overlap=cyan,
        iou_magenta_incl_overlap=magenta,
    )
