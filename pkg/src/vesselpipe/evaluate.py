"""Pixel confusion counts, dataset-level metrics and result tables.

Dataset aggregates follow the mean-then-harmonic rule: precision, recall and
accuracy are averaged over images, and F1 is the harmonic mean of the mean
precision and mean recall.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .losses import ClassWeights

log = logging.getLogger(__name__)

PLOT_RANGE = (0.5, 1.0)


@dataclasses.dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


@dataclasses.dataclass(frozen=True)
class ImageRow:
    id: str
    precision: float
    recall: float
    accuracy: float
    no_positive_predictions: bool = False


@dataclasses.dataclass
class MetricsReport:
    rows: list[ImageRow]
    mean_precision: float
    mean_recall: float
    f1: float
    mean_accuracy: float

    def summary(self) -> dict:
        return {
            "precision": self.mean_precision,
            "recall": self.mean_recall,
            "f1": self.f1,
            "accuracy": self.mean_accuracy,
            "n_images": len(self.rows),
        }


def confusion(pred: np.ndarray, gt: np.ndarray, fov: np.ndarray | None = None) -> ConfusionCounts:
    pred = np.asarray(pred) > 0
    gt = np.asarray(gt) > 0
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
    if fov is None:
        inside = np.ones(pred.shape, dtype=bool)
    else:
        inside = np.asarray(fov) > 0
        if inside.shape != pred.shape:
            raise ValueError(f"FOV mask {inside.shape} does not match prediction {pred.shape}")
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred & gt & inside)),
        fp=int(np.count_nonzero(pred & ~gt & inside)),
        tn=int(np.count_nonzero(~pred & ~gt & inside)),
        fn=int(np.count_nonzero(~pred & gt & inside)),
    )


def harmonic_mean(a: float, b: float) -> float:
    return 2 * a * b / (a + b) if a + b > 0 else 0.0


def image_row(image_id: str, c: ConfusionCounts) -> ImageRow:
    flagged = c.tp + c.fp == 0
    if flagged:
        log.warning("image %s has no predicted vessel pixels; precision recorded as 0", image_id)
    return ImageRow(
        id=image_id,
        precision=0.0 if flagged else c.tp / (c.tp + c.fp),
        recall=c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0,
        accuracy=(c.tp + c.tn) / c.total if c.total else 0.0,
        no_positive_predictions=flagged,
    )


def dataset_metrics(rows: Sequence[tuple[str, ConfusionCounts]] | Sequence[ConfusionCounts]) -> MetricsReport:
    """Aggregate per-image counts. Accepts ``(id, counts)`` pairs or bare counts."""
    if not rows:
        raise ValueError("no images to aggregate")
    pairs = [r if isinstance(r, tuple) else (str(i), r) for i, r in enumerate(rows)]
    image_rows = [image_row(i, c) for i, c in pairs]
    mp = float(np.mean([r.precision for r in image_rows]))
    mr = float(np.mean([r.recall for r in image_rows]))
    ma = float(np.mean([r.accuracy for r in image_rows]))
    return MetricsReport(rows=image_rows, mean_precision=mp, mean_recall=mr, f1=harmonic_mean(mp, mr), mean_accuracy=ma)


def estimate_class_weights(samples: Iterable, use_fov: bool = True) -> ClassWeights:
    """Background weight 1, vessel weight = background/vessel pixel ratio."""
    bg = vessel = 0
    for s in samples:
        if s.gt is None:
            raise ValueError(f"sample {s.id!r} has no ground truth")
        inside = s.fov().astype(bool) if use_fov else np.ones(s.gt.shape, bool)
        v = int(np.count_nonzero((s.gt > 0) & inside))
        vessel += v
        bg += int(np.count_nonzero(inside)) - v
    if vessel == 0:
        raise ValueError("training set has no vessel pixels")
    return ClassWeights(1.0, bg / vessel)


# --- tables and plots ---------------------------------------------------------


def write_per_image_csv(report: MetricsReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["id", "Precision", "Recall", "Accuracy", "no_positive_predictions"])
        for r in report.rows:
            out.writerow([r.id, f"{r.precision:.4f}", f"{r.recall:.4f}", f"{r.accuracy:.4f}", int(r.no_positive_predictions)])


def write_results_table(rows: Sequence[tuple[str, MetricsReport]], path: str | Path) -> None:
    """Method-per-row table with Precision, Recall, F1-Score, Accuracy columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["Method", "Precision", "Recall", "F1-Score", "Accuracy"])
        for name, rep in rows:
            out.writerow([name, f"{rep.mean_precision:.4f}", f"{rep.mean_recall:.4f}", f"{rep.f1:.4f}", f"{rep.mean_accuracy:.4f}"])


def write_summary_json(payload: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def pr_trajectory_plot(trace, out_path: str | Path) -> dict:
    """Recall-vs-precision scatter per epoch, train and validation side by side.

    Later epochs are drawn lighter. Points outside [0.5, 1] are clipped to the
    axis edge; the returned dict reports how many were clipped per panel.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    records = list(getattr(trace, "records", trace))
    if not records:
        raise ValueError("trace is empty")
    lo, hi = PLOT_RANGE
    n = len(records)
    shade = np.linspace(0.15, 0.9, n) if n > 1 else np.array([0.5])
    colors = plt.get_cmap("viridis")(shade)
    fig, axes = plt.subplots(1, 2, figsize=(8, 4), dpi=100)
    clipped = {}
    panels = (
        ("train", [r.train_recall for r in records], [r.train_precision for r in records]),
        ("validation", [r.val_recall for r in records], [r.val_precision for r in records]),
    )
    for ax, (name, rec, prec) in zip(axes, panels):
        rec, prec = np.asarray(rec, float), np.asarray(prec, float)
        outside = (rec < lo) | (rec > hi) | (prec < lo) | (prec > hi)
        clipped[name] = int(outside.sum())
        ax.scatter(np.clip(rec, lo, hi), np.clip(prec, lo, hi), c=colors, s=14)
        ax.set_xlim(lo, hi)
        ax.set_ylim(lo, hi)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_title(name)
        ax.set_aspect("equal")
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="png", metadata={"Software": None})
    plt.close(fig)
    if any(clipped.values()):
        log.info("pr plot %s: clipped points %s", out_path, clipped)
    return clipped
