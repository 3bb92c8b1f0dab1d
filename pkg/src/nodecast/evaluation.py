"""Threshold sweeps over ensemble scores: ROC, PR and operating points.

Thresholds are the distinct scores in descending order with a leading
+inf, so the ROC always starts at (0, 0) and ends at (1, 1); tied scores
collapse into a single step. AUROC integrates the curve with the
trapezoid rule. AUPR integrates precision as a step function of recall
(each threshold's precision held back to the previous recall level),
starting from recall 0. Operating points pick the realizable threshold
with the highest TPR subject to FPR <= target; no interpolation between
thresholds is performed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_FPR_TARGETS = (0.01, 0.05, 0.10)


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    fpr: float
    tpr: float
    precision: float


@dataclass
class EvalReport:
    thresholds: np.ndarray  # descending, thresholds[0] == +inf
    fpr: np.ndarray
    tpr: np.ndarray
    precision: np.ndarray  # precision[0] == 0 by convention (no predictions)
    auroc: float
    aupr: float
    n_pos: int
    n_neg: int
    operating_points: dict[float, OperatingPoint] = field(default_factory=dict)

    @property
    def roc(self) -> np.ndarray:
        return np.column_stack([self.fpr, self.tpr])

    @property
    def pr(self) -> np.ndarray:
        # real thresholds only; recall == tpr
        return np.column_stack([self.tpr[1:], self.precision[1:]])

    def to_json(self) -> dict:
        return {
            "auroc": self.auroc,
            "aupr": self.aupr,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "thresholds": ["inf" if math.isinf(t) else t for t in self.thresholds],
            "fpr": self.fpr.tolist(),
            "tpr": self.tpr.tolist(),
            "precision": self.precision.tolist(),
            "operating_points": {
                repr(target): {
                    "threshold": "inf" if math.isinf(op.threshold) else op.threshold,
                    "fpr": op.fpr,
                    "tpr": op.tpr,
                    "precision": op.precision,
                }
                for target, op in self.operating_points.items()
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "EvalReport":
        thresholds = np.asarray(
            [math.inf if t == "inf" else float(t) for t in data["thresholds"]]
        )
        report = cls(
            thresholds=thresholds,
            fpr=np.asarray(data["fpr"]),
            tpr=np.asarray(data["tpr"]),
            precision=np.asarray(data["precision"]),
            auroc=float(data["auroc"]),
            aupr=float(data["aupr"]),
            n_pos=int(data["n_pos"]),
            n_neg=int(data["n_neg"]),
        )
        for raw_target, op in data.get("operating_points", {}).items():
            thr = op["threshold"]
            report.operating_points[float(raw_target)] = OperatingPoint(
                threshold=math.inf if thr == "inf" else float(thr),
                fpr=float(op["fpr"]),
                tpr=float(op["tpr"]),
                precision=float(op["precision"]),
            )
        return report

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def roc_pr(
    scores: np.ndarray,
    labels: np.ndarray,
    fpr_targets: tuple[float, ...] = DEFAULT_FPR_TARGETS,
) -> EvalReport:
    """Sweep every distinct score as a threshold (predict FAIL at >= t)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            "degenerate evaluation: need both classes, got "
            f"{n_pos} positive and {n_neg} negative points"
        )
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    y_sorted = labels[order].astype(np.int64)
    ends = np.nonzero(np.diff(s_sorted))[0]
    ends = np.append(ends, len(s_sorted) - 1)
    tp = np.cumsum(y_sorted)[ends].astype(np.float64)
    fp = (ends + 1) - tp
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    thresholds = np.concatenate([[math.inf], s_sorted[ends]])
    precision = np.concatenate([[0.0], tp / (tp + fp)])
    auroc = float(np.trapezoid(tpr, fpr))
    recall = tpr[1:]
    aupr = float(np.sum(np.diff(np.concatenate([[0.0], recall])) * precision[1:]))
    report = EvalReport(
        thresholds=thresholds,
        fpr=fpr,
        tpr=tpr,
        precision=precision,
        auroc=auroc,
        aupr=aupr,
        n_pos=n_pos,
        n_neg=n_neg,
    )
    for target in fpr_targets:
        report.operating_points[float(target)] = at_fpr(report, target)
    return report


def at_fpr(report: EvalReport, fpr_target: float) -> OperatingPoint:
    """Best realizable point with FPR <= target: max TPR, then max threshold."""
    best = OperatingPoint(
        threshold=float(report.thresholds[0]),
        fpr=float(report.fpr[0]),
        tpr=float(report.tpr[0]),
        precision=float(report.precision[0]),
    )
    for i in range(len(report.thresholds)):
        if report.fpr[i] <= fpr_target and report.tpr[i] > best.tpr:
            best = OperatingPoint(
                threshold=float(report.thresholds[i]),
                fpr=float(report.fpr[i]),
                tpr=float(report.tpr[i]),
                precision=float(report.precision[i]),
            )
    return best


def binary_point(preds: np.ndarray, labels: np.ndarray) -> tuple[float, float, float]:
    """(fpr, tpr, precision) of hard 0/1 predictions, for member scatters."""
    preds = np.asarray(preds).astype(bool)
    labels = np.asarray(labels).astype(bool)
    tp = int((preds & labels).sum())
    fp = int((preds & ~labels).sum())
    n_pos = int(labels.sum())
    n_neg = int(len(labels) - n_pos)
    fpr = fp / n_neg if n_neg else 0.0
    tpr = tp / n_pos if n_pos else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    return fpr, tpr, precision
