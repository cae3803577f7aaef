"""Per-pixel detection metrics and trial aggregation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, UndefinedMetricError

METRIC_NAMES = ("accuracy", "auroc", "auprc", "f1")


def _pair(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel().astype(bool)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction length {pred.size} != truth length {truth.size}")
    if pred.size == 0:
        raise ShapeError("metrics need at least one pixel")
    return pred, truth


def accuracy(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(pred.astype(bool) == truth))


def f1(pred, truth) -> float:
    """``2TP / (2TP + FP + FN)``; 0 when there are no positives at all."""
    pred, truth = _pair(pred, truth)
    pred = pred.astype(bool)
    tp = np.sum(pred & truth)
    fp = np.sum(pred & ~truth)
    fn = np.sum(~pred & truth)
    denom = 2 * tp + fp + fn
    return float(2 * tp / denom) if denom else 0.0


def _curve_counts(scores, truth):
    """Cumulative TP/FP at each distinct threshold, highest score first."""
    order = np.argsort(-scores, kind="mergesort")
    s, t = scores[order], truth[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(t)[last]
    fp = np.cumsum(~t)[last]
    return tp, fp


def auroc(scores, truth) -> float:
    """Area under the ROC curve by trapezoidal sweep over distinct thresholds.

    Ties contribute one half, so the value equals the normalised
    Mann-Whitney U statistic.
    """
    scores, truth = _pair(scores, truth)
    scores = scores.astype(float)
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both positive and negative pixels")
    tp, fp = _curve_counts(scores, truth)
    tpr = np.r_[0, tp] / n_pos
    fpr = np.r_[0, fp] / n_neg
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))


def auprc(scores, truth) -> float:
    """Area under the precision-recall curve, rectangle rule on recall steps.

    At each distinct threshold the precision is replaced by its envelope
    (the best precision achieved at that recall or beyond).
    """
    scores, truth = _pair(scores, truth)
    scores = scores.astype(float)
    n_pos = int(truth.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC needs at least one positive pixel")
    tp, fp = _curve_counts(scores, truth)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * envelope))


@dataclass
class MetricsReport:
    mean: dict
    std: dict
    n_trials: int
    std_convention: str = "population"

    def to_dict(self) -> dict:
        return {
            "mean": dict(self.mean),
            "std": dict(self.std),
            "n_trials": self.n_trials,
            "std_convention": self.std_convention,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(dict(d["mean"]), dict(d["std"]), int(d["n_trials"]), d.get("std_convention", "population"))


def evaluate(pred, scores, truth) -> dict:
    """All four metrics for one trial."""
    return {
        "accuracy": accuracy(pred, truth),
        "auroc": auroc(scores, truth),
        "auprc": auprc(scores, truth),
        "f1": f1(pred, truth),
    }


def aggregate(trials) -> MetricsReport:
    """Mean and population standard deviation of each metric over trials."""
    trials = list(trials)
    if not trials:
        raise ConfigError("cannot aggregate zero trials")
    mean, std = {}, {}
    for name in METRIC_NAMES:
        vals = np.array([t[name] for t in trials], dtype=float)
        mean[name] = float(vals.mean())
        std[name] = float(vals.std(ddof=0))
    return MetricsReport(mean, std, len(trials))
