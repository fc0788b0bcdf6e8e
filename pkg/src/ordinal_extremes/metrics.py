"""Evaluation suite: confusion, binary scores, IoU, ordinal error, calibration.

Zero-denominator scores are reported as 0 together with an ``undefined`` flag
so reports stay JSON-clean.
"""

import csv
import io
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import DomainError
from .losses import PenaltyMatrix

EXTREME_CLASSES = (3, 4)
DEFAULT_BINS = 10


def confusion(true, pred, n_classes):
    """Counts with rows = true class, columns = predicted class."""
    true = np.asarray(true, dtype=int).ravel()
    pred = np.asarray(pred, dtype=int).ravel()
    if true.shape != pred.shape:
        raise DomainError("true and pred must have equal lengths")
    for arr in (true, pred):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise DomainError(f"class index out of range 0..{n_classes - 1}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return counts


def row_normalized(counts):
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


@dataclass(frozen=True)
class BinaryScores:
    f1: float
    precision: float
    recall: float
    undefined: bool = False


def binary_scores(true, pred) -> BinaryScores:
    """Presence scores after binarising both sides as ``class > 0``."""
    t = np.asarray(true).ravel() > 0
    p = np.asarray(pred).ravel() > 0
    tp = int(np.sum(t & p))
    fp = int(np.sum(~t & p))
    fn = int(np.sum(t & ~p))
    undefined = False
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision, undefined = 0.0, True
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall, undefined = 0.0, True
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1, undefined = 0.0, True
    return BinaryScores(f1, precision, recall, undefined)


def iou(true, pred, n_classes):
    """Per-class IoU and the macro mean over classes seen in true or pred.

    Returns ``(per_class, macro)``.  Classes absent from both sides get 0 in
    ``per_class`` and are skipped by the macro mean.
    """
    counts = confusion(true, pred, n_classes)
    tp = np.diag(counts).astype(float)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    union = tp + fp + fn
    per_class = np.divide(tp, union, out=np.zeros(n_classes), where=union > 0)
    seen = union > 0
    macro = float(per_class[seen].mean()) if seen.any() else 0.0
    return per_class, macro


def extreme_subset(true, pred, classes=EXTREME_CLASSES):
    """Indices where the true or the predicted class is extreme (3 or 4)."""
    t = np.isin(np.asarray(true).ravel(), classes)
    p = np.isin(np.asarray(pred).ravel(), classes)
    return np.flatnonzero(t | p)


def ordinal_error(counts, omega: Optional[PenaltyMatrix] = None):
    """Hard-assignment weighted-kappa ratio on a confusion matrix.

    Observed weighted disagreement ``sum(omega * counts)`` over the
    disagreement expected from the marginals, ``(1/N) sum_ij omega_ij r_i c_j``.
    0 for a diagonal matrix, about 1 for independent predictions; lower is
    better.  When the expected disagreement is zero so is the observed one,
    and 0 is returned.
    """
    counts = np.asarray(counts, dtype=float)
    if omega is None:
        omega = PenaltyMatrix.linear(counts.shape[0])
    w = omega.omega
    n = counts.sum()
    if n <= 0:
        raise DomainError("confusion matrix is empty")
    observed = float(np.sum(w * counts))
    expected = float(counts.sum(axis=1) @ w @ counts.sum(axis=0)) / n
    return observed / expected if expected > 0 else 0.0


@dataclass
class CalibrationBins:
    lo: np.ndarray
    hi: np.ndarray
    count: np.ndarray
    mean_conf: np.ndarray
    emp_freq: np.ndarray

    def rows(self):
        for i in range(len(self.count)):
            yield (float(self.lo[i]), float(self.hi[i]), int(self.count[i]),
                   float(self.mean_conf[i]), float(self.emp_freq[i]))

    def to_dict(self):
        return {
            "bin_lo": self.lo.tolist(), "bin_hi": self.hi.tolist(),
            "count": self.count.tolist(), "mean_conf": self.mean_conf.tolist(),
            "emp_freq": self.emp_freq.tolist(),
        }

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bin_lo", "bin_hi", "count", "mean_conf", "emp_freq"])
        for row in self.rows():
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()


def ece(confidences, correct, n_bins=DEFAULT_BINS):
    """Expected calibration error over equal-width bins on [0, 1].

    Returns ``(ece, bins)``.  Empty bins contribute nothing; their mean
    confidence and frequency are reported as 0.
    """
    conf = np.asarray(confidences, dtype=float).ravel()
    hit = np.asarray(correct, dtype=float).ravel()
    if n_bins < 1:
        raise DomainError("need at least one bin")
    if conf.shape != hit.shape:
        raise DomainError("confidences and outcomes must align")
    if conf.size and (conf.min() < 0 or conf.max() > 1):
        raise DomainError("confidences must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.minimum((conf * n_bins).astype(int), n_bins - 1)
    count = np.bincount(idx, minlength=n_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=n_bins)
    hit_sum = np.bincount(idx, weights=hit, minlength=n_bins)
    nz = count > 0
    mean_conf = np.divide(conf_sum, count, out=np.zeros(n_bins), where=nz)
    emp_freq = np.divide(hit_sum, count, out=np.zeros(n_bins), where=nz)
    n = max(conf.size, 1)
    value = float(np.sum(count / n * np.abs(emp_freq - mean_conf)))
    return value, CalibrationBins(edges[:-1], edges[1:], count, mean_conf, emp_freq)


def classwise_calibration(probs, true, n_bins=DEFAULT_BINS):
    """One-vs-rest ECE and bins for each class column of ``probs``."""
    probs = np.asarray(probs, dtype=float)
    true = np.asarray(true).ravel()
    out = []
    for c in range(probs.shape[1]):
        out.append(ece(np.clip(probs[:, c], 0.0, 1.0), true == c, n_bins))
    return out


def mean_class_distance(true, pred):
    """Mean |pred - true| over misclassified samples (0 if there are none)."""
    true = np.asarray(true).ravel()
    pred = np.asarray(pred).ravel()
    wrong = true != pred
    return float(np.mean(np.abs(pred[wrong] - true[wrong]))) if wrong.any() else 0.0


@dataclass
class EvalReport:
    n: int
    confusion: np.ndarray
    f1_bin: float
    prec_bin: float
    rec_bin: float
    binary_undefined: bool
    iou_per_class: np.ndarray
    iou_macro: float
    iou_extreme: Optional[float]
    ordinal_error: Optional[float]
    extreme_distance: Optional[float]
    ece_per_class: List[float] = field(default_factory=list)
    calibration: List[CalibrationBins] = field(default_factory=list)

    FLAT_KEYS = ("n", "f1_bin", "prec_bin", "rec_bin", "iou_macro", "iou_extreme",
                 "ordinal_error", "extreme_distance", "ece_mean")

    def to_dict(self, with_calibration=True) -> Dict:
        d = {
            "n": self.n,
            "confusion": self.confusion.tolist(),
            "f1_bin": self.f1_bin,
            "prec_bin": self.prec_bin,
            "rec_bin": self.rec_bin,
            "binary_undefined": self.binary_undefined,
            "iou_per_class": self.iou_per_class.tolist(),
            "iou_macro": self.iou_macro,
            "iou_extreme": self.iou_extreme,
            "ordinal_error": self.ordinal_error,
            "extreme_distance": self.extreme_distance,
            "ece_per_class": list(self.ece_per_class),
            "ece_mean": self.ece_mean,
        }
        if with_calibration:
            d["calibration"] = [b.to_dict() for b in self.calibration]
        return d

    @property
    def ece_mean(self):
        return float(np.mean(self.ece_per_class)) if self.ece_per_class else None

    def flat(self, prefix=""):
        d = self.to_dict(with_calibration=False)
        return {prefix + k: d[k] for k in self.FLAT_KEYS}


def evaluate(true, pred, probs=None, n_classes=5, n_bins=DEFAULT_BINS,
             omega: Optional[PenaltyMatrix] = None) -> EvalReport:
    """Assemble the full report.

    ``iou_extreme`` is the macro IoU on :func:`extreme_subset`; it and
    ``extreme_distance`` are ``None`` when that subset is empty.
    ``ordinal_error`` is ``None`` for an empty input.
    """
    true = np.asarray(true, dtype=int).ravel()
    pred = np.asarray(pred, dtype=int).ravel()
    counts = confusion(true, pred, n_classes)
    if true.size:
        scores = binary_scores(true, pred)
        per_class, macro = iou(true, pred, n_classes)
        err = ordinal_error(counts, omega)
    else:
        scores = BinaryScores(0.0, 0.0, 0.0, True)
        per_class, macro, err = np.zeros(n_classes), 0.0, None
    sub = extreme_subset(true, pred)
    if sub.size:
        iou_ext = iou(true[sub], pred[sub], n_classes)[1]
        dist_ext = mean_class_distance(true[sub], pred[sub])
    else:
        iou_ext = dist_ext = None
    ece_vals, bins = [], []
    if probs is not None and true.size:
        for value, b in classwise_calibration(probs, true, n_bins):
            ece_vals.append(value)
            bins.append(b)
    return EvalReport(
        n=int(true.size), confusion=counts, f1_bin=scores.f1, prec_bin=scores.precision,
        rec_bin=scores.recall, binary_undefined=scores.undefined, iou_per_class=per_class,
        iou_macro=macro, iou_extreme=iou_ext, ordinal_error=err, extreme_distance=dist_ext,
        ece_per_class=ece_vals, calibration=bins,
    )


def group_reports(true, pred, probs, groups, n_classes=5, n_bins=DEFAULT_BINS):
    """Per-group reports keyed by the opaque group label, in sorted key order."""
    groups = np.asarray(groups).ravel()
    out = {}
    for g in sorted(set(groups.tolist())):
        sel = groups == g
        out[str(g)] = evaluate(
            np.asarray(true)[sel], np.asarray(pred)[sel],
            None if probs is None else np.asarray(probs)[sel], n_classes, n_bins,
        )
    return out


def group_mean(reports: Dict[str, EvalReport]):
    """Plain mean of each flat metric across groups, ignoring absent values."""
    keys = [k for k in EvalReport.FLAT_KEYS if k != "n"]
    out = {}
    for k in keys:
        vals = [r.flat()[k] for r in reports.values()]
        vals = [v for v in vals if v is not None]
        out[k] = float(np.mean(vals)) if vals else None
    return out
