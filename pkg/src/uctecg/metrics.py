"""Classification metrics and uncertainty-aware evaluation.

A prediction is *certain* when its normalized entropy is at most the
threshold. Crossing correctness with certainty yields the counts CC, CU, IC
and IU, from which

* UAcc = (CC + IU) / total
* USen = IU / (IC + IU)
* USpe = CC / (CC + CU)
* UPre = IU / (CU + IU)

Ratios with a zero denominator are undefined and reported as ``None``
(``NaN`` inside per-class arrays), never as 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import numpy as np

from .errors import ConfigError

# --------------------------------------------------------------------------
# Classification
# --------------------------------------------------------------------------


@dataclass
class ClassificationReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: dict
    confusion_matrix: np.ndarray

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_class": {k: [float(v) for v in vals] for k, vals in self.per_class.items()},
            "confusion_matrix": self.confusion_matrix.tolist(),
        }


def confusion_matrix(predictions, labels, num_classes):
    """``cm[true, predicted]`` counts."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels), np.asarray(predictions)), 1)
    return cm


def _safe_div(num, den):
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def classification_report(predictions, labels, num_classes) -> ClassificationReport:
    """Accuracy plus support-weighted precision, recall and F1.

    A class that is never predicted gets precision 0 (likewise recall/F1 for
    zero denominators), the usual convention for aggregate reporting.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels must have the same length")
    if labels.size == 0:
        raise ValueError("cannot score an empty prediction set")
    if labels.min() < 0 or labels.max() >= num_classes or predictions.min() < 0 or predictions.max() >= num_classes:
        raise ValueError(f"classes must lie in [0, {num_classes})")
    cm = confusion_matrix(predictions, labels, num_classes)
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    precision = _safe_div(tp, predicted)
    recall = _safe_div(tp, support)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    weights = support / support.sum()
    return ClassificationReport(
        accuracy=float(tp.sum() / labels.size),
        precision=float(weights @ precision),
        recall=float(weights @ recall),
        f1=float(weights @ f1),
        per_class={"precision": precision, "recall": recall, "f1": f1, "support": support.astype(np.int64)},
        confusion_matrix=cm,
    )


# --------------------------------------------------------------------------
# Uncertainty confusion matrix
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class UncertaintyConfusion:
    cc: int
    cu: int
    ic: int
    iu: int

    def __post_init__(self):
        if min(self.cc, self.cu, self.ic, self.iu) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self):
        return self.cc + self.cu + self.ic + self.iu

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class UncertaintyMetrics:
    uacc: float | None
    usen: float | None
    uspe: float | None
    upre: float | None

    def to_dict(self):
        return asdict(self)


def _ratio(num, den):
    return None if den == 0 else num / den


def uncertainty_metrics(conf: UncertaintyConfusion) -> UncertaintyMetrics:
    if conf.total == 0:
        raise ValueError("uncertainty metrics need at least one prediction")
    return UncertaintyMetrics(
        uacc=(conf.cc + conf.iu) / conf.total,
        usen=_ratio(conf.iu, conf.ic + conf.iu),
        uspe=_ratio(conf.cc, conf.cc + conf.cu),
        upre=_ratio(conf.iu, conf.cu + conf.iu),
    )


def _exact_percent(num, den, decimals=2):
    if den == 0:
        return None
    q = Fraction(100 * num, den)
    value = Decimal(q.numerator) / Decimal(q.denominator)
    return value.quantize(Decimal(1).scaleb(-decimals), rounding=ROUND_HALF_UP)


def rounded_percentages(conf: UncertaintyConfusion, decimals=2) -> dict:
    """UAcc/USen/USpe/UPre in percent, computed exactly and rounded half-up."""
    return {
        "uacc": _exact_percent(conf.cc + conf.iu, conf.total, decimals),
        "usen": _exact_percent(conf.iu, conf.ic + conf.iu, decimals),
        "uspe": _exact_percent(conf.cc, conf.cc + conf.cu, decimals),
        "upre": _exact_percent(conf.iu, conf.cu + conf.iu, decimals),
    }


def confusion_from_flags(correct, certain) -> UncertaintyConfusion:
    correct = np.asarray(correct, dtype=bool)
    certain = np.asarray(certain, dtype=bool)
    return UncertaintyConfusion(
        cc=int(np.sum(correct & certain)),
        cu=int(np.sum(correct & ~certain)),
        ic=int(np.sum(~correct & certain)),
        iu=int(np.sum(~correct & ~certain)),
    )


# --------------------------------------------------------------------------
# Thresholding
# --------------------------------------------------------------------------

THRESHOLD_MODES = ("fixed", "maximize-uacc-on-validation")


@dataclass(frozen=True)
class ThresholdPolicy:
    mode: str = "fixed"
    value: float = 0.5
    validation_fraction: float = 0.2
    grid: int = 101
    seed: int = 0

    def __post_init__(self):
        if self.mode not in THRESHOLD_MODES:
            raise ConfigError(f"threshold mode must be one of {THRESHOLD_MODES}")
        if not 0.0 <= self.value <= 1.0:
            raise ConfigError(f"threshold must lie in [0, 1], got {self.value}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if self.grid < 2:
            raise ConfigError("grid needs at least 2 points")

    def to_dict(self):
        return asdict(self)


def _columns(preds, labels):
    """(normalized entropy, correct mask, labels) from a UqBatch or a list of UqPrediction."""
    if labels is None:
        labels = preds.labels
    if hasattr(preds, "predicted"):
        norm, predicted = preds.entropy_normalized, preds.predicted
    else:
        preds = list(preds)
        norm = [p.entropy_normalized for p in preds]
        predicted = [p.predicted_class for p in preds]
    norm = np.asarray(norm, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if norm.shape != labels.shape:
        raise ValueError("one label per prediction required")
    return norm, predicted == labels, labels


def certainty_flags(entropy_normalized, threshold):
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return np.asarray(entropy_normalized) <= threshold


def sweep_threshold(entropy_normalized, correct, grid=101):
    """Grid threshold on [0, 1] maximizing UAcc; ties go to the lowest threshold."""
    best_t, best = 0.0, -1.0
    for t in np.linspace(0.0, 1.0, grid):
        certain = entropy_normalized <= t
        uacc = np.mean(correct & certain) + np.mean(~correct & ~certain)
        if uacc > best:
            best_t, best = float(t), uacc
    return best_t


def apply_threshold(preds, labels=None, policy: ThresholdPolicy = ThresholdPolicy()):
    """Label predictions certain/uncertain and count the four outcomes.

    In sweep mode a seeded random ``validation_fraction`` of the predictions
    picks the threshold and the counts cover only the remaining predictions.
    Returns ``(UncertaintyConfusion, threshold)``.
    """
    norm, correct, _ = _columns(preds, labels)
    if norm.size == 0:
        raise ValueError("no predictions to threshold")
    if policy.mode == "fixed":
        return confusion_from_flags(correct, certainty_flags(norm, policy.value)), policy.value
    n = norm.size
    if n < 2:
        raise ValueError("threshold sweep needs at least two predictions")
    n_val = min(max(math.ceil(policy.validation_fraction * n), 1), n - 1)
    perm = np.random.default_rng(policy.seed).permutation(n)
    val, rest = perm[:n_val], perm[n_val:]
    threshold = sweep_threshold(norm[val], correct[val], policy.grid)
    return confusion_from_flags(correct[rest], certainty_flags(norm[rest], threshold)), threshold


def per_class_uacc(preds, labels=None, threshold=0.5, num_classes=None):
    """UAcc within each true-class slice; NaN where a class has no records."""
    norm, correct, labels = _columns(preds, labels)
    if num_classes is None:
        num_classes = preds.num_classes
    certain = certainty_flags(norm, threshold)
    good = (correct & certain) | (~correct & ~certain)
    out = np.full(num_classes, np.nan)
    for c in range(num_classes):
        members = labels == c
        if members.any():
            out[c] = good[members].mean()
    return out


# --------------------------------------------------------------------------
# Entropy densities
# --------------------------------------------------------------------------


@dataclass
class DensityTable:
    bin_centers: np.ndarray
    density_correct: np.ndarray
    density_incorrect: np.ndarray
    correct_empty: bool
    incorrect_empty: bool

    @property
    def bin_width(self):
        return 1.0 / len(self.bin_centers)

    def write_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("bin_center,density_correct,density_incorrect\n")
            for c, a, b in zip(self.bin_centers, self.density_correct, self.density_incorrect):
                fh.write(f"{float(c)!r},{float(a)!r},{float(b)!r}\n")


def _density(values, bins):
    counts, _ = np.histogram(values, bins=bins, range=(0.0, 1.0))
    if counts.sum() == 0:
        return np.zeros(bins), True
    return counts * bins / counts.sum(), False


def entropy_density_export(preds, labels=None, bins=20) -> DensityTable:
    """Histogram densities of normalized entropy for correct and incorrect predictions.

    Each non-empty group's density integrates to 1 over [0, 1]; an empty
    group yields an all-zero column and sets its ``*_empty`` flag.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    norm, correct, _ = _columns(preds, labels)
    norm = np.clip(norm, 0.0, 1.0)
    d_correct, c_empty = _density(norm[correct], bins)
    d_incorrect, i_empty = _density(norm[~correct], bins)
    centers = (np.arange(bins) + 0.5) / bins
    return DensityTable(centers, d_correct, d_incorrect, c_empty, i_empty)


# --------------------------------------------------------------------------
# Recomputing published uncertainty tables
# --------------------------------------------------------------------------

METRIC_NAMES = ("uacc", "usen", "uspe", "upre")


@dataclass
class PublishedRow:
    dataset: str
    model: str
    method: str
    cu: int
    ic: int
    iu: int
    cc: int
    reported: dict


@dataclass
class RowCheck:
    row: PublishedRow
    recomputed: dict
    passed: bool
    total_ok: bool

    @property
    def ok(self):
        return self.passed and self.total_ok


def load_published_rows(path) -> list[PublishedRow]:
    """Read rows with columns dataset, model, method, cu, ic, iu, cc, uacc, usen, uspe, upre."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(PublishedRow(
                dataset=rec["dataset"], model=rec["model"], method=rec["method"],
                cu=int(rec["cu"]), ic=int(rec["ic"]), iu=int(rec["iu"]), cc=int(rec["cc"]),
                reported={k: Decimal(rec[k]).quantize(Decimal("0.01")) for k in METRIC_NAMES},
            ))
    return rows


def check_published_row(row: PublishedRow, expected_total=None, swap_cu_iu=True) -> RowCheck:
    """Recompute the four metrics from a row's counts and compare at two decimals.

    With ``swap_cu_iu`` the column labelled CU is read as the IU count and
    vice versa; published tables in this line of work print them transposed.
    """
    iu, cu = (row.cu, row.iu) if swap_cu_iu else (row.iu, row.cu)
    conf = UncertaintyConfusion(cc=row.cc, cu=cu, ic=row.ic, iu=iu)
    recomputed = rounded_percentages(conf)
    passed = all(recomputed[k] == row.reported[k] for k in METRIC_NAMES)
    total_ok = expected_total is None or conf.total == expected_total
    return RowCheck(row, recomputed, passed, total_ok)
