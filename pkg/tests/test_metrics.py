import math
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn import metrics as skm

from uctecg.errors import ConfigError
from uctecg.metrics import (
    ThresholdPolicy,
    UncertaintyConfusion,
    apply_threshold,
    certainty_flags,
    check_published_row,
    classification_report,
    confusion_from_flags,
    entropy_density_export,
    load_published_rows,
    per_class_uacc,
    rounded_percentages,
    sweep_threshold,
    uncertainty_metrics,
)
from uctecg.uq import UqBatch, UqPrediction

from conftest import PUBLISHED_COUNTS


def _batch(norm_entropy, predicted, labels, num_classes=2):
    """UqBatch with the given normalized entropies (probabilities are placeholders)."""
    n = len(predicted)
    probs = np.eye(num_classes)[np.asarray(predicted)]
    b = UqBatch.from_probs(probs, labels)
    b.entropy_normalized = np.asarray(norm_entropy, dtype=np.float64)
    b.entropy = b.entropy_normalized * math.log(num_classes)
    assert len(b) == n
    return b


# ---------------------------------------------------------------- classification

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 5), st.integers(1, 80))
def test_classification_matches_sklearn(seed, num_classes, n):
    g = np.random.default_rng(seed)
    y = g.integers(0, num_classes, n)
    p = np.where(g.random(n) < 0.7, y, g.integers(0, num_classes, n))
    rep = classification_report(p, y, num_classes)
    labels = list(range(num_classes))
    assert rep.accuracy == pytest.approx(skm.accuracy_score(y, p), abs=1e-12)
    for ours, fn in ((rep.precision, skm.precision_score), (rep.recall, skm.recall_score),
                     (rep.f1, skm.f1_score)):
        assert ours == pytest.approx(fn(y, p, labels=labels, average="weighted", zero_division=0), abs=1e-12)
    np.testing.assert_array_equal(rep.confusion_matrix, skm.confusion_matrix(y, p, labels=labels))


def test_classification_examples():
    y = np.array([0, 1, 2, 1])
    perfect = classification_report(y, y, 3)
    assert perfect.accuracy == 1.0 and perfect.f1 == 1.0
    assert classification_report([1], [0], 2).accuracy == 0.0
    with pytest.raises(ValueError):
        classification_report([], [], 2)
    with pytest.raises(ValueError):
        classification_report([0, 3], [0, 1], 3)


def test_ptb_sized_confusion():
    # 819 normal and 2067 abnormal correct out of 2911 test beats
    y = np.r_[np.zeros(819 + 9, int), np.ones(2067 + 16, int)]
    p = np.r_[np.zeros(819, int), np.ones(9, int), np.ones(2067, int), np.zeros(16, int)]
    rep = classification_report(p, y, 2)
    assert rep.confusion_matrix.tolist() == [[819, 9], [16, 2067]]
    assert rep.accuracy == pytest.approx(2886 / 2911)
    assert rep.accuracy > 0.99
    assert rep.recall == pytest.approx(rep.accuracy, abs=1e-12)


# ---------------------------------------------------------------- uncertainty metrics

def test_table_rows_reproduce():
    m = rounded_percentages(UncertaintyConfusion(cc=17249, cu=2719, ic=926, iu=998))
    assert m == {"uacc": Decimal("83.35"), "usen": Decimal("51.87"), "uspe": Decimal("86.38"),
                 "upre": Decimal("26.85")}
    m = rounded_percentages(UncertaintyConfusion(cc=2875, cu=9, ic=16, iu=11))
    assert m == {"uacc": Decimal("99.14"), "usen": Decimal("40.74"), "uspe": Decimal("99.69"),
                 "upre": Decimal("55.00")}
    f = uncertainty_metrics(UncertaintyConfusion(cc=2875, cu=9, ic=16, iu=11))
    assert f.upre == pytest.approx(0.55, abs=1e-15)


def test_perfect_certain_leaves_ratios_undefined():
    m = uncertainty_metrics(UncertaintyConfusion(cc=40, cu=0, ic=0, iu=0))
    assert m.uacc == 1.0 and m.uspe == 1.0
    assert m.usen is None and m.upre is None
    with pytest.raises(ValueError):
        uncertainty_metrics(UncertaintyConfusion(0, 0, 0, 0))
    with pytest.raises(ValueError):
        UncertaintyConfusion(-1, 0, 0, 0)


@settings(max_examples=200, deadline=None)
@given(*[st.integers(0, 10_000)] * 4)
def test_metric_bounds_and_iu_monotonicity(cc, cu, ic, iu):
    conf = UncertaintyConfusion(cc, cu, ic, iu)
    if conf.total == 0:
        return
    m = uncertainty_metrics(conf)
    for v in m.to_dict().values():
        assert v is None or 0.0 <= v <= 1.0
    more = UncertaintyConfusion(cc, cu, ic, iu + 1)
    assert more.cc + more.iu >= conf.cc + conf.iu


def test_published_rows_all_reproduce():
    rows = load_published_rows(PUBLISHED_COUNTS)
    assert len(rows) == 24
    totals = {"MIT-BIH": 21_892, "PTB": 2_911}
    for row in rows:
        check = check_published_row(row, totals[row.dataset])
        assert check.ok, (row.model, row.method, row.dataset, check.recomputed, row.reported)
    # without the column swap the table does not reproduce
    assert not all(check_published_row(r, swap_cu_iu=False).passed for r in rows)


# ---------------------------------------------------------------- thresholding

def test_threshold_boundaries():
    b = _batch([0.1, 0.5, 0.9, 0.3], [0, 1, 1, 0], [0, 0, 1, 1])
    conf, t = apply_threshold(b, policy=ThresholdPolicy(value=1.0))
    assert t == 1.0 and conf.cu == conf.iu == 0
    conf, _ = apply_threshold(b, policy=ThresholdPolicy(value=0.0))
    assert conf.cc == conf.ic == 0
    with pytest.raises(ValueError):
        certainty_flags([0.1], 1.5)
    with pytest.raises(ConfigError):
        ThresholdPolicy(value=-0.1)


def test_four_prediction_enumeration():
    # correct/certain at threshold 0.4: (T,T) (T,F) (F,T) (F,F)
    norm = [0.2, 0.7, 0.4, 0.41]
    predicted = [1, 0, 1, 0]
    labels = [1, 0, 0, 1]
    conf, _ = apply_threshold(_batch(norm, predicted, labels), policy=ThresholdPolicy(value=0.4))
    assert conf == UncertaintyConfusion(cc=1, cu=1, ic=1, iu=1)
    # list of UqPrediction works too
    preds = [UqPrediction(np.eye(2)[p], h * math.log(2), h, p) for h, p in zip(norm, predicted)]
    assert apply_threshold(preds, labels, ThresholdPolicy(value=0.4))[0] == conf


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 1), st.floats(0, 1))
def test_threshold_monotonicity(seed, t1, t2):
    g = np.random.default_rng(seed)
    b = _batch(g.random(30), g.integers(0, 2, 30), g.integers(0, 2, 30))
    lo, hi = sorted((t1, t2))
    a, _ = apply_threshold(b, policy=ThresholdPolicy(value=lo))
    c, _ = apply_threshold(b, policy=ThresholdPolicy(value=hi))
    assert c.cc + c.ic >= a.cc + a.ic


def test_sweep_picks_lowest_best_threshold_and_holds_out_validation():
    norm = np.array([0.05, 0.1, 0.6, 0.7])
    correct = np.array([True, True, False, False])
    t = sweep_threshold(norm, correct, grid=101)
    assert t == pytest.approx(0.1)
    g = np.random.default_rng(0)
    n = 200
    wrong = g.random(n) < 0.3
    h = np.where(wrong, g.uniform(0.5, 1.0, n), g.uniform(0.0, 0.4, n))
    b = _batch(h, np.zeros(n, int), wrong.astype(int))
    conf, t = apply_threshold(b, policy=ThresholdPolicy("maximize-uacc-on-validation"))
    assert conf.total == n - 40
    assert 0.4 <= t < 0.5 + 1e-12
    assert uncertainty_metrics(conf).uacc == 1.0


# ---------------------------------------------------------------- per-class UAcc

def test_per_class_uacc_weighted_identity():
    g = np.random.default_rng(3)
    n = 300
    labels = g.integers(0, 5, n)
    b = _batch(g.random(n), np.where(g.random(n) < 0.7, labels, g.integers(0, 5, n)), labels, 5)
    per = per_class_uacc(b, threshold=0.5)
    conf, _ = apply_threshold(b, policy=ThresholdPolicy(value=0.5))
    support = np.bincount(labels, minlength=5)
    assert (support * per).sum() / n == pytest.approx(uncertainty_metrics(conf).uacc, abs=1e-12)


def test_per_class_uacc_absent_and_single_class():
    b = _batch([0.1, 0.9, 0.2], [0, 0, 1], [0, 0, 0], 3)
    per = per_class_uacc(b, threshold=0.5)
    conf, _ = apply_threshold(b, policy=ThresholdPolicy(value=0.5))
    assert per[0] == pytest.approx(uncertainty_metrics(conf).uacc)
    assert np.isnan(per[1]) and np.isnan(per[2])


# ---------------------------------------------------------------- densities

def test_density_all_zero_entropies():
    b = _batch(np.zeros(10), np.zeros(10, int), np.zeros(10, int))
    d = entropy_density_export(b, bins=20)
    assert d.density_correct[0] == 20.0 and not d.density_correct[1:].any()
    assert d.incorrect_empty and not d.density_incorrect.any() and not d.correct_empty


def test_density_of_uniform_entropies_is_flat():
    n, bins = 20_000, 20
    g = np.random.default_rng(1)
    b = _batch(g.random(n), np.zeros(n, int), np.zeros(n, int))
    d = entropy_density_export(b, bins=bins)
    p = 1 / bins
    sigma = math.sqrt(n * p * (1 - p)) * bins / n
    assert np.all(np.abs(d.density_correct - 1.0) <= 3 * sigma)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 50))
def test_density_integrates_to_one(seed, bins):
    g = np.random.default_rng(seed)
    n = 60
    b = _batch(g.random(n), g.integers(0, 2, n), g.integers(0, 2, n))
    d = entropy_density_export(b, bins=bins)
    for col, empty in ((d.density_correct, d.correct_empty), (d.density_incorrect, d.incorrect_empty)):
        if not empty:
            assert abs(col.sum() * d.bin_width - 1.0) <= 1e-9


def test_density_csv(tmp_path):
    b = _batch([0.1, 0.9], [0, 1], [0, 0])
    path = tmp_path / "d.csv"
    entropy_density_export(b, bins=4).write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "bin_center,density_correct,density_incorrect" and len(lines) == 5
    assert lines[1] == "0.125,4.0,0.0"


def test_confusion_from_flags():
    conf = confusion_from_flags([True, True, False, False, True], [True, False, True, False, True])
    assert conf.to_dict() == {"cc": 2, "cu": 1, "ic": 1, "iu": 1}
