"""End-to-end learning checks on synthetic heartbeats (no public corpus needed)."""

import numpy as np
import pytest

from uctecg.data import MITBIH, PTB, SplitSpec, split
from uctecg.metrics import ThresholdPolicy, apply_threshold, classification_report, uncertainty_metrics
from uctecg.models import ArchitectureSpec, build_model
from uctecg.nn import TrainConfig, train
from uctecg.synthetic import make_beats
from uctecg.uq import UqConfig, batch_uq, deterministic_probs


@pytest.fixture(scope="module")
def ptb_split():
    beats = make_beats(1000, PTB, seed=0, ambiguity=0.55, class_probs=[0.28, 0.72])
    return split(beats, SplitSpec("stratified-random", 0.8, 0))


@pytest.fixture(scope="module")
def cnn_members(ptb_split):
    train_set, _ = ptb_split
    members = []
    for seed in (1, 2, 3):
        model = build_model(ArchitectureSpec("cnn1d", 2), seed)
        train(model, train_set, TrainConfig(epochs=8, seed=seed))
        members.append(model)
    return members


def test_cnn_learns_synthetic_beats(ptb_split, cnn_members):
    _, test_set = ptb_split
    majority = test_set.class_counts().max() / len(test_set)
    for model in cnn_members:
        pred = deterministic_probs(model, test_set.signals).argmax(axis=1)
        acc = classification_report(pred, test_set.labels, 2).accuracy
        assert acc >= 0.9 and acc > majority + 0.1


@pytest.mark.parametrize("method", ["mcd", "ensemble", "emcd"])
def test_wrong_predictions_carry_more_entropy(ptb_split, cnn_members, method):
    _, test_set = ptb_split
    batch = batch_uq(cnn_members, test_set, UqConfig(method, T=10, N=3, base_seed=1))
    correct = batch.predicted == test_set.labels
    assert 0 < correct.sum() < len(correct)
    assert batch.entropy_normalized[~correct].mean() > batch.entropy_normalized[correct].mean()
    conf, _ = apply_threshold(batch, policy=ThresholdPolicy("maximize-uacc-on-validation"))
    assert uncertainty_metrics(conf).uacc > 0.5


@pytest.mark.slow
def test_uctecg_learns_five_class_beats():
    beats = make_beats(600, MITBIH, seed=5, ambiguity=0.3)
    train_set, test_set = split(beats, SplitSpec("stratified-random", 0.8, 0))
    model = build_model(ArchitectureSpec("uctecg", 5), 1)
    result = train(model, train_set, TrainConfig(epochs=10, batch_size=32, seed=1))
    assert result.loss_curve[-1] < 0.5 * result.loss_curve[0]
    pred = deterministic_probs(model, test_set.signals).argmax(axis=1)
    assert np.mean(pred == test_set.labels) >= 0.85
