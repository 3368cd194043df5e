import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uctecg.data import PTB, RecordSet
from uctecg.errors import ConfigError
from uctecg.models import ArchitectureSpec, build_model, set_dropout_rate
from uctecg.nn import Context, DropoutMode, Linear, Sequential, Softmax
from uctecg.uq import (
    DegenerateDropoutWarning,
    UqBatch,
    UqConfig,
    batch_uq,
    deterministic_probs,
    emcd_predict,
    ensemble_predict,
    mc_samples,
    mcd_predict,
    order_free_mean,
    pass_generators,
    predictive_entropy,
    write_predictions,
)


def _model(seed=0, kind="cnn1d", c=2, rate=0.2):
    return build_model(ArchitectureSpec(kind, c, dropout_rate=rate), seed=seed)


def _x(n=3, seed=0):
    return np.random.default_rng(seed).standard_normal((n, 187))


def test_entropy_examples():
    assert predictive_entropy([0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)
    assert predictive_entropy([1, 0, 0, 0, 0]) == 0.0
    assert predictive_entropy([0.9, 0.1]) == pytest.approx(0.325083, abs=5e-7)
    assert predictive_entropy(np.full(5, 0.2)) == pytest.approx(math.log(5), abs=1e-12)
    for bad in ([0.6, 0.6], [1.2, -0.2], [0.5, 0.49]):
        with pytest.raises(ValueError):
            predictive_entropy(bad)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=6).filter(lambda v: sum(v) > 1e-3))
def test_entropy_bounds(values):
    p = np.array(values) / sum(values)
    h = predictive_entropy(p)
    assert -1e-15 <= h <= math.log(len(p)) + 1e-12


def test_mcd_mean_equals_average_of_captured_passes():
    model = _model()
    x = _x()
    captured = [model.forward(x, Context(DropoutMode.MC, row_rngs=pass_generators(7, range(3), 0, t)))
                for t in range(3)]
    got = mcd_predict(model, x, T=3, seed=7)
    expected = (captured[0] + captured[1] + captured[2]) / 3
    np.testing.assert_allclose(got.mean_probs, expected, atol=1e-12, rtol=0)
    np.testing.assert_allclose(got.entropy, predictive_entropy(expected), atol=1e-12)


def test_mcd_single_pass_and_no_dropout_reductions():
    model = _model()
    x = _x()
    one = mcd_predict(model, x, T=1, seed=2)
    np.testing.assert_array_equal(one.mean_probs, mc_samples(model, x, 1, 2)[0])
    quiet = _model(rate=0.0)
    with pytest.warns(DegenerateDropoutWarning):
        pred = mcd_predict(quiet, x, T=4)
    np.testing.assert_allclose(pred.mean_probs, deterministic_probs(quiet, x), atol=1e-12, rtol=0)


def test_single_record_returns_prediction_object():
    pred = mcd_predict(_model(), _x()[0], T=2)
    assert pred.mean_probs.shape == (2,)
    assert isinstance(pred.predicted_class, int)
    assert pred.entropy_normalized == pytest.approx(pred.entropy / math.log(2))


def test_ensemble_reductions():
    a = _model(1)
    x = _x()
    np.testing.assert_allclose(ensemble_predict([a], x).mean_probs, deterministic_probs(a, x), atol=1e-12)
    np.testing.assert_allclose(ensemble_predict([a, a, a], x).mean_probs, deterministic_probs(a, x), atol=1e-12)


def test_ensemble_maximal_disagreement():
    def fixed(logits):
        layer = Linear(1, 2)
        layer.params["W"][:] = 0.0
        layer.params["b"][:] = logits
        return Sequential([layer, Softmax()])
    x = np.zeros((1, 1))
    pred = ensemble_predict([fixed([800.0, 0.0]), fixed([0.0, 800.0])], x[0])
    np.testing.assert_allclose(pred.mean_probs, [0.5, 0.5], atol=1e-12)
    assert pred.entropy == pytest.approx(math.log(2), abs=1e-12)


def test_ensemble_class_count_mismatch():
    with pytest.raises(ValueError):
        ensemble_predict([_model(c=2), _model(c=5)], _x())
    with pytest.raises(ConfigError):
        ensemble_predict([], _x())


def test_emcd_grand_mean_of_captured_passes():
    models = [_model(1), _model(2)]
    x = _x()
    captured = [m.forward(x, Context(DropoutMode.MC, row_rngs=pass_generators(3, range(3), i, t)))
                for i, m in enumerate(models) for t in range(2)]
    got = emcd_predict(models, x, T=2, seed=3)
    np.testing.assert_allclose(got.mean_probs, sum(captured) / 4, atol=1e-12, rtol=0)


def test_emcd_reductions():
    a, b = _model(1), _model(2)
    x = _x()
    np.testing.assert_allclose(emcd_predict([a], x, 4, seed=9).mean_probs,
                               mcd_predict(a, x, 4, seed=9).mean_probs, atol=1e-12, rtol=0)
    qa, qb = _model(1, rate=0.0), _model(2, rate=0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDropoutWarning)
        np.testing.assert_allclose(emcd_predict([qa, qb], x, 1).mean_probs,
                                   ensemble_predict([qa, qb], x).mean_probs, atol=1e-12, rtol=0)
    assert b is not a


def test_permutation_invariance_is_exact():
    models = [_model(s) for s in (1, 2, 3)]
    x = _x()
    forward = emcd_predict(models, x, 3, seed=4, member_ids=[0, 1, 2])
    reverse = emcd_predict(models[::-1], x, 3, seed=4, member_ids=[2, 1, 0])
    np.testing.assert_array_equal(forward.mean_probs, reverse.mean_probs)
    np.testing.assert_array_equal(ensemble_predict(models, x).mean_probs,
                                  ensemble_predict(models[::-1], x).mean_probs)
    stack = np.random.default_rng(0).dirichlet(np.ones(4), size=(7, 5))
    perm = np.random.default_rng(1).permutation(7)
    np.testing.assert_array_equal(order_free_mean(stack), order_free_mean(stack[perm]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 8), st.integers(2, 6))
def test_entropy_of_mean_dominates_mean_entropy(seed, members, classes):
    p = np.random.default_rng(seed).dirichlet(np.ones(classes) * 0.5, size=members)
    assert predictive_entropy(p.mean(axis=0)) >= predictive_entropy(p).mean() - 1e-12


def test_results_do_not_depend_on_batching():
    model = _model()
    x = _x(6)
    whole = mcd_predict(model, x, 3, seed=5, record_ids=np.arange(6))
    part = mcd_predict(model, x[3:], 3, seed=5, record_ids=np.arange(3, 6))
    np.testing.assert_allclose(whole.mean_probs[3:], part.mean_probs, atol=1e-12, rtol=0)


def _records(n):
    g = np.random.default_rng(n)
    return RecordSet(g.standard_normal((n, 187)), g.integers(0, 2, n), PTB)


@pytest.mark.parametrize("method", ["mcd", "ensemble", "emcd"])
def test_batch_uq_is_ordered_deterministic_and_chunk_free(method):
    models = [_model(1), _model(2)]
    recs = _records(7)
    cfg = UqConfig(method, T=2, N=2, base_seed=11)
    a = batch_uq(models, recs, cfg, batch_size=3)
    b = batch_uq(models, recs, cfg, batch_size=256)
    assert len(a) == 7
    np.testing.assert_allclose(a.mean_probs, b.mean_probs, atol=1e-12, rtol=0)
    np.testing.assert_array_equal(batch_uq(models, recs, cfg, batch_size=3).mean_probs, a.mean_probs)
    np.testing.assert_array_equal(a.labels, recs.labels)
    np.testing.assert_allclose(a.mean_probs.sum(axis=1), 1.0, atol=1e-9)
    assert np.all((a.entropy >= 0) & (a.entropy <= math.log(2) + 1e-12))


def test_batch_uq_empty_and_undersized():
    empty = batch_uq([_model()], RecordSet.empty(PTB), UqConfig("mcd", T=2))
    assert len(empty) == 0 and empty.num_classes == 2
    with pytest.raises(ConfigError):
        batch_uq([_model()], _records(2), UqConfig("ensemble", N=3))


def test_uq_config_validation():
    with pytest.raises(ConfigError):
        UqConfig("bayes")
    with pytest.raises(ConfigError):
        UqConfig(T=0)
    assert UqConfig().T == 30 and UqConfig().N == 5
    assert UqConfig("mcd").members_needed == 1


def test_argmax_ties_go_to_lowest_class():
    batch = UqBatch.from_probs([[0.4, 0.4, 0.2], [0.2, 0.4, 0.4]])
    assert batch.predicted.tolist() == [0, 1]


def test_prediction_csv(tmp_path):
    batch = UqBatch.from_probs([[0.25, 0.75], [1.0, 0.0]], labels=[1, 0])
    path = tmp_path / "p.csv"
    write_predictions(path, batch)
    lines = path.read_text().splitlines()
    assert lines[0] == "record_index,true_label,predicted_class,p_0,p_1,entropy,entropy_normalized"
    fields = lines[1].split(",")
    assert fields[:5] == ["0", "1", "1", "0.25", "0.75"]
    assert float(fields[5]) == batch.entropy[0]
    assert lines[2].endswith(",0.0,0.0")


def test_transformer_and_uctecg_mc_passes_run():
    for kind in ("transformer", "uctecg"):
        model = _model(kind=kind, c=5)
        set_dropout_rate(model, 0.3)
        pred = mcd_predict(model, _x(2), 2)
        assert pred.mean_probs.shape == (2, 5)
