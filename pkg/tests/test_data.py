import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uctecg.data import (
    MITBIH,
    PTB,
    DatasetMeta,
    HeartbeatRecord,
    RecordSet,
    SplitSpec,
    batches,
    concat,
    get_meta,
    inverse_frequency_weights,
    load_csv,
    minmax_normalize,
    split,
    stratified_indices,
    stratified_subsample,
    write_csv,
)
from uctecg.errors import ConfigError, DataError, SplitError

from conftest import random_records


def _row(values, label):
    return ",".join(str(v) for v in values) + f",{label}\n"


def test_meta_invariants():
    assert MITBIH.num_classes == 5 and MITBIH.class_names == ("N", "S", "V", "F", "Q")
    assert PTB.num_classes == 2 and PTB.class_names == ("Normal", "Abnormal")
    assert MITBIH.sampling_rate_hz == PTB.sampling_rate_hz == 125.0
    assert get_meta("ptb") is PTB
    with pytest.raises(ConfigError):
        get_meta("ecg200")
    with pytest.raises(ConfigError):
        DatasetMeta("x", 2, ("a", "b"), sampling_rate_hz=360.0)


def test_record_invariants():
    HeartbeatRecord(np.zeros(187), 0)
    with pytest.raises(DataError):
        HeartbeatRecord(np.zeros(186), 0)
    bad = np.zeros(187)
    bad[3] = np.nan
    with pytest.raises(DataError):
        HeartbeatRecord(bad, 0)
    with pytest.raises(DataError):
        RecordSet(np.zeros((2, 187)), [0, 2], PTB)


def test_load_parses_rows_in_order_with_rounded_labels(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text(_row(np.linspace(0, 1, 187), "1.000000000000000000e+00")
                    + _row(np.zeros(187), "0.0") + _row(np.ones(187), "0.9999"))
    rs = load_csv(path, PTB)
    assert len(rs) == 3
    assert rs.labels.tolist() == [1, 0, 1]
    np.testing.assert_array_equal(rs[0].samples, np.linspace(0, 1, 187))


def test_load_accepts_crlf_and_empty(tmp_path):
    path = tmp_path / "crlf.csv"
    path.write_bytes(_row(np.zeros(187), 1).replace("\n", "\r\n").encode() * 2)
    assert len(load_csv(path, PTB)) == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert len(load_csv(empty, PTB)) == 0


@pytest.mark.parametrize("bad_line, message", [
    (",".join(["0"] * 100) + "\n", "fields"),
    (",".join(["0"] * 187) + ",x\n", "non-numeric"),
    (_row(np.zeros(187), 7), "label"),
])
def test_load_errors_name_the_row(tmp_path, bad_line, message):
    path = tmp_path / "bad.csv"
    path.write_text(_row(np.zeros(187), 0) + _row(np.zeros(187), 1) + bad_line)
    with pytest.raises(DataError, match=message) as info:
        load_csv(path, PTB)
    assert info.value.row == 3


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_csv(tmp_path / "nope.csv", PTB)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
def test_csv_round_trip_is_bit_exact(tmp_path_factory, seed, n):
    g = np.random.default_rng(seed)
    signals = g.standard_normal((n, 187)) * 10.0 ** g.integers(-8, 8, (n, 1))
    rs = RecordSet(signals, g.integers(0, 5, n), MITBIH)
    path = tmp_path_factory.mktemp("rt") / "r.csv"
    write_csv(rs, path)
    back = load_csv(path, MITBIH)
    assert np.array_equal(back.signals.view(np.uint64), rs.signals.view(np.uint64))
    assert np.array_equal(back.labels, rs.labels)


def test_record_set_is_immutable():
    rs = random_records(4)
    with pytest.raises(ValueError):
        rs.signals[0, 0] = 1.0


def test_split_exact_fraction_and_determinism():
    rs = RecordSet(np.zeros((10, 187)), np.zeros(10, dtype=int), PTB)
    tr, te = split(rs, SplitSpec("stratified-random", 0.8, 1))
    assert (len(tr), len(te)) == (8, 2)
    a = stratified_indices(random_records(101).labels, 0.8, 7)
    b = stratified_indices(random_records(101).labels, 0.8, 7)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_split_ptb_sized_corpus_counts():
    # 4046 normal + 10506 abnormal, as in the public PTB files
    labels = np.r_[np.zeros(4046, int), np.ones(10506, int)]
    tr, te = stratified_indices(labels, 0.8, 0)
    assert (len(tr), len(te)) == (11_641, 2_911)


def test_pregiven_split_passes_files_through():
    a, b = random_records(7, seed=1), random_records(3, seed=2)
    tr, te = split(concat([a, b]), SplitSpec("pregiven-files"))
    np.testing.assert_array_equal(tr.signals, a.signals)
    np.testing.assert_array_equal(te.labels, b.labels)
    with pytest.raises(SplitError):
        split(a, SplitSpec("pregiven-files"))


def test_split_errors():
    with pytest.raises(SplitError):
        split(RecordSet(np.zeros((3, 187)), [0, 0, 1], PTB), SplitSpec())
    with pytest.raises(SplitError):
        split(RecordSet.empty(PTB), SplitSpec())
    with pytest.raises(ConfigError):
        SplitSpec(train_fraction=1.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(2, 40), min_size=1, max_size=5), st.floats(0.05, 0.95), st.integers(0, 1000))
def test_stratified_split_properties(class_sizes, fraction, seed):
    labels = np.concatenate([np.full(n, c) for c, n in enumerate(class_sizes)])
    np.random.default_rng(seed).shuffle(labels)
    tr, te = stratified_indices(labels, fraction, seed)
    # union is the input multiset, no overlap
    assert np.array_equal(np.sort(np.r_[tr, te]), np.arange(labels.size))
    # per-class test share within +-1 of proportional
    n_test = te.size
    for c, n in enumerate(class_sizes):
        expected = n * n_test / labels.size
        assert abs(np.sum(labels[te] == c) - expected) <= 1.0


def test_subsample_is_stratified(ptb_like):
    sub = stratified_subsample(ptb_like, 0.1, 0)
    assert len(sub) == len(ptb_like) - int(np.ceil(round(0.9 * len(ptb_like), 9)))
    ratio = ptb_like.class_counts() / len(ptb_like)
    assert np.all(np.abs(sub.class_counts() - ratio * len(sub)) <= 1)


def test_batches_sizes_and_coverage():
    rs = random_records(10)
    assert [len(b) for b in batches(rs, 4)] == [4, 4, 2]
    assert [len(b) for b in batches(rs, 16)] == [10]
    shuffled = list(batches(rs, 4, shuffle_seed=3))
    again = list(batches(rs, 4, shuffle_seed=3))
    assert all(np.array_equal(x.signals, y.signals) for x, y in zip(shuffled, again))
    seen = np.concatenate([b.signals[:, 0] for b in shuffled])
    assert np.array_equal(np.sort(seen), np.sort(rs.signals[:, 0]))
    with pytest.raises(ConfigError):
        list(batches(rs, 0))


def test_minmax_and_class_weights():
    rs = minmax_normalize(random_records(5))
    assert np.allclose(rs.signals.min(axis=1), 0) and np.allclose(rs.signals.max(axis=1), 1)
    w = inverse_frequency_weights([0, 0, 0, 1], 3)
    np.testing.assert_allclose(w, [4 / 9, 4 / 3, 0.0])
