"""Heartbeat CSV corpora: loading, validation, splitting and batching.

The public heartbeat corpora ship as headerless CSV files with one segmented
beat per line: 187 amplitude samples followed by the class label. Records are
held column-wise in a :class:`RecordSet` (an immutable ``Sequence`` of
:class:`HeartbeatRecord`) so that a 100k-record corpus stays a pair of numpy
arrays rather than 100k Python objects.
"""

from __future__ import annotations

import math
import os
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, SplitError

SEGMENT_LENGTH = 187
SAMPLING_RATE_HZ = 125.0

# (total, train, test) for the two corpora as distributed.
EXPECTED_COUNTS = {
    "mitbih": (109_446, 87_554, 21_892),
    "ptb": (14_552, 11_641, 2_911),
}

# Conventional file names of the public distribution.
CORPUS_FILES = {
    "mitbih": ("mitbih_train.csv", "mitbih_test.csv"),
    "ptb": ("ptbdb_normal.csv", "ptbdb_abnormal.csv"),
}


@dataclass(frozen=True)
class DatasetMeta:
    name: str
    num_classes: int
    class_names: tuple[str, ...]
    sampling_rate_hz: float = SAMPLING_RATE_HZ

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("a dataset needs at least two classes")
        if len(self.class_names) != self.num_classes:
            raise ConfigError(
                f"{self.name}: {len(self.class_names)} class names for {self.num_classes} classes"
            )
        if self.sampling_rate_hz != SAMPLING_RATE_HZ:
            raise ConfigError(f"sampling rate must be {SAMPLING_RATE_HZ} Hz")


MITBIH = DatasetMeta("mitbih", 5, ("N", "S", "V", "F", "Q"))
PTB = DatasetMeta("ptb", 2, ("Normal", "Abnormal"))
_METAS = {m.name: m for m in (MITBIH, PTB)}


def get_meta(name: str) -> DatasetMeta:
    try:
        return _METAS[name]
    except KeyError:
        raise ConfigError(f"unknown dataset {name!r}; expected one of {sorted(_METAS)}") from None


@dataclass(frozen=True)
class HeartbeatRecord:
    samples: np.ndarray
    label: int

    def __post_init__(self):
        if self.samples.shape != (SEGMENT_LENGTH,):
            raise DataError(f"expected {SEGMENT_LENGTH} samples, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("non-finite sample value")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class RecordSet(Sequence):
    """Immutable column-wise collection of heartbeat records.

    ``segments`` remembers the record counts of the files a set was
    concatenated from, which is what the pregiven-files split relies on.
    """

    signals: np.ndarray
    labels: np.ndarray
    meta: DatasetMeta
    segments: tuple[int, ...] = field(default=())

    def __post_init__(self):
        signals = np.asarray(self.signals, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if signals.ndim != 2 or signals.shape[1] != SEGMENT_LENGTH:
            if signals.size == 0:
                signals = signals.reshape(0, SEGMENT_LENGTH)
            else:
                raise DataError(f"signals must have shape (n, {SEGMENT_LENGTH}), got {signals.shape}")
        if labels.shape != (signals.shape[0],):
            raise DataError("one label per record required")
        if labels.size and (labels.min() < 0 or labels.max() >= self.meta.num_classes):
            raise DataError(f"labels must lie in [0, {self.meta.num_classes})")
        if not np.all(np.isfinite(signals)):
            raise DataError("non-finite sample value")
        segments = tuple(self.segments) or (len(labels),)
        if sum(segments) != len(labels):
            raise DataError("segment sizes do not add up to the record count")
        object.__setattr__(self, "signals", _frozen(signals))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "segments", segments)

    def __len__(self):
        return self.labels.shape[0]

    def __getitem__(self, index):
        if isinstance(index, slice):
            return self.take(np.arange(len(self))[index])
        return HeartbeatRecord(self.signals[index], int(self.labels[index]))

    def take(self, indices) -> RecordSet:
        indices = np.asarray(indices, dtype=np.int64)
        return RecordSet(self.signals[indices], self.labels[indices], self.meta)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.meta.num_classes)

    @classmethod
    def empty(cls, meta: DatasetMeta) -> RecordSet:
        return cls(np.zeros((0, SEGMENT_LENGTH)), np.zeros(0, dtype=np.int64), meta)

    @classmethod
    def from_records(cls, records, meta: DatasetMeta) -> RecordSet:
        records = list(records)
        if not records:
            return cls.empty(meta)
        return cls(np.stack([r.samples for r in records]), [r.label for r in records], meta)


def concat(parts: Sequence[RecordSet]) -> RecordSet:
    """Concatenate record sets, keeping each part as a segment."""
    if not parts:
        raise DataError("nothing to concatenate")
    meta = parts[0].meta
    if any(p.meta != meta for p in parts):
        raise DataError("cannot concatenate record sets of different datasets")
    return RecordSet(
        np.concatenate([p.signals for p in parts]),
        np.concatenate([p.labels for p in parts]),
        meta,
        segments=tuple(len(p) for p in parts),
    )


def _parse_row(line: str, lineno: int, path) -> list[float]:
    fields = line.split(",")
    if len(fields) != SEGMENT_LENGTH + 1:
        raise DataError(f"expected {SEGMENT_LENGTH + 1} fields, found {len(fields)}", row=lineno, path=path)
    try:
        return [float(f) for f in fields]
    except ValueError:
        raise DataError("non-numeric field", row=lineno, path=path) from None


def _parse_slow(path) -> np.ndarray:
    rows = []
    with open(path, newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                rows.append(_parse_row(line, lineno, path))
    return np.array(rows, dtype=np.float64).reshape(-1, SEGMENT_LENGTH + 1)


def load_csv(path: str | os.PathLike, meta: DatasetMeta) -> RecordSet:
    """Load one headerless heartbeat CSV file.

    Each non-blank line must carry 187 samples plus a trailing label; the
    label is rounded to the nearest integer. Errors name the 1-based line.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError("file not found", path=path)
    if path.stat().st_size == 0:
        return RecordSet.empty(meta)
    try:
        table = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError:
        # loadtxt's message is not row-precise for ragged rows; rescan to locate the fault.
        table = _parse_slow(path)
    if table.size == 0:
        return RecordSet.empty(meta)
    if table.shape[1] != SEGMENT_LENGTH + 1:
        _parse_slow(path)
        raise DataError(f"expected {SEGMENT_LENGTH + 1} fields per row", path=path)

    signals = table[:, :SEGMENT_LENGTH]
    raw_labels = table[:, SEGMENT_LENGTH]
    bad = ~np.all(np.isfinite(table), axis=1)
    if bad.any():
        raise DataError("non-finite value", row=_data_lineno(path, int(np.argmax(bad))), path=path)
    labels = np.rint(raw_labels).astype(np.int64)
    bad = (labels < 0) | (labels >= meta.num_classes)
    if bad.any():
        i = int(np.argmax(bad))
        raise DataError(
            f"label {raw_labels[i]:g} outside [0, {meta.num_classes})",
            row=_data_lineno(path, i),
            path=path,
        )
    return RecordSet(signals, labels, meta)


def _data_lineno(path, record_index: int) -> int:
    """Map a record index to its 1-based file line, skipping blank lines."""
    seen = -1
    with open(path, newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                seen += 1
                if seen == record_index:
                    return lineno
    return record_index + 1


def write_csv(records: RecordSet, path: str | os.PathLike) -> None:
    """Write records in the corpus format; floats use shortest round-trip repr."""
    with open(path, "w", newline="\n") as fh:
        for samples, label in zip(records.signals.tolist(), records.labels.tolist()):
            fh.write(",".join(map(repr, samples)))
            fh.write(f",{float(label)!r}\n")


def load_corpus(data_dir: str | os.PathLike, meta: DatasetMeta) -> RecordSet:
    """Load both files of a public corpus from ``data_dir`` as two segments.

    For MIT-BIH the segments are the shipped train and test files; for PTB they
    are the normal and abnormal files.
    """
    data_dir = Path(data_dir)
    parts = [load_csv(data_dir / name, meta) for name in CORPUS_FILES[meta.name]]
    return concat(parts)


# --------------------------------------------------------------------------
# Splitting
# --------------------------------------------------------------------------

SPLIT_MODES = ("pregiven-files", "stratified-random")


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "stratified-random"
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SPLIT_MODES:
            raise ConfigError(f"split mode must be one of {SPLIT_MODES}, got {self.mode!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")


def _allocate(counts: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder apportionment of ``total`` across classes by ``counts``."""
    ideal = counts * (total / counts.sum())
    alloc = np.floor(ideal).astype(np.int64)
    short = total - alloc.sum()
    order = np.argsort(-(ideal - alloc), kind="stable")
    alloc[order[:short]] += 1
    return alloc


def stratified_indices(labels: np.ndarray, train_fraction: float, seed: int):
    """Return sorted (train, test) index arrays preserving class proportions.

    The test size is ``ceil((1 - train_fraction) * n)``, the same rounding the
    common ``train_test_split`` convention uses.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(counts < 2):
        raise SplitError(f"class {classes[np.argmax(counts < 2)]} has fewer than 2 records")
    n_test = math.ceil(round((1.0 - train_fraction) * n, 9))
    n_test = min(max(n_test, 1), n - 1)
    test_alloc = _allocate(counts, n_test)
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for cls, count, k in zip(classes, counts, test_alloc):
        members = np.flatnonzero(labels == cls)
        perm = rng.permutation(count)
        test_idx.append(members[perm[:k]])
        train_idx.append(members[perm[k:]])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def split(records: RecordSet, spec: SplitSpec) -> tuple[RecordSet, RecordSet]:
    if len(records) == 0:
        raise SplitError("cannot split an empty record set")
    if spec.mode == "pregiven-files":
        if len(records.segments) != 2:
            raise SplitError(
                f"pregiven-files split needs exactly two source files, got {len(records.segments)}"
            )
        n_train = records.segments[0]
        return records[:n_train], records[n_train:]
    train_idx, test_idx = stratified_indices(records.labels, spec.train_fraction, spec.seed)
    return records.take(train_idx), records.take(test_idx)


def stratified_subsample(records: RecordSet, fraction: float, seed: int) -> RecordSet:
    """Class-balanced random subset holding ``fraction`` of the records."""
    subset, _ = split(records, SplitSpec("stratified-random", fraction, seed))
    return subset


# --------------------------------------------------------------------------
# Batching and preprocessing
# --------------------------------------------------------------------------

def batches(records: RecordSet, batch_size: int, shuffle_seed: int | None = None) -> Iterator[RecordSet]:
    """Yield one epoch of batches; the last one may be short."""
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    n = len(records)
    order = np.arange(n) if shuffle_seed is None else np.random.default_rng(shuffle_seed).permutation(n)
    for start in range(0, n, batch_size):
        yield records.take(order[start:start + batch_size])


def minmax_normalize(records: RecordSet) -> RecordSet:
    """Rescale every record independently to [0, 1]; flat records map to 0."""
    x = records.signals
    lo = x.min(axis=1, keepdims=True)
    span = x.max(axis=1, keepdims=True) - lo
    span[span == 0] = 1.0
    return RecordSet((x - lo) / span, records.labels, records.meta, records.segments)


def inverse_frequency_weights(labels, num_classes: int) -> np.ndarray:
    """Per-class loss weights ``n / (C * count_c)``; absent classes get weight 0."""
    counts = np.bincount(np.asarray(labels), minlength=num_classes).astype(np.float64)
    weights = np.zeros(num_classes)
    present = counts > 0
    weights[present] = counts.sum() / (num_classes * counts[present])
    return weights
