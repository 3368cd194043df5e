"""Monte Carlo dropout, deep ensembles and their combination (EMCD).

Every stochastic pass for record ``r``, ensemble member ``m`` and pass ``t``
draws its dropout masks from ``default_rng([base_seed, r, m, t])``. A
record's masks therefore never depend on batch composition, chunking or
evaluation order. Reruns with the same chunking are bit-identical; other
chunkings agree up to BLAS summation order (a few ulp).

Averages over passes and members sort the stacked values before summing, so
permuting members or passes leaves the mean unchanged to the last bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .models import has_dropout
from .nn import Context, DropoutMode

UQ_METHODS = ("mcd", "ensemble", "emcd")
PROB_ATOL = 1e-6


class DegenerateDropoutWarning(UserWarning):
    """MC sampling was requested on a model without active dropout."""


@dataclass(frozen=True)
class UqConfig:
    method: str = "emcd"
    T: int = 30
    N: int = 5
    base_seed: int = 0

    def __post_init__(self):
        if self.method not in UQ_METHODS:
            raise ConfigError(f"method must be one of {UQ_METHODS}, got {self.method!r}")
        if self.T < 1 or self.N < 1:
            raise ConfigError("T and N must be >= 1")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be non-negative")

    @property
    def members_needed(self) -> int:
        return 1 if self.method == "mcd" else self.N

    def to_dict(self):
        return asdict(self)


def predictive_entropy(p):
    """Shannon entropy in nats, ``0 ln 0 = 0``; works on one vector or rows of a matrix."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < -PROB_ATOL) or np.any(np.abs(p.sum(axis=-1) - 1.0) > PROB_ATOL):
        raise ValueError("input is not a probability vector (entries >= 0 summing to 1)")
    p = np.clip(p, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    h = -terms.sum(axis=-1)
    h = np.maximum(h, 0.0)
    return float(h) if h.ndim == 0 else h


@dataclass
class UqPrediction:
    mean_probs: np.ndarray
    entropy: float
    entropy_normalized: float
    predicted_class: int
    certain: bool | None = None


@dataclass
class UqBatch:
    """Column-wise predictions for many records (a sequence of :class:`UqPrediction`)."""

    mean_probs: np.ndarray
    entropy: np.ndarray
    entropy_normalized: np.ndarray
    predicted: np.ndarray
    labels: np.ndarray | None = None

    @classmethod
    def from_probs(cls, mean_probs, labels=None):
        mean_probs = np.asarray(mean_probs, dtype=np.float64).reshape(-1, np.shape(mean_probs)[-1])
        num_classes = mean_probs.shape[1]
        entropy = predictive_entropy(mean_probs) if len(mean_probs) else np.zeros(0)
        return cls(
            mean_probs=mean_probs,
            entropy=entropy,
            entropy_normalized=entropy / math.log(num_classes),
            predicted=mean_probs.argmax(axis=1),  # first maximum wins ties
            labels=None if labels is None else np.asarray(labels, dtype=np.int64),
        )

    @property
    def num_classes(self):
        return self.mean_probs.shape[1]

    def __len__(self):
        return self.mean_probs.shape[0]

    def __getitem__(self, i):
        return UqPrediction(self.mean_probs[i], float(self.entropy[i]), float(self.entropy_normalized[i]),
                            int(self.predicted[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def order_free_mean(stack):
    """Mean over axis 0 that is bit-identical under any permutation of that axis."""
    stack = np.asarray(stack, dtype=np.float64)
    return np.sort(stack, axis=0).sum(axis=0) / stack.shape[0]


def pass_generators(base_seed, record_ids, member, pass_index):
    return [np.random.default_rng([base_seed, int(r), member, pass_index]) for r in record_ids]


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def deterministic_probs(model, x):
    return model.forward(x, Context(DropoutMode.EVAL))


def mc_samples(model, x, T, base_seed=0, record_ids=None, member=0):
    """Stacked softmax outputs ``(T, batch, C)`` of T eval-stochastic passes."""
    if T < 1:
        raise ConfigError("T must be >= 1")
    if not has_dropout(model):
        warnings.warn("model has no active dropout; MC passes are deterministic", DegenerateDropoutWarning,
                      stacklevel=2)
    record_ids = np.arange(len(x)) if record_ids is None else np.asarray(record_ids)
    return np.stack([
        model.forward(x, Context(DropoutMode.MC, row_rngs=pass_generators(base_seed, record_ids, member, t)))
        for t in range(T)
    ])


def _result(mean_probs, single):
    batch = UqBatch.from_probs(mean_probs)
    return batch[0] if single else batch


def mcd_predict(model, x, T, seed=0, record_ids=None, member=0):
    """MC-dropout prediction: mean of T stochastic passes and its entropy.

    ``x`` is one segment (returns :class:`UqPrediction`) or a batch
    (returns :class:`UqBatch`); ``record_ids`` default to batch positions.
    """
    xb, single = _as_batch(x)
    return _result(order_free_mean(mc_samples(model, xb, T, seed, record_ids, member)), single)


def _check_members(models):
    if not models:
        raise ConfigError("at least one ensemble member is required")


def _stack_members(outputs):
    widths = {o.shape[-1] for o in outputs}
    if len(widths) != 1:
        raise ValueError(f"ensemble members disagree on the class count: {sorted(widths)}")
    return np.stack(outputs)


def ensemble_predict(models, x):
    """Deep-ensemble prediction from deterministic passes of every member."""
    _check_members(models)
    xb, single = _as_batch(x)
    return _result(order_free_mean(_stack_members([deterministic_probs(m, xb) for m in models])), single)


def emcd_predict(models, x, T, seed=0, record_ids=None, member_ids=None):
    """Per-member MC-dropout means, then the mean over members.

    ``member_ids`` bind each member to its seed substream (default: list
    position), which is what makes the result invariant to member order.
    """
    _check_members(models)
    xb, single = _as_batch(x)
    member_ids = range(len(models)) if member_ids is None else member_ids
    per_member = [order_free_mean(mc_samples(m, xb, T, seed, record_ids, mid))
                  for m, mid in zip(models, member_ids)]
    return _result(order_free_mean(_stack_members(per_member)), single)


def batch_uq(models, records, cfg: UqConfig, batch_size=256) -> UqBatch:
    """Run the configured UQ method over a record set, in order, with labels attached."""
    models = list(models)
    if len(models) < cfg.members_needed:
        raise ConfigError(f"{cfg.method} needs {cfg.members_needed} trained models, got {len(models)}")
    models = models[: cfg.members_needed]
    x = records.signals
    n = len(x)
    if n == 0:
        num_classes = deterministic_probs(models[0], np.zeros((1,) + x.shape[1:])).shape[-1]
        return UqBatch.from_probs(np.zeros((0, num_classes)), np.zeros(0, dtype=np.int64))
    chunks = []
    for start in range(0, n, batch_size):
        xb = x[start:start + batch_size]
        ids = np.arange(start, start + len(xb))
        if cfg.method == "mcd":
            probs = order_free_mean(mc_samples(models[0], xb, cfg.T, cfg.base_seed, ids))
        elif cfg.method == "ensemble":
            probs = order_free_mean(_stack_members([deterministic_probs(m, xb) for m in models]))
        else:
            probs = order_free_mean(_stack_members(
                [order_free_mean(mc_samples(m, xb, cfg.T, cfg.base_seed, ids, i)) for i, m in enumerate(models)]
            ))
        chunks.append(probs)
    return UqBatch.from_probs(np.concatenate(chunks), records.labels)


def write_predictions(path, batch: UqBatch, labels=None):
    """CSV dump: record_index, true_label, predicted_class, p_0..p_{C-1}, entropy, entropy_normalized."""
    labels = batch.labels if labels is None else np.asarray(labels)
    header = (["record_index", "true_label", "predicted_class"]
              + [f"p_{c}" for c in range(batch.num_classes)] + ["entropy", "entropy_normalized"])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(batch)):
            row = [str(i), str(int(labels[i])), str(int(batch.predicted[i]))]
            row += [repr(float(p)) for p in batch.mean_probs[i]]
            row += [repr(float(batch.entropy[i])), repr(float(batch.entropy_normalized[i]))]
            fh.write(",".join(row) + "\n")
