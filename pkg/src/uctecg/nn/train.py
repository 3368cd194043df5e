"""Loss, gradients, optimizers and the mini-batch training loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, TrainingError
from .core import Context, DropoutMode

log = logging.getLogger(__name__)


def cross_entropy(logits, targets, class_weights=None):
    """Mean (optionally class-weighted) cross-entropy and its gradient w.r.t. logits.

    Uses log-sum-exp; the weighted mean divides by the summed weights of the
    batch targets.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    n, num_classes = logits.shape
    if targets.shape != (n,):
        raise ValueError("one target per row required")
    if targets.size and (targets.min() < 0 or targets.max() >= num_classes):
        raise ValueError(f"targets must lie in [0, {num_classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    nll = -log_p[np.arange(n), targets]
    w = np.ones(n) if class_weights is None else np.asarray(class_weights, dtype=np.float64)[targets]
    total_w = w.sum()
    loss = float((w * nll).sum() / total_w)
    grad = np.exp(log_p)
    grad[np.arange(n), targets] -= 1.0
    grad *= (w / total_w)[:, None]
    return loss, grad


def loss_and_grads(model, x, targets, ctx=None, class_weights=None):
    """Forward + backward of mean cross-entropy; returns the loss.

    Gradients are accumulated into every layer's ``grads`` (call
    ``model.zero_grad()`` first for fresh values). A terminal Softmax is
    folded into the loss instead of being differentiated separately.
    """
    if ctx is None:
        ctx = Context(DropoutMode.EVAL)
    ctx.record = True
    logits = model.logits(x, ctx)
    loss, dlogits = cross_entropy(logits, targets, class_weights)
    model.backward(dlogits, ctx, skip_terminal_softmax=True)
    return loss


def parameter_gradients(model, x, targets, ctx=None, class_weights=None):
    """Fresh gradient arrays keyed by qualified parameter name."""
    model.zero_grad()
    loss = loss_and_grads(model, x, targets, ctx, class_weights)
    return loss, {name: layer.grads[key].copy() for name, layer, key in model.named_parameters()}


class SGD:
    def __init__(self, lr, momentum=0.0):
        self.lr, self.momentum = lr, momentum
        self._velocity = {}

    def step(self, model):
        for name, layer, key in model.named_parameters():
            g = layer.grads[key]
            if self.momentum:
                v = self._velocity.get(name)
                v = g.copy() if v is None else self.momentum * v + g
                self._velocity[name] = v
                g = v
            layer.params[key] -= self.lr * g


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self._m, self._v = {}, {}

    def step(self, model):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, layer, key in model.named_parameters():
            g = layer.grads[key]
            m = self._m.get(name, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self._v.get(name, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self._m[name], self._v[name] = m, v
            layer.params[key] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


OPTIMIZERS = ("adam", "sgd")


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 10
    loss: str = "cross-entropy"
    class_weights: list[float] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.loss != "cross-entropy":
            raise ConfigError("only cross-entropy loss is supported")

    def to_dict(self):
        return asdict(self)

    def make_optimizer(self):
        return Adam(self.learning_rate) if self.optimizer == "adam" else SGD(self.learning_rate)


@dataclass
class TrainResult:
    model: object
    loss_curve: list[float] = field(default_factory=list)


def _arrays(train_set):
    if hasattr(train_set, "signals"):
        return train_set.signals, train_set.labels
    x, y = train_set
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)


def train(model, train_set, cfg: TrainConfig, optimizer=None) -> TrainResult:
    """Train ``model`` in place; returns it with the per-epoch mean loss.

    ``train_set`` is a :class:`~uctecg.data.RecordSet` or an ``(x, y)`` pair.
    Shuffling and dropout draw from independent streams spawned from
    ``cfg.seed``, so equal seeds give bit-identical runs.
    """
    x, y = _arrays(train_set)
    n = len(y)
    if n == 0:
        raise ConfigError("training set is empty")
    optimizer = optimizer or cfg.make_optimizer()
    shuffle_ss, dropout_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)
    result = TrainResult(model)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            model.zero_grad()
            ctx = Context(DropoutMode.TRAIN, rng=dropout_rng)
            loss = loss_and_grads(model, x[idx], y[idx], ctx, cfg.class_weights)
            if not np.isfinite(loss):
                raise TrainingError("non-finite loss", epoch=epoch, batch=b)
            optimizer.step(model)
            total += loss * len(idx)
        result.loss_curve.append(total / n)
        log.info("epoch %d/%d loss %.6f", epoch + 1, cfg.epochs, result.loss_curve[-1])
    return result
