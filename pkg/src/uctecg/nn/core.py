"""Layer protocol, forward context, and the elementwise/feed-forward layers.

Every layer keeps its trainable arrays in ``params`` and accumulates matching
gradients into ``grads``. Activations needed by ``backward`` live in the
:class:`Context` of the forward pass, never on the layer, so a trained model
can serve concurrent forward passes as long as each uses its own context.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from ..errors import ConfigError, ShapeError

LAYER_TYPES: dict[str, type] = {}


class DropoutMode(str, enum.Enum):
    TRAIN = "train-stochastic"
    EVAL = "eval-deterministic"
    MC = "eval-stochastic"


class Context:
    """State of one forward (and optional backward) pass.

    ``rng`` drives every stochastic layer for the whole batch. ``row_rngs``,
    when given, holds one generator per batch row instead, so a record's
    dropout masks do not depend on which other records share its batch.
    """

    def __init__(self, mode=DropoutMode.EVAL, rng=None, row_rngs=None, record=False):
        self.mode = DropoutMode(mode)
        self.rng = rng
        self.row_rngs = row_rngs
        self.record = record
        self.cache: dict[int, object] = {}

    @property
    def training(self) -> bool:
        return self.mode is DropoutMode.TRAIN

    @property
    def stochastic(self) -> bool:
        return self.mode is not DropoutMode.EVAL

    def save(self, layer, value):
        if self.record:
            self.cache[id(layer)] = value

    def load(self, layer):
        try:
            return self.cache[id(layer)]
        except KeyError:
            raise RuntimeError(
                f"{type(layer).__name__}.backward called without a recorded forward pass"
            ) from None

    def uniform(self, shape) -> np.ndarray:
        """Uniform [0, 1) draws of ``shape``; row-wise when ``row_rngs`` is set."""
        if self.row_rngs is not None:
            if len(self.row_rngs) != shape[0]:
                raise ShapeError(f"{len(self.row_rngs)} row generators for a batch of {shape[0]}")
            return np.stack([g.random(shape[1:]) for g in self.row_rngs])
        if self.rng is None:
            raise ConfigError(f"stochastic mode {self.mode.value} needs an rng")
        return self.rng.random(shape)


def _default_rng(rng):
    return rng if rng is not None else np.random.default_rng(0)


def fan_in_uniform(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    """Base class. Subclasses register themselves by class name for checkpoint rebuilds."""

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        LAYER_TYPES[cls.__name__] = cls

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add_param(self, name, value):
        self.params[name] = np.asarray(value, dtype=np.float64)
        self.grads[name] = np.zeros_like(self.params[name])

    # structure -----------------------------------------------------------
    def children(self) -> list[tuple[str, Layer]]:
        return []

    def config(self) -> dict:
        return {}

    def spec(self) -> dict:
        return {"type": type(self).__name__, **self.config()}

    @classmethod
    def from_config(cls, config: dict) -> Layer:
        return cls(**config)

    def named_layers(self, prefix=""):
        yield prefix, self
        for name, child in self.children():
            yield from child.named_layers(f"{prefix}{name}.")

    def named_parameters(self):
        for prefix, layer in self.named_layers():
            for key in layer.params:
                yield f"{prefix}{key}", layer, key

    def named_buffers(self):
        for prefix, layer in self.named_layers():
            for key in layer.buffers:
                yield f"{prefix}{key}", layer, key

    def zero_grad(self):
        for _, layer in self.named_layers():
            for g in layer.grads.values():
                g.fill(0.0)

    def num_parameters(self) -> int:
        return sum(layer.params[key].size for _, layer, key in self.named_parameters())

    # computation ---------------------------------------------------------
    def forward(self, x: np.ndarray, ctx: Context) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray, ctx: Context) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.config().items() if not isinstance(v, (list, dict)))
        return f"{type(self).__name__}({args})"


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    kind = spec.pop("type")
    try:
        cls = LAYER_TYPES[kind]
    except KeyError:
        raise ConfigError(f"unknown layer type {kind!r}") from None
    return cls.from_config(spec)


def _expect(cond, message):
    if not cond:
        raise ShapeError(message)


class Linear(Layer):
    """Affine map over the last axis; leading axes are treated as batch."""

    def __init__(self, in_dim, out_dim, rng=None):
        super().__init__()
        if in_dim < 1 or out_dim < 1:
            raise ConfigError("Linear dims must be positive")
        self.in_dim, self.out_dim = in_dim, out_dim
        rng = _default_rng(rng)
        self.add_param("W", fan_in_uniform(rng, (in_dim, out_dim), in_dim))
        self.add_param("b", np.zeros(out_dim))

    def config(self):
        return {"in_dim": self.in_dim, "out_dim": self.out_dim}

    def forward(self, x, ctx):
        _expect(x.shape[-1] == self.in_dim, f"Linear expects last dim {self.in_dim}, got shape {x.shape}")
        ctx.save(self, x)
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy, ctx):
        x = ctx.load(self)
        x2 = x.reshape(-1, self.in_dim)
        dy2 = dy.reshape(-1, self.out_dim)
        self.grads["W"] += x2.T @ dy2
        self.grads["b"] += dy2.sum(axis=0)
        return dy @ self.params["W"].T


class Conv1d(Layer):
    """1-D cross-correlation over ``(batch, channels, length)`` with zero padding."""

    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, rng=None):
        super().__init__()
        if min(in_ch, out_ch, kernel, stride) < 1 or padding < 0:
            raise ConfigError("Conv1d sizes must be positive and padding non-negative")
        self.in_ch, self.out_ch, self.kernel = in_ch, out_ch, kernel
        self.stride, self.padding = stride, padding
        rng = _default_rng(rng)
        fan_in = in_ch * kernel
        self.add_param("W", fan_in_uniform(rng, (out_ch, in_ch, kernel), fan_in))
        self.add_param("b", np.zeros(out_ch))

    def config(self):
        return {"in_ch": self.in_ch, "out_ch": self.out_ch, "kernel": self.kernel,
                "stride": self.stride, "padding": self.padding}

    def output_length(self, length):
        return (length + 2 * self.padding - self.kernel) // self.stride + 1

    def _columns(self, x):
        xp = np.pad(x, ((0, 0), (0, 0), (self.padding, self.padding)))
        cols = np.lib.stride_tricks.sliding_window_view(xp, self.kernel, axis=2)[:, :, :: self.stride, :]
        batch, _, out_len, _ = cols.shape
        # (batch * out_len, in_ch * kernel)
        return cols.transpose(0, 2, 1, 3).reshape(batch * out_len, -1), out_len

    def forward(self, x, ctx):
        _expect(x.ndim == 3 and x.shape[1] == self.in_ch,
                f"Conv1d expects (batch, {self.in_ch}, length), got {x.shape}")
        _expect(self.output_length(x.shape[2]) >= 1, f"Conv1d input length {x.shape[2]} too short")
        cols, out_len = self._columns(x)
        ctx.save(self, (cols, x.shape))
        y = cols @ self.params["W"].reshape(self.out_ch, -1).T + self.params["b"]
        return y.reshape(x.shape[0], out_len, self.out_ch).transpose(0, 2, 1)

    def backward(self, dy, ctx):
        cols, in_shape = ctx.load(self)
        batch, _, length = in_shape
        out_len = dy.shape[2]
        dy2 = dy.transpose(0, 2, 1).reshape(batch * out_len, self.out_ch)
        W2 = self.params["W"].reshape(self.out_ch, -1)
        self.grads["W"] += (dy2.T @ cols).reshape(self.params["W"].shape)
        self.grads["b"] += dy2.sum(axis=0)
        dcols = (dy2 @ W2).reshape(batch, out_len, self.in_ch, self.kernel)
        dxp = np.zeros((batch, self.in_ch, length + 2 * self.padding))
        span = self.stride * (out_len - 1) + 1
        for j in range(self.kernel):
            dxp[:, :, j: j + span: self.stride] += dcols[:, :, :, j].transpose(0, 2, 1)
        return dxp[:, :, self.padding: self.padding + length]


class BatchNorm1d(Layer):
    """Batch normalisation over ``(batch, channels[, length])``.

    Training mode normalises with batch statistics and updates the running
    estimates; both eval modes use the running estimates.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        super().__init__()
        if channels < 1:
            raise ConfigError("BatchNorm1d channels must be positive")
        self.channels, self.eps, self.momentum = channels, eps, momentum
        self.add_param("gamma", np.ones(channels))
        self.add_param("beta", np.zeros(channels))
        self.buffers["running_mean"] = np.zeros(channels)
        self.buffers["running_var"] = np.ones(channels)

    def config(self):
        return {"channels": self.channels, "eps": self.eps, "momentum": self.momentum}

    def _axes(self, x):
        return (0,) if x.ndim == 2 else (0, 2)

    def _bcast(self, v, x):
        return v if x.ndim == 2 else v[None, :, None]

    def forward(self, x, ctx):
        _expect(x.ndim in (2, 3) and x.shape[1] == self.channels,
                f"BatchNorm1d expects {self.channels} channels, got shape {x.shape}")
        axes = self._axes(x)
        if ctx.training:
            n = x.size // self.channels
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.buffers["running_mean"] = (1 - m) * self.buffers["running_mean"] + m * mean
            unbiased = var * n / max(n - 1, 1)
            self.buffers["running_var"] = (1 - m) * self.buffers["running_var"] + m * unbiased
        else:
            mean, var = self.buffers["running_mean"], self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - self._bcast(mean, x)) * self._bcast(inv_std, x)
        ctx.save(self, (xhat, inv_std, ctx.training))
        return xhat * self._bcast(self.params["gamma"], x) + self._bcast(self.params["beta"], x)

    def backward(self, dy, ctx):
        xhat, inv_std, batch_stats = ctx.load(self)
        axes = self._axes(dy)
        self.grads["gamma"] += (dy * xhat).sum(axis=axes)
        self.grads["beta"] += dy.sum(axis=axes)
        dxhat = dy * self._bcast(self.params["gamma"], dy)
        if not batch_stats:
            return dxhat * self._bcast(inv_std, dy)
        n = dy.size // self.channels
        s1 = self._bcast(dxhat.sum(axis=axes), dy)
        s2 = self._bcast((dxhat * xhat).sum(axis=axes), dy)
        return self._bcast(inv_std, dy) / n * (n * dxhat - s1 - xhat * s2)


class MaxPool1d(Layer):
    def __init__(self, kernel, stride=None):
        super().__init__()
        self.kernel = kernel
        self.stride = stride or kernel

    def config(self):
        return {"kernel": self.kernel, "stride": self.stride}

    def forward(self, x, ctx):
        _expect(x.ndim == 3 and x.shape[2] >= self.kernel, f"MaxPool1d got shape {x.shape}")
        win = np.lib.stride_tricks.sliding_window_view(x, self.kernel, axis=2)[:, :, :: self.stride, :]
        idx = win.argmax(axis=-1)
        ctx.save(self, (idx, x.shape))
        return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(self, dy, ctx):
        idx, shape = ctx.load(self)
        dx = np.zeros(shape)
        span = self.stride * (dy.shape[2] - 1) + 1
        for j in range(self.kernel):
            dx[:, :, j: j + span: self.stride] += dy * (idx == j)
        return dx


class AdaptiveAvgPool1d(Layer):
    """Average over ``out_len`` adaptive windows: window i spans [floor(iL/n), ceil((i+1)L/n))."""

    def __init__(self, out_len):
        super().__init__()
        self.out_len = out_len

    def config(self):
        return {"out_len": self.out_len}

    def _windows(self, length):
        n = self.out_len
        return [((i * length) // n, -((-(i + 1) * length) // n)) for i in range(n)]

    def forward(self, x, ctx):
        _expect(x.ndim == 3, f"AdaptiveAvgPool1d expects (batch, channels, length), got {x.shape}")
        ctx.save(self, x.shape)
        return np.stack([x[:, :, a:b].mean(axis=2) for a, b in self._windows(x.shape[2])], axis=2)

    def backward(self, dy, ctx):
        shape = ctx.load(self)
        dx = np.zeros(shape)
        for i, (a, b) in enumerate(self._windows(shape[2])):
            dx[:, :, a:b] += dy[:, :, i: i + 1] / (b - a)
        return dx


class Flatten(Layer):
    def forward(self, x, ctx):
        ctx.save(self, x.shape)
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, ctx):
        return dy.reshape(ctx.load(self))


class Reshape(Layer):
    """Reshape every sample to ``shape`` (batch axis untouched)."""

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def config(self):
        return {"shape": list(self.shape)}

    def forward(self, x, ctx):
        ctx.save(self, x.shape)
        try:
            return x.reshape((x.shape[0],) + self.shape)
        except ValueError:
            raise ShapeError(f"cannot reshape {x.shape[1:]} to {self.shape}") from None

    def backward(self, dy, ctx):
        return dy.reshape(ctx.load(self))


class ReLU(Layer):
    def forward(self, x, ctx):
        mask = x > 0
        ctx.save(self, mask)
        return x * mask

    def backward(self, dy, ctx):
        return dy * ctx.load(self)


def softmax(z, axis=-1):
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


class Softmax(Layer):
    def forward(self, x, ctx):
        y = softmax(x)
        ctx.save(self, y)
        return y

    def backward(self, dy, ctx):
        y = ctx.load(self)
        return y * (dy - (dy * y).sum(axis=-1, keepdims=True))


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by 1/(1-rate) while stochastic."""

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate

    def config(self):
        return {"rate": self.rate}

    def forward(self, x, ctx):
        if not ctx.stochastic or self.rate == 0.0:
            ctx.save(self, None)
            return x
        mask = (ctx.uniform(x.shape) >= self.rate) / (1.0 - self.rate)
        ctx.save(self, mask)
        return x * mask

    def backward(self, dy, ctx):
        mask = ctx.load(self)
        return dy if mask is None else dy * mask


class TemporalMean(Layer):
    """Mean over the sequence axis of ``(batch, seq, dim)``."""

    def forward(self, x, ctx):
        _expect(x.ndim == 3, f"TemporalMean expects (batch, seq, dim), got {x.shape}")
        ctx.save(self, x.shape)
        return x.mean(axis=1)

    def backward(self, dy, ctx):
        shape = ctx.load(self)
        return np.broadcast_to(dy[:, None, :] / shape[1], shape).copy()


class LastStep(Layer):
    """Select the final time step of ``(batch, seq, dim)``."""

    def forward(self, x, ctx):
        _expect(x.ndim == 3, f"LastStep expects (batch, seq, dim), got {x.shape}")
        ctx.save(self, x.shape)
        return x[:, -1, :]

    def backward(self, dy, ctx):
        dx = np.zeros(ctx.load(self))
        dx[:, -1, :] = dy
        return dx


class Patchify(Layer):
    """Zero-pad ``(batch, length)`` to a multiple of ``patch_len`` and cut it into patches."""

    def __init__(self, patch_len, length):
        super().__init__()
        if not 1 <= patch_len <= length:
            raise ConfigError(f"patch_len must lie in [1, {length}], got {patch_len}")
        self.patch_len, self.length = patch_len, length

    def config(self):
        return {"patch_len": self.patch_len, "length": self.length}

    @property
    def num_patches(self):
        return -(-self.length // self.patch_len)

    def forward(self, x, ctx):
        _expect(x.ndim == 2 and x.shape[1] == self.length, f"Patchify expects (batch, {self.length})")
        pad = self.num_patches * self.patch_len - self.length
        return np.pad(x, ((0, 0), (0, pad))).reshape(x.shape[0], self.num_patches, self.patch_len)

    def backward(self, dy, ctx):
        return dy.reshape(dy.shape[0], -1)[:, : self.length]
