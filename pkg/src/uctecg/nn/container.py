"""Composite layers: sequential stacks, parallel branches, fixed feature extractors."""

from __future__ import annotations

import numpy as np

from ..dsp import StftConfig, standardize, stft_magnitude
from ..errors import ConfigError, ShapeError
from .core import Context, DropoutMode, Layer, Softmax, layer_from_spec


def _with_index(err: ShapeError, index) -> ShapeError:
    path = str(index) if err.layer_index is None else f"{index}.{err.layer_index}"
    base = str(err).split(": ", 1)[1] if err.layer_index is not None else str(err)
    return ShapeError(base, layer_index=path)


class Sequential(Layer):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    def config(self):
        return {"layers": [layer.spec() for layer in self.layers]}

    @classmethod
    def from_config(cls, config):
        return cls([layer_from_spec(s) for s in config["layers"]])

    def children(self):
        return [(str(i), layer) for i, layer in enumerate(self.layers)]

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]

    def _run(self, layers, x, ctx):
        for i, layer in enumerate(layers):
            try:
                x = layer.forward(x, ctx)
            except ShapeError as err:
                raise _with_index(err, i) from None
        return x

    def forward(self, x, ctx):
        return self._run(self.layers, np.asarray(x, dtype=np.float64), ctx)

    @property
    def ends_in_softmax(self):
        return bool(self.layers) and isinstance(self.layers[-1], Softmax)

    def logits(self, x, ctx):
        """Forward pass stopping before a terminal Softmax."""
        layers = self.layers[:-1] if self.ends_in_softmax else self.layers
        return self._run(layers, np.asarray(x, dtype=np.float64), ctx)

    def backward(self, dy, ctx, skip_terminal_softmax=False):
        layers = self.layers[:-1] if skip_terminal_softmax and self.ends_in_softmax else self.layers
        for layer in reversed(layers):
            dy = layer.backward(dy, ctx)
            if dy is None:
                break
        return dy

    def predict(self, x, mode=DropoutMode.EVAL, rng=None, row_rngs=None):
        """Convenience forward pass with a fresh context."""
        return self.forward(x, Context(mode, rng=rng, row_rngs=row_rngs))


class Parallel(Layer):
    """Feed the same input to every branch and concatenate outputs on the last axis."""

    def __init__(self, branches):
        super().__init__()
        self.branches = list(branches)

    def config(self):
        return {"branches": [b.spec() for b in self.branches]}

    @classmethod
    def from_config(cls, config):
        return cls([layer_from_spec(s) for s in config["branches"]])

    def children(self):
        return [(str(i), b) for i, b in enumerate(self.branches)]

    def forward(self, x, ctx):
        outs = []
        for i, branch in enumerate(self.branches):
            try:
                outs.append(branch.forward(x, ctx))
            except ShapeError as err:
                raise _with_index(err, i) from None
        ctx.save(self, [o.shape[-1] for o in outs])
        return np.concatenate(outs, axis=-1)

    def backward(self, dy, ctx):
        widths = ctx.load(self)
        cuts = np.cumsum(widths)[:-1]
        dx = None
        for branch, part in zip(self.branches, np.split(dy, cuts, axis=-1)):
            d = branch.backward(np.ascontiguousarray(part), ctx)
            if d is not None:
                dx = d if dx is None else dx + d
        return dx


class SpectrogramFeatures(Layer):
    """Non-trainable ``(batch, length) -> (batch, frames, bins)`` STFT front end.

    Gradients are not propagated to the raw signal; ``backward`` returns None.
    """

    def __init__(self, stft=None, length=187, standardize=True):
        super().__init__()
        self.stft = stft if isinstance(stft, StftConfig) else StftConfig(**(stft or {}))
        self.length = length
        self.standardize = standardize
        if self.stft.window_len > length:
            raise ConfigError(f"STFT window {self.stft.window_len} exceeds signal length {length}")

    def config(self):
        return {"stft": self.stft.to_dict(), "length": self.length, "standardize": self.standardize}

    def forward(self, x, ctx):
        if x.ndim != 2 or x.shape[1] != self.length:
            raise ShapeError(f"SpectrogramFeatures expects (batch, {self.length}), got {x.shape}")
        spec = stft_magnitude(x, self.stft)
        if spec.shape[1:] != self.stft.shape(self.length):
            raise ShapeError(f"spectrogram shape {spec.shape[1:]} != configured {self.stft.shape(self.length)}")
        return standardize(spec) if self.standardize else spec

    def backward(self, dy, ctx):
        return None
