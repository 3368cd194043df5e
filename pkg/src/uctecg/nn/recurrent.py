"""Stacked LSTM with explicit backpropagation through time."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, ShapeError
from .core import Layer, _default_rng


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Lstm(Layer):
    """``(batch, seq, input_dim) -> (batch, seq, hidden_dim)``, top-layer outputs.

    Gate layout along the 4H axis is input, forget, cell, output. Each layer
    ``l`` owns ``Wx{l}`` (in, 4H), ``Wh{l}`` (H, 4H) and ``b{l}`` (4H).
    """

    def __init__(self, input_dim, hidden_dim, num_layers=1, rng=None):
        super().__init__()
        if min(input_dim, hidden_dim, num_layers) < 1:
            raise ConfigError("Lstm sizes must be positive")
        self.input_dim, self.hidden_dim, self.num_layers = input_dim, hidden_dim, num_layers
        rng = _default_rng(rng)
        bound = 1.0 / math.sqrt(hidden_dim)
        for l in range(num_layers):
            d = input_dim if l == 0 else hidden_dim
            self.add_param(f"Wx{l}", rng.uniform(-bound, bound, (d, 4 * hidden_dim)))
            self.add_param(f"Wh{l}", rng.uniform(-bound, bound, (hidden_dim, 4 * hidden_dim)))
            self.add_param(f"b{l}", rng.uniform(-bound, bound, 4 * hidden_dim))

    def config(self):
        return {"input_dim": self.input_dim, "hidden_dim": self.hidden_dim, "num_layers": self.num_layers}

    def _layer_forward(self, l, x):
        H = self.hidden_dim
        batch, steps, _ = x.shape
        Wh = self.params[f"Wh{l}"]
        zx = x @ self.params[f"Wx{l}"] + self.params[f"b{l}"]
        h = np.zeros((batch, H))
        c = np.zeros((batch, H))
        hs = np.empty((batch, steps, H))
        gates = np.empty((batch, steps, 4 * H))
        cs = np.empty((batch, steps, H))
        for t in range(steps):
            z = zx[:, t] + h @ Wh
            ifo = _sigmoid(z[:, np.r_[0:2 * H, 3 * H:4 * H]])
            i, f, o = ifo[:, :H], ifo[:, H:2 * H], ifo[:, 2 * H:]
            g = np.tanh(z[:, 2 * H:3 * H])
            c = f * c + i * g
            h = o * np.tanh(c)
            gates[:, t, :H], gates[:, t, H:2 * H] = i, f
            gates[:, t, 2 * H:3 * H], gates[:, t, 3 * H:] = g, o
            cs[:, t], hs[:, t] = c, h
        return hs, (x, gates, cs, hs)

    def forward(self, x, ctx):
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeError(f"Lstm expects (batch, seq, {self.input_dim}), got {x.shape}")
        caches = []
        for l in range(self.num_layers):
            x, cache = self._layer_forward(l, x)
            caches.append(cache)
        ctx.save(self, caches)
        return x

    def _layer_backward(self, l, dhs, cache):
        H = self.hidden_dim
        x, gates, cs, hs = cache
        batch, steps, _ = x.shape
        Wh = self.params[f"Wh{l}"]
        dz = np.empty((batch, steps, 4 * H))
        dh_next = np.zeros((batch, H))
        dc_next = np.zeros((batch, H))
        for t in reversed(range(steps)):
            i, f = gates[:, t, :H], gates[:, t, H:2 * H]
            g, o = gates[:, t, 2 * H:3 * H], gates[:, t, 3 * H:]
            c_prev = cs[:, t - 1] if t > 0 else np.zeros((batch, H))
            tanh_c = np.tanh(cs[:, t])
            dh = dhs[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tanh_c ** 2)
            dz[:, t, :H] = dc * g * i * (1.0 - i)
            dz[:, t, H:2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, t, 2 * H:3 * H] = dc * i * (1.0 - g ** 2)
            dz[:, t, 3 * H:] = dh * tanh_c * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz[:, t] @ Wh.T
        h_prev = np.concatenate([np.zeros((batch, 1, H)), hs[:, :-1]], axis=1)
        dz2 = dz.reshape(-1, 4 * H)
        self.grads[f"Wh{l}"] += h_prev.reshape(-1, H).T @ dz2
        self.grads[f"Wx{l}"] += x.reshape(batch * steps, -1).T @ dz2
        self.grads[f"b{l}"] += dz2.sum(axis=0)
        return dz @ self.params[f"Wx{l}"].T

    def backward(self, dy, ctx):
        caches = ctx.load(self)
        for l in reversed(range(self.num_layers)):
            dy = self._layer_backward(l, dy, caches[l])
        return dy
