"""Self-attention encoder stack over ``(batch, seq, dim)`` tensors.

Blocks are post-norm: ``x = LN(x + Drop(MHA(x)))`` then
``x = LN(x + Drop(W2 Drop(ReLU(W1 x))))``. Attention weights are dropped
out as well, so MC sampling perturbs every sub-block.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, ShapeError
from .core import Dropout, Layer, Linear, ReLU, _default_rng, softmax


class LayerNorm(Layer):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.dim, self.eps = dim, eps
        self.add_param("gamma", np.ones(dim))
        self.add_param("beta", np.zeros(dim))

    def config(self):
        return {"dim": self.dim, "eps": self.eps}

    def forward(self, x, ctx):
        if x.shape[-1] != self.dim:
            raise ShapeError(f"LayerNorm expects last dim {self.dim}, got {x.shape}")
        mean = x.mean(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + self.eps)
        xhat = (x - mean) * inv_std
        ctx.save(self, (xhat, inv_std))
        return xhat * self.params["gamma"] + self.params["beta"]

    def backward(self, dy, ctx):
        xhat, inv_std = ctx.load(self)
        lead = tuple(range(dy.ndim - 1))
        self.grads["gamma"] += (dy * xhat).sum(axis=lead)
        self.grads["beta"] += dy.sum(axis=lead)
        dxhat = dy * self.params["gamma"]
        return inv_std * (
            dxhat - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )


class PositionalEmbedding(Layer):
    """Learned additive position vectors, initialised to zero."""

    def __init__(self, seq_len, dim):
        super().__init__()
        self.seq_len, self.dim = seq_len, dim
        self.add_param("P", np.zeros((seq_len, dim)))

    def config(self):
        return {"seq_len": self.seq_len, "dim": self.dim}

    def forward(self, x, ctx):
        if x.shape[1:] != (self.seq_len, self.dim):
            raise ShapeError(f"PositionalEmbedding expects (batch, {self.seq_len}, {self.dim}), got {x.shape}")
        return x + self.params["P"]

    def backward(self, dy, ctx):
        self.grads["P"] += dy.sum(axis=0)
        return dy


class MultiHeadAttention(Layer):
    def __init__(self, dim, num_heads, dropout_rate=0.0, rng=None):
        super().__init__()
        if dim % num_heads:
            raise ConfigError(f"model dim {dim} is not divisible by {num_heads} heads")
        self.dim, self.num_heads, self.dropout_rate = dim, num_heads, dropout_rate
        self.head_dim = dim // num_heads
        rng = _default_rng(rng)
        self.q = Linear(dim, dim, rng)
        self.k = Linear(dim, dim, rng)
        self.v = Linear(dim, dim, rng)
        self.out = Linear(dim, dim, rng)
        self.attn_drop = Dropout(dropout_rate)

    def config(self):
        return {"dim": self.dim, "num_heads": self.num_heads, "dropout_rate": self.dropout_rate}

    def children(self):
        return [("q", self.q), ("k", self.k), ("v", self.v), ("out", self.out), ("attn_drop", self.attn_drop)]

    def _split(self, t):
        b, s, _ = t.shape
        return t.reshape(b, s, self.num_heads, self.head_dim).transpose(0, 2, 1, 3)

    def _merge(self, t):
        b, _, s, _ = t.shape
        return t.transpose(0, 2, 1, 3).reshape(b, s, self.dim)

    def forward(self, x, ctx):
        if x.ndim != 3 or x.shape[2] != self.dim:
            raise ShapeError(f"MultiHeadAttention expects (batch, seq, {self.dim}), got {x.shape}")
        scale = 1.0 / math.sqrt(self.head_dim)
        q = self._split(self.q.forward(x, ctx))
        k = self._split(self.k.forward(x, ctx))
        v = self._split(self.v.forward(x, ctx))
        weights = softmax(q @ k.transpose(0, 1, 3, 2) * scale)
        dropped = self.attn_drop.forward(weights, ctx)
        ctx.save(self, (q, k, v, weights, dropped))
        return self.out.forward(self._merge(dropped @ v), ctx)

    def attention_weights(self, ctx):
        """Post-softmax weights ``(batch, heads, seq, seq)`` of the recorded pass."""
        return ctx.load(self)[3]

    def backward(self, dy, ctx):
        q, k, v, weights, dropped = ctx.load(self)
        scale = 1.0 / math.sqrt(self.head_dim)
        dctx = self._split(self.out.backward(dy, ctx))
        dv = dropped.transpose(0, 1, 3, 2) @ dctx
        dw = self.attn_drop.backward(dctx @ v.transpose(0, 1, 3, 2), ctx)
        dscores = weights * (dw - (dw * weights).sum(axis=-1, keepdims=True)) * scale
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q
        return (self.q.backward(self._merge(dq), ctx)
                + self.k.backward(self._merge(dk), ctx)
                + self.v.backward(self._merge(dv), ctx))


class TransformerEncoderLayer(Layer):
    def __init__(self, dim, num_heads, ff_dim, dropout_rate=0.0, rng=None):
        super().__init__()
        self.dim, self.num_heads, self.ff_dim, self.dropout_rate = dim, num_heads, ff_dim, dropout_rate
        rng = _default_rng(rng)
        self.attn = MultiHeadAttention(dim, num_heads, dropout_rate, rng)
        self.drop1 = Dropout(dropout_rate)
        self.norm1 = LayerNorm(dim)
        self.ff1 = Linear(dim, ff_dim, rng)
        self.act = ReLU()
        self.drop_ff = Dropout(dropout_rate)
        self.ff2 = Linear(ff_dim, dim, rng)
        self.drop2 = Dropout(dropout_rate)
        self.norm2 = LayerNorm(dim)

    def config(self):
        return {"dim": self.dim, "num_heads": self.num_heads, "ff_dim": self.ff_dim,
                "dropout_rate": self.dropout_rate}

    def children(self):
        return [(n, getattr(self, n)) for n in
                ("attn", "drop1", "norm1", "ff1", "act", "drop_ff", "ff2", "drop2", "norm2")]

    def forward(self, x, ctx):
        h = self.norm1.forward(x + self.drop1.forward(self.attn.forward(x, ctx), ctx), ctx)
        f = self.ff2.forward(self.drop_ff.forward(self.act.forward(self.ff1.forward(h, ctx), ctx), ctx), ctx)
        return self.norm2.forward(h + self.drop2.forward(f, ctx), ctx)

    def backward(self, dy, ctx):
        dh = self.norm2.backward(dy, ctx)
        df = self.drop2.backward(dh, ctx)
        df = self.ff1.backward(self.act.backward(self.drop_ff.backward(self.ff2.backward(df, ctx), ctx), ctx), ctx)
        dx = self.norm1.backward(dh + df, ctx)
        return dx + self.attn.backward(self.drop1.backward(dx, ctx), ctx)


class TransformerEncoder(Layer):
    def __init__(self, model_dim, num_heads, num_layers, ff_dim=None, dropout_rate=0.0, rng=None):
        super().__init__()
        if min(model_dim, num_heads, num_layers) < 1:
            raise ConfigError("TransformerEncoder sizes must be positive")
        self.model_dim, self.num_heads, self.num_layers = model_dim, num_heads, num_layers
        self.ff_dim = ff_dim or 4 * model_dim
        self.dropout_rate = dropout_rate
        rng = _default_rng(rng)
        self.layers = [TransformerEncoderLayer(model_dim, num_heads, self.ff_dim, dropout_rate, rng)
                       for _ in range(num_layers)]

    def config(self):
        return {"model_dim": self.model_dim, "num_heads": self.num_heads, "num_layers": self.num_layers,
                "ff_dim": self.ff_dim, "dropout_rate": self.dropout_rate}

    def children(self):
        return [(str(i), layer) for i, layer in enumerate(self.layers)]

    def forward(self, x, ctx):
        for layer in self.layers:
            x = layer.forward(x, ctx)
        return x

    def backward(self, dy, ctx):
        for layer in reversed(self.layers):
            dy = layer.backward(dy, ctx)
        return dy
