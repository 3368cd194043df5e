"""Central finite-difference oracle for layer gradients."""

from __future__ import annotations

import numpy as np

from .core import Context, DropoutMode


def numerical_gradient(f, a, h=1e-5):
    """d f / d a by central differences, perturbing ``a`` in place one entry at a time."""
    grad = np.zeros_like(a)
    flat = a.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic, numeric, floor=1e-6):
    """Max-abs difference scaled by the larger max-abs magnitude of the two tensors.

    The scale never drops below ``floor``, so gradients that are identically
    zero (e.g. a key bias under softmax shift invariance) are compared absolutely.
    """
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def gradient_check(layer, x, mode=DropoutMode.TRAIN, seed=0, h=1e-5, check_input=True):
    """Compare backward() with finite differences of ``sum(layer(x) * R)``.

    ``R`` is a fixed random projection. Every pass re-seeds the dropout
    stream identically so stochastic layers see the same masks. Returns the
    relative error per parameter name plus ``"input"``.
    """
    x = np.array(x, dtype=np.float64)
    probe = layer.forward(x, Context(mode, rng=np.random.default_rng(seed)))
    proj = np.random.default_rng(seed + 1).standard_normal(probe.shape)

    def objective():
        ctx = Context(mode, rng=np.random.default_rng(seed))
        return float((layer.forward(x, ctx) * proj).sum())

    ctx = Context(mode, rng=np.random.default_rng(seed), record=True)
    layer.forward(x, ctx)
    layer.zero_grad()
    dx = layer.backward(proj, ctx)
    errors = {}
    for name, owner, key in list(layer.named_parameters()):
        analytic = owner.grads[key].copy()
        errors[name] = relative_error(analytic, numerical_gradient(objective, owner.params[key], h))
    if check_input and dx is not None:
        errors["input"] = relative_error(dx, numerical_gradient(objective, x, h))
    return errors
