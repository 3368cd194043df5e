"""Synthetic heartbeat segments for smoke tests and demos.

Each class has a prototype morphology (QRS width and amplitude, T-wave
amplitude and position). Records blend their class prototype with a random
other class by a per-record amount, so a tunable fraction of records is
genuinely ambiguous. Segments are min-max scaled and zero-padded at the tail,
like the public corpora.
"""

from __future__ import annotations

import numpy as np

from .data import PTB, SEGMENT_LENGTH, DatasetMeta, RecordSet

# qrs_width, qrs_amp, t_amp, t_pos, p_amp
_PROTOTYPES = np.array([
    [0.012, 1.00, 0.30, 0.35, 0.10],
    [0.030, 0.80, -0.25, 0.42, 0.00],
    [0.045, 1.20, -0.35, 0.30, 0.05],
    [0.022, 0.60, 0.15, 0.50, 0.15],
    [0.016, 0.90, 0.45, 0.38, -0.08],
])


def _beat(t, params, rng):
    qrs_w, qrs_a, t_a, t_pos, p_a = params
    x = qrs_a * np.exp(-0.5 * ((t - 0.06) / qrs_w) ** 2)
    x -= 0.15 * qrs_a * np.exp(-0.5 * ((t - 0.06 - 2.5 * qrs_w) / qrs_w) ** 2)
    x += t_a * np.exp(-0.5 * ((t - t_pos) / 0.05) ** 2)
    x += p_a * np.exp(-0.5 * ((t - 0.78) / 0.025) ** 2)
    x += 0.03 * rng.standard_normal(t.shape)
    return x


def make_beats(n, meta: DatasetMeta = PTB, seed=0, ambiguity=0.35, class_probs=None) -> RecordSet:
    """Draw ``n`` labelled synthetic segments for ``meta.num_classes`` classes.

    ``ambiguity`` is the upper bound of the blend weight toward another
    class; above 0.5 some records look more like the other class than their own.
    """
    rng = np.random.default_rng(seed)
    C = meta.num_classes
    if C > len(_PROTOTYPES):
        raise ValueError(f"at most {len(_PROTOTYPES)} synthetic classes")
    labels = rng.choice(C, size=n, p=class_probs)
    t = np.linspace(0.0, 1.5, SEGMENT_LENGTH)
    signals = np.zeros((n, SEGMENT_LENGTH))
    for i, y in enumerate(labels):
        other = rng.choice([c for c in range(C) if c != y])
        w = rng.uniform(0.0, ambiguity)
        params = (1 - w) * _PROTOTYPES[y] + w * _PROTOTYPES[other]
        params = params * rng.normal(1.0, 0.05, size=params.shape)
        beat = _beat(t, params, rng)
        beat = (beat - beat.min()) / (beat.max() - beat.min())
        keep = rng.integers(120, SEGMENT_LENGTH + 1)
        beat[keep:] = 0.0
        signals[i] = beat
    return RecordSet(signals, labels, meta)
