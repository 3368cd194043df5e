"""The four heartbeat classifiers as layer stacks.

All models take a ``(batch, 187)`` array of raw segments and end in a
Softmax over ``num_classes``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import SEGMENT_LENGTH
from .dsp import StftConfig
from .errors import ConfigError
from .nn import (
    AdaptiveAvgPool1d,
    BatchNorm1d,
    Conv1d,
    Dropout,
    Flatten,
    LastStep,
    Linear,
    Lstm,
    MaxPool1d,
    Parallel,
    Patchify,
    PositionalEmbedding,
    ReLU,
    Reshape,
    Sequential,
    Softmax,
    SpectrogramFeatures,
    TemporalMean,
    TransformerEncoder,
)

ARCHITECTURES = ("lstm", "cnn1d", "transformer", "uctecg")

CNN1D_FLAT_DIM = 1536
MODEL_DIM = 128
NUM_HEADS = 2
NUM_ENCODER_LAYERS = 2


@dataclass
class ArchitectureSpec:
    kind: str
    num_classes: int
    dropout_rate: float = 0.2
    transformer_patch_len: int | None = None
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if self.kind not in ARCHITECTURES:
            raise ConfigError(f"arch must be one of {ARCHITECTURES}, got {self.kind!r}")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if isinstance(self.stft, dict):
            self.stft = StftConfig(**self.stft)

    def to_dict(self):
        return {"kind": self.kind, "num_classes": self.num_classes, "dropout_rate": self.dropout_rate,
                "transformer_patch_len": self.transformer_patch_len, "stft": self.stft.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _check_classes(num_classes):
    if num_classes < 2:
        raise ConfigError("num_classes must be >= 2")


def build_lstm(num_classes, dropout_rate=0.2, rng=None):
    _check_classes(num_classes)
    rng = rng if rng is not None else np.random.default_rng(0)
    return Sequential([
        Reshape((SEGMENT_LENGTH, 1)),
        Lstm(1, 64, 2, rng=rng),
        LastStep(),
        Dropout(dropout_rate),
        Linear(64, 16, rng),
        ReLU(),
        Dropout(dropout_rate),
        Linear(16, num_classes, rng),
        Softmax(),
    ])


def build_cnn1d(num_classes, dropout_rate=0.2, rng=None):
    _check_classes(num_classes)
    rng = rng if rng is not None else np.random.default_rng(0)
    conv1 = Conv1d(1, 16, 3, padding=2, rng=rng)
    conv2 = Conv1d(16, 32, 3, padding=2, rng=rng)
    length = conv1.output_length(SEGMENT_LENGTH) // 2
    length = conv2.output_length(length) // 2
    flat = 32 * length
    assert flat == CNN1D_FLAT_DIM, flat
    return Sequential([
        Reshape((1, SEGMENT_LENGTH)),
        conv1, BatchNorm1d(16), ReLU(), MaxPool1d(2),
        conv2, BatchNorm1d(32), ReLU(), MaxPool1d(2),
        Flatten(),
        Dropout(dropout_rate),
        Linear(flat, 16, rng),
        ReLU(),
        Linear(16, num_classes, rng),
        Softmax(),
    ])


def build_transformer(num_classes, patch_len=None, dropout_rate=0.2, rng=None):
    """Whole-segment token by default; with ``patch_len`` the segment is cut into patches."""
    _check_classes(num_classes)
    rng = rng if rng is not None else np.random.default_rng(0)
    if patch_len is None:
        tokens, token_dim = 1, SEGMENT_LENGTH
        front = [Reshape((1, SEGMENT_LENGTH))]
    else:
        patchify = Patchify(patch_len, SEGMENT_LENGTH)
        tokens, token_dim = patchify.num_patches, patch_len
        front = [patchify]
    return Sequential(front + [
        Linear(token_dim, MODEL_DIM, rng),
        PositionalEmbedding(tokens, MODEL_DIM),
        TransformerEncoder(MODEL_DIM, NUM_HEADS, NUM_ENCODER_LAYERS, dropout_rate=dropout_rate, rng=rng),
        TemporalMean(),
        Linear(MODEL_DIM, 16, rng),
        ReLU(),
        Dropout(dropout_rate),
        Linear(16, num_classes, rng),
        Softmax(),
    ])


def build_uctecg(num_classes, stft=None, dropout_rate=0.2, rng=None):
    """Dual-branch network: raw-signal convolutions in parallel with a spectrogram transformer."""
    _check_classes(num_classes)
    stft = stft or StftConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    frames, bins = stft.shape(SEGMENT_LENGTH)
    conv_branch = [Reshape((1, SEGMENT_LENGTH))]
    for in_ch in (1, 64, 64, 64):
        conv_branch += [Conv1d(in_ch, 64, 3, padding=1, rng=rng), ReLU()]
    conv_branch += [AdaptiveAvgPool1d(1), Flatten()]
    spec_branch = [
        SpectrogramFeatures(stft, SEGMENT_LENGTH),
        Linear(bins, MODEL_DIM, rng),
        PositionalEmbedding(frames, MODEL_DIM),
        TransformerEncoder(MODEL_DIM, NUM_HEADS, NUM_ENCODER_LAYERS, dropout_rate=dropout_rate, rng=rng),
        TemporalMean(),
    ]
    fused = 64 + MODEL_DIM
    return Sequential([
        Parallel([Sequential(conv_branch), Sequential(spec_branch)]),
        Dropout(dropout_rate),
        Linear(fused, 64, rng),
        ReLU(),
        Dropout(dropout_rate),
        Linear(64, num_classes, rng),
        Softmax(),
    ])


def build_model(arch: ArchitectureSpec, seed: int = 0):
    rng = np.random.default_rng(seed)
    if arch.kind == "lstm":
        return build_lstm(arch.num_classes, arch.dropout_rate, rng)
    if arch.kind == "cnn1d":
        return build_cnn1d(arch.num_classes, arch.dropout_rate, rng)
    if arch.kind == "transformer":
        return build_transformer(arch.num_classes, arch.transformer_patch_len, arch.dropout_rate, rng)
    return build_uctecg(arch.num_classes, arch.stft, arch.dropout_rate, rng)


def has_dropout(model) -> bool:
    """True when any Dropout layer has a positive rate (MC sampling is non-degenerate)."""
    return any(isinstance(layer, Dropout) and layer.rate > 0 for _, layer in model.named_layers())


def set_dropout_rate(model, rate: float):
    """Set every Dropout layer (including attention dropout) to ``rate``."""
    for _, layer in model.named_layers():
        if isinstance(layer, Dropout):
            layer.rate = rate
    for _, layer in model.named_layers():
        if hasattr(layer, "dropout_rate"):
            layer.dropout_rate = rate
