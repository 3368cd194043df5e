"""Short-time Fourier magnitude spectrograms of heartbeat segments."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import SEGMENT_LENGTH
from .errors import ConfigError

WINDOW_FUNCTIONS = ("hann", "hamming", "rectangular")


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 32
    hop: int = 4
    fft_len: int = 32
    window_fn: str = "hann"
    log_scale: bool = True

    def __post_init__(self):
        if not 0 < self.hop <= self.window_len <= self.fft_len:
            raise ConfigError("need 0 < hop <= window_len <= fft_len")
        if self.fft_len & (self.fft_len - 1):
            raise ConfigError(f"fft_len must be a power of two, got {self.fft_len}")
        if self.window_fn not in WINDOW_FUNCTIONS:
            raise ConfigError(f"window_fn must be one of {WINDOW_FUNCTIONS}")

    @property
    def num_bins(self) -> int:
        return self.fft_len // 2 + 1

    def num_frames(self, length: int = SEGMENT_LENGTH) -> int:
        if self.window_len > length:
            raise ConfigError(f"window_len {self.window_len} exceeds signal length {length}")
        return (length - self.window_len) // self.hop + 1

    def shape(self, length: int = SEGMENT_LENGTH) -> tuple[int, int]:
        return self.num_frames(length), self.num_bins

    def to_dict(self) -> dict:
        return asdict(self)


def window(name: str, n: int) -> np.ndarray:
    """Periodic (DFT-even) analysis window of length ``n``."""
    k = np.arange(n)
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2 * np.pi * k / n)
    if name == "hamming":
        return 0.54 - 0.46 * np.cos(2 * np.pi * k / n)
    if name == "rectangular":
        return np.ones(n)
    raise ConfigError(f"unknown window {name!r}")


@dataclass(frozen=True)
class Spectrogram:
    values: np.ndarray  # (frames, bins)

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def bins(self) -> int:
        return self.values.shape[1]


def frames(signals: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Split the last axis into hop-spaced windows; the tail shorter than a window is dropped."""
    signals = np.asarray(signals, dtype=np.float64)
    cfg.num_frames(signals.shape[-1])
    return sliding_window_view(signals, cfg.window_len, axis=-1)[..., :: cfg.hop, :]


def stft_magnitude(signals: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """One-sided STFT magnitude over the last axis, shape ``(..., frames, bins)``.

    With ``cfg.log_scale`` the magnitude is mapped through ``ln(1 + |X|)``.
    """
    windowed = frames(signals, cfg) * window(cfg.window_fn, cfg.window_len)
    mag = np.abs(np.fft.rfft(windowed, n=cfg.fft_len, axis=-1))
    return np.log1p(mag) if cfg.log_scale else mag


def spectrogram(record, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Spectrogram of a single record (or a bare 1-D sample array)."""
    samples = getattr(record, "samples", record)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ConfigError("spectrogram() takes one record; use stft_magnitude() for batches")
    return Spectrogram(stft_magnitude(samples, cfg))


def standardize(spec: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Zero-mean, unit-variance scaling over the last two axes (per spectrogram)."""
    mean = spec.mean(axis=(-2, -1), keepdims=True)
    std = spec.std(axis=(-2, -1), keepdims=True)
    return (spec - mean) / (std + eps)
