"""Uncertainty-aware heartbeat classification.

Four classifiers (LSTM, 1-D CNN, transformer, and a convolution + spectrogram
transformer hybrid) built on a small numpy network core, with MC dropout,
deep-ensemble and ensemble-MC-dropout uncertainty and the uncertainty
confusion-matrix metrics.
"""

__version__ = "0.1.0"
