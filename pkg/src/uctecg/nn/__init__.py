"""Numpy neural-network core: layers with explicit backward passes, training, checkpoints."""

from .attention import LayerNorm, MultiHeadAttention, PositionalEmbedding, TransformerEncoder, TransformerEncoderLayer
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .container import Parallel, Sequential, SpectrogramFeatures
from .core import (
    AdaptiveAvgPool1d,
    BatchNorm1d,
    Context,
    Conv1d,
    Dropout,
    DropoutMode,
    Flatten,
    LastStep,
    Layer,
    Linear,
    MaxPool1d,
    Patchify,
    ReLU,
    Reshape,
    Softmax,
    TemporalMean,
    layer_from_spec,
    softmax,
)
from .gradcheck import gradient_check, numerical_gradient
from .recurrent import Lstm
from .train import SGD, Adam, TrainConfig, TrainResult, cross_entropy, loss_and_grads, parameter_gradients, train

__all__ = [
    "AdaptiveAvgPool1d", "Adam", "BatchNorm1d", "Checkpoint", "Context", "Conv1d", "Dropout", "DropoutMode",
    "Flatten", "LastStep", "Layer", "LayerNorm", "Linear", "Lstm", "MaxPool1d", "MultiHeadAttention",
    "Parallel", "Patchify", "PositionalEmbedding", "ReLU", "Reshape", "SGD", "Sequential", "Softmax",
    "SpectrogramFeatures", "TemporalMean", "TrainConfig", "TrainResult", "TransformerEncoder",
    "TransformerEncoderLayer", "cross_entropy", "gradient_check", "layer_from_spec", "load_checkpoint",
    "loss_and_grads", "numerical_gradient", "parameter_gradients", "save_checkpoint", "softmax", "train",
]
