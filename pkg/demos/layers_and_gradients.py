# Building a small network from layers and checking its gradients
#
# Layers are plain numpy objects with forward/backward passes. Every pass
# runs under a Context that fixes the dropout mode, so the same stack serves
# training, deterministic evaluation and Monte Carlo sampling.

import numpy as np

from uctecg.nn import (
    BatchNorm1d,
    Context,
    Conv1d,
    Dropout,
    DropoutMode,
    Flatten,
    Linear,
    MaxPool1d,
    ReLU,
    Reshape,
    Sequential,
    Softmax,
    gradient_check,
)

rng = np.random.default_rng(0)
net = Sequential([
    Reshape((1, 24)),
    Conv1d(1, 4, 3, padding=1, rng=rng), BatchNorm1d(4), ReLU(), MaxPool1d(2),
    Flatten(),
    Dropout(0.3),
    Linear(48, 3, rng),
    Softmax(),
])
print("parameters:", net.num_parameters())

x = rng.standard_normal((5, 24))
print("eval:", np.round(net.forward(x, Context(DropoutMode.EVAL))[0], 4))
for seed in (1, 2):
    p = net.forward(x, Context(DropoutMode.MC, rng=np.random.default_rng(seed)))
    print(f"MC pass {seed}:", np.round(p[0], 4))

# Analytic gradients against central differences, masks held fixed
errors = gradient_check(net, x, mode=DropoutMode.TRAIN, seed=3)
for name, err in errors.items():
    print(f"{name:22s} {err:.2e}")
