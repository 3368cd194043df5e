# MC dropout, deep ensembles and their combination on synthetic beats
#
# Three small CNNs are trained on an ambiguous two-class synthetic corpus.
# Each UQ method then produces a mean distribution per beat, and its
# normalized entropy is compared between right and wrong predictions.

import numpy as np

from uctecg.data import PTB, SplitSpec, split
from uctecg.models import ArchitectureSpec, build_model
from uctecg.nn import TrainConfig, train
from uctecg.synthetic import make_beats
from uctecg.uq import UqConfig, batch_uq, mcd_predict

beats = make_beats(800, PTB, seed=1, ambiguity=0.55, class_probs=[0.3, 0.7])
train_set, test_set = split(beats, SplitSpec("stratified-random", 0.8, seed=0))
print("train", len(train_set), "test", len(test_set), "test classes", test_set.class_counts())

members = []
for seed in (1, 2, 3):
    model = build_model(ArchitectureSpec("cnn1d", num_classes=2), seed=seed)
    result = train(model, train_set, TrainConfig(epochs=6, seed=seed))
    print(f"member {seed}: final loss {result.loss_curve[-1]:.4f}")
    members.append(model)

# One beat, 30 stochastic passes through one member
single = mcd_predict(members[0], test_set[0].samples, T=30, seed=0)
print("one beat:", np.round(single.mean_probs, 4), "entropy %.4f nats" % single.entropy)

for method in ("mcd", "ensemble", "emcd"):
    out = batch_uq(members, test_set, UqConfig(method, T=20, N=3, base_seed=0))
    right = out.predicted == test_set.labels
    print(f"{method:9s} acc {right.mean():.3f}  "
          f"entropy right {out.entropy_normalized[right].mean():.3f}  "
          f"wrong {out.entropy_normalized[~right].mean():.3f}")
