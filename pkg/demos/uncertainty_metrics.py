# From per-beat entropies to uncertainty-aware scores
#
# A prediction counts as certain when its normalized entropy is at most a
# threshold. Crossing that with correctness gives four counts, and the
# uncertainty accuracy rewards being certain when right and unsure when wrong.

from pathlib import Path

import numpy as np

from uctecg.metrics import (
    ThresholdPolicy,
    UncertaintyConfusion,
    apply_threshold,
    check_published_row,
    load_published_rows,
    rounded_percentages,
    uncertainty_metrics,
)
from uctecg.uq import UqBatch

rng = np.random.default_rng(0)
n = 1000
labels = rng.integers(0, 2, n)
# Confident and mostly right, or hesitant and often wrong
confident = rng.random(n) < 0.85
p_true = np.where(confident, rng.uniform(0.9, 1.0, n), rng.uniform(0.3, 0.7, n))
probs = np.where(labels[:, None] == 1, np.c_[1 - p_true, p_true], np.c_[p_true, 1 - p_true])
batch = UqBatch.from_probs(probs, labels)

for t in (0.2, 0.5, 0.8, 1.0):
    conf, _ = apply_threshold(batch, policy=ThresholdPolicy(value=t))
    m = uncertainty_metrics(conf)
    print(f"threshold {t:.1f}: {conf.to_dict()}  UAcc {m.uacc:.3f}")

conf, t = apply_threshold(batch, policy=ThresholdPolicy("maximize-uacc-on-validation", seed=1))
print(f"swept threshold {t:.2f} on a held-out 20%: UAcc {uncertainty_metrics(conf).uacc:.3f}")

# Ratios with nothing to divide by stay undefined
print(uncertainty_metrics(UncertaintyConfusion(cc=50, cu=0, ic=0, iu=0)))

# Exact two-decimal percentages, checked against a published table of counts
print(rounded_percentages(UncertaintyConfusion(cc=2875, cu=9, ic=16, iu=11)))
table = Path(__file__).resolve().parent.parent / "tests" / "data" / "published_uq_counts.csv"
rows = load_published_rows(table)
print(sum(check_published_row(r).passed for r in rows), "of", len(rows), "published rows reproduce")
