"""
How mitigation hides labels
===========================

A deployed failure predictor triggers mitigation on every record it flags.
Once a node has been migrated we never learn whether it would have failed,
so the next training set holds three kinds of records: certain positives
(missed failures that happened), certain negatives, and uncertain positives.
"""

import numpy as np

from uplearn import LabeledRecord, PhaseDataset, partition_by_observed, run
from uplearn.model import Arch, TrainConfig, init_model

# five labelled instances to start from, and a second phase of five more;
# one window of one channel each so the model is easy to read
t1 = [LabeledRecord.create(f"#{i}", 1, [[x]], y)
      for i, (x, y) in enumerate([(-2.0, 0), (-1.0, 0), (1.5, 1), (2.0, 1), (-0.5, 0)], start=1)]
t2 = [
    LabeledRecord.create("#6", 2, [[-1.0]], 0),
    LabeledRecord.create("#7", 2, [[0.4]], 0),
    LabeledRecord.create("#8", 2, [[1.1]], 1),
    LabeledRecord.create("#9", 2, [[2.2]], 1),
    LabeledRecord.create("#10", 2, [[-0.3]], 1),
]
phases = [PhaseDataset(1, t1), PhaseDataset(2, t2)]

# a hand-set scorer: positive whenever x >= 0
model = init_model(Arch("linear"), (1, 1)).with_theta(np.array([1.0, 0.0]))

sim = run(phases, "naive", "linear", TrainConfig(decision_threshold=0.5), initial_model=model, keep_pools=True)

###############################################################################
# What the operator sees after phase 2

for r in sim.observed[2]:
    print(f"{r.id:>4}  x={r.window[0, 0]:+.1f}  {r.observed.value}")

X_p, X_n, X_u = partition_by_observed(sim.observed[2])
print("certain positives:", [r.id for r in X_p])
print("certain negatives:", [r.id for r in X_n])
print("uncertain        :", [r.id for r in X_u])

###############################################################################
# The evaluator still knows the truth: #7 was a false alarm and #10 a miss

rep = sim.report(2)
print(rep.confusion, f"precision={rep.precision:.2f} recall={rep.recall:.2f} f1={rep.f1:.2f}")
