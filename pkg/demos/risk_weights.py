"""
Three ways to weight uncertain positives
========================================

Each strategy turns a partitioned pool into a weighted batch for binary cross
entropy.  Printing the batches side by side shows where they differ.
"""

import numpy as np

from uplearn import ClassPrior, naive_loss, standard_loss, uptake_loss
from uplearn.model import Arch, ModelState, loss

# identity scorer: the window [[logit(p)]] is scored exactly p
ident = ModelState(Arch("linear"), [1.0, 0.0], (1, 1))


def window(p):
    return np.array([[np.log(p / (1 - p))]])


X_p = [window(0.9)]
X_n = [window(0.1), window(0.2)]
X_u = [window(0.5), window(0.7)]
prior = ClassPrior(0.7)

batches = {
    "certain only": standard_loss(X_p, X_n),
    "naive": naive_loss(X_p, X_n, X_u),
    "uptake (as written)": uptake_loss(X_p, X_n, X_u, prior),
    "uptake (full weight)": uptake_loss(X_p, X_n, X_u, prior, certain_full_weight=True),
}

for name, b in batches.items():
    print(f"{name:<22} loss={loss(ident, b):.6f}")
    for w, y in zip(b.weights, b.targets):
        print(f"    weight {w:.4f}  target {y}")

###############################################################################
# With no uncertain records and the empirical prior the estimator reduces to
# the plain mean loss

empirical = ClassPrior(len(X_p) / (len(X_p) + len(X_n)))
print(loss(ident, uptake_loss(X_p, X_n, [], empirical)), loss(ident, standard_loss(X_p, X_n)))
