"""
Updating strategies on a drifting fleet
=======================================

Five phases of 4000 windows with 1% failures.  The failing class drifts a
little each phase.  We retrain at every boundary with each strategy and compare
F1 per phase.  One seed keeps the demo short; the acceptance suite uses five.
"""

import logging

from uplearn.datagen import GeneratorConfig
from uplearn.evaluate import BENCHMARK_TRAIN, aggregate, degradation, render_series, render_text, run_grid

logging.basicConfig(level=logging.ERROR)

pairs = run_grid(GeneratorConfig(), BENCHMARK_TRAIN, seeds=[0], archs=["linear", "mlp:16"])
docs = [doc for doc, _ in pairs]

###############################################################################
# Per-model table; the last column averages phases 3 to 5

agg = aggregate(docs, first_phase=3)
print(render_text(agg))

###############################################################################
# Retraining on mitigated labels as if they were failures slowly erodes F1

first, last = degradation(agg, "naive")
print(f"naive: {100 * first:.1f} -> {100 * last:.1f}")
print(render_series(agg, "naive"))

###############################################################################
# Where the training time goes at the last refit

for _, t in pairs:
    print(f"{t['strategy']:<8} {t['arch']:<7} {1e3 * t['boundaries']['4']:.1f} ms/epoch")
