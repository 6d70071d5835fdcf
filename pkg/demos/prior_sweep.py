"""
Sensitivity to the class prior
==============================

The uptake estimator splits every uncertain positive between the two classes
using a prior.  By default the prior is the phase-1 validation precision.  Here
we fix it to each value on a grid and see how much that choice matters.
"""

import logging

from uplearn.datagen import GeneratorConfig, generate_fleet
from uplearn.evaluate import BENCHMARK_TRAIN, parse_grid, sweep_pi_p

logging.basicConfig(level=logging.ERROR)

phases = generate_fleet(GeneratorConfig(seed=0))
res = sweep_pi_p(phases, "linear", BENCHMARK_TRAIN, parse_grid("0:1:0.1"))

for v, f in zip(res.grid, res.f1):
    bar = "#" * int(round(50 * (f or 0.0)))
    print(f"{v:.1f}  {100 * (f or 0.0):5.1f}  {bar}")
print(f"estimated prior {res.auto_pi_p:.3f} gives F1 {100 * res.auto_f1:.1f}")
