"""
From telemetry CSV to phased windows
====================================

The generator can persist a fleet in the same daily-row CSV layout the loader
reads, which makes it easy to try the pipeline on your own exports.
"""

import tempfile
from pathlib import Path

import numpy as np

from uplearn.datagen import GeneratorConfig, channel_names, generate_fleet, write_fleet_csv
from uplearn.ingest import IngestConfig, read_csv

cfg = GeneratorConfig(seed=3, records_per_phase=200, imbalance_rate=0.05)
fleet = generate_fleet(cfg)

with tempfile.TemporaryDirectory() as tmp:
    paths = write_fleet_csv(tmp, fleet, channel_names(cfg))
    print(Path(paths[0]).read_text().splitlines()[:3])

    result = read_csv(IngestConfig(
        path=tuple(map(str, paths)),
        feature_columns=channel_names(cfg),
        window_length=cfg.l,
        phases=cfg.phases,
        horizon_days=0,
    ))

###############################################################################
# Same records, now z-scored with phase-1 statistics

print(result.report.phase_edges)
print("mean", np.round(result.stats.mean, 3))
print("std ", np.round(result.stats.std, 3))
for ds in result.phases:
    print(ds.phase, len(ds), ds.positive_count, np.round(ds.X.mean(), 3))
