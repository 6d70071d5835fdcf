"""Online failure-prediction model updating under uncertain positive labels."""
from .core import (
    ClassPrior,
    LabeledRecord,
    LabelError,
    Observed,
    Oracle,
    OracleAudit,
    PhaseDataset,
    oracle_access,
    partition_by_observed,
)
from .datagen import GeneratorConfig, generate_fleet
from .evaluate import aggregate, run_grid, sweep_pi_p
from .ingest import IngestConfig, load_csv
from .metrics import Confusion, f1, metrics, precision, recall
from .model import Arch, ModelState, TrainConfig, forward, grad, init_model, predict
from .risk import WeightedBatch, naive_loss, standard_loss, uptake_loss
from .simulate import PhaseReport, SimulationRun, Strategy, estimate_pi_p, run
from .train import TrainResult, fit, split_validation

__version__ = "0.1.0"
