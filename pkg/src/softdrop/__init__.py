"""Update-drop training for classification with open-set label noise.

Samples whose predictions swing between epochs (high probability
cross-entropy) are dropped from the gradient updates; the kept set is
chosen over the whole training set, and the classifier is a cosine softmax
trained with label smoothing.
"""
from softdrop._backend import available_backends, get_backend, set_backend
from softdrop.data import DatasetSpec, generate
from softdrop.errors import (ConfigError, ContractViolation, DegenerateInput,
                             SoftDropError, TrainingDiverged)
from softdrop.model import Model, forward
from softdrop.selection import (DropSchedule, drop_rate, overlap_rate,
                                prob_cross_entropy, select_global,
                                select_minibatch)
from softdrop.training import TrainConfig, evaluate, run_comparison, run_training

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContractViolation", "DatasetSpec", "DegenerateInput",
    "DropSchedule", "Model", "SoftDropError", "TrainConfig", "TrainingDiverged",
    "available_backends", "drop_rate", "evaluate", "forward", "generate",
    "get_backend", "overlap_rate", "prob_cross_entropy", "run_comparison",
    "run_training", "select_global", "select_minibatch", "set_backend",
]
