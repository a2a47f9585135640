"""Neural assignment solvers with a doubly-stochastic output layer.

The package trains small fully-connected networks whose last layer is a
cascaded Sinkhorn normalization, so the raw output is already (nearly) a
permutation matrix.  Training needs no labelled optima: the objective is the
task cost itself, differentiated through the normalization.  Exact solvers
(Hungarian, brute force) ship alongside for hardening and for measuring how
close the learned models get.

Two problem families are included: linear-sum assignment with uniform random
costs, and joint user-association plus power control in a small cell network
scored by WMMSE-style sum rates.
"""

from .nn import (DenseLayer, Gradients, MlpParams, backward, count_forward_ops,
                 forward, init_params, load_params, save_params, sgd_step)
from .opcount import OpCounter
from .oracles import Permutation, affinity, brute_force_min, harden, hungarian_min
from .sinkhorn import (SinkhornConfig, SinkhornTape, affinity_trace,
                       cascaded_activation, sinkhorn_backward, sinkhorn_operator)
from .training import (CellProblem, EvalMetrics, JointModel, LsapModel,
                       LsapProblem, TrainConfig, TrainingDiverged, evaluate,
                       load_checkpoint, make_test_set, save_checkpoint, train)

__version__ = "0.1.0"

__all__ = [
    "CellProblem", "DenseLayer", "EvalMetrics", "Gradients", "JointModel",
    "LsapModel", "LsapProblem", "MlpParams", "OpCounter", "Permutation",
    "SinkhornConfig", "SinkhornTape", "TrainConfig", "TrainingDiverged",
    "affinity", "affinity_trace", "backward", "brute_force_min",
    "cascaded_activation", "count_forward_ops", "evaluate", "forward",
    "harden", "hungarian_min", "init_params", "load_checkpoint", "load_params",
    "make_test_set", "save_checkpoint", "save_params", "sgd_step",
    "sinkhorn_backward", "sinkhorn_operator", "train",
]
