"""LSTM text-classification lab: tree-ordered inputs, Lp weight penalties, ReLU-gated cells."""

__version__ = "0.1.0"

from .reorder import apply_permutation, ngram_reorder_indices, reorder_indices, tree_order
from .lstm import CellVariant, LstmParams, NonlinearGateParams, init_params
from .regularization import RegSpec, RegTerm, lp_norm, reg_cost, sweep_spec
from .train import TrainConfig, evaluate, run_comparison, train_model

__all__ = [
    "__version__",
    "tree_order",
    "reorder_indices",
    "ngram_reorder_indices",
    "apply_permutation",
    "CellVariant",
    "LstmParams",
    "NonlinearGateParams",
    "init_params",
    "RegSpec",
    "RegTerm",
    "lp_norm",
    "reg_cost",
    "sweep_spec",
    "TrainConfig",
    "train_model",
    "evaluate",
    "run_comparison",
]
