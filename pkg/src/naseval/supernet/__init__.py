"""Tiny recurrent-cell supernet: standalone ground truth and weight sharing."""

from .model import (
    ACTIVATION_CODES,
    EvalResult,
    NonFiniteError,
    SharedParams,
    TrainConfig,
    backward,
    evaluate,
    forward,
    init_params,
    loss_and_grad,
    sgd_step,
)
from .task import Splits, TaskSpec, make_splits, unigram_loss
from .training import (
    RunRecord,
    Sweep,
    ground_truth_table,
    rank_trajectory,
    standalone_run,
    standalone_sweep,
    table_from_sweep,
    train_standalone,
    train_weight_sharing,
    ws_ranking,
    ws_schedule,
)

__all__ = [
    "ACTIVATION_CODES", "EvalResult", "NonFiniteError", "SharedParams", "TrainConfig", "backward", "evaluate",
    "forward", "init_params", "loss_and_grad", "sgd_step", "Splits", "TaskSpec", "make_splits", "unigram_loss",
    "RunRecord", "Sweep", "ground_truth_table", "rank_trajectory", "standalone_run", "standalone_sweep",
    "table_from_sweep", "train_standalone", "train_weight_sharing", "ws_ranking", "ws_schedule",
]
