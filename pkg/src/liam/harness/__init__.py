"""Training, evaluation, checkpointing, configuration and the command line."""
from .checkpoint import Checkpoint, CheckpointError, ConfigMismatchError, load_checkpoint, save_checkpoint
from .config import ConfigError, TrainConfig, load_config
from .evaluate import evaluate_sequences, format_grid, map_ablation, zero_shot_chance
from .metrics import accuracy, macro_f1
from .train import PairPool, pretrain, run_training, train_e2e

__all__ = [
    "Checkpoint", "CheckpointError", "PairPool", "ConfigError", "ConfigMismatchError", "TrainConfig", "accuracy",
    "evaluate_sequences", "format_grid", "load_checkpoint", "load_config", "macro_f1", "map_ablation", "pretrain",
    "run_training", "save_checkpoint", "train_e2e", "zero_shot_chance",
]
