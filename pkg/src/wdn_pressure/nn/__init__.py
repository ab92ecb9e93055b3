"""A small numpy neural-network engine for sequence regression."""

from .graph import GraphBuilder, GraphError, NetworkModel, Node, Tape, backward, forward
from .gradcheck import grad_check
from .io import WeightFileError, load_weights, save_weights
from .layers import LSTM, BatchNorm, Concat, Conv1D, Crop, Dense, LastStep, ShapeError
from .optim import AdamState, adam_step, mse_loss
from .train import EpochRecord, TrainConfig, TrainingError, train, write_history

__all__ = [
    "AdamState", "BatchNorm", "Concat", "Conv1D", "Crop", "Dense", "EpochRecord", "GraphBuilder",
    "GraphError", "LSTM", "LastStep", "NetworkModel", "Node", "ShapeError", "Tape",
    "TrainConfig", "TrainingError", "WeightFileError", "adam_step", "backward", "forward",
    "grad_check", "load_weights", "mse_loss", "save_weights", "train", "write_history",
]
