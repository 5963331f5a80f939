"""Kernel conditional random fields for sequence labeling."""
from .chain import LabelAlphabet, LabeledSequence
from .data import Dataset, load_dataset
from .inference import ScoreTable, forward_backward, viterbi
from .kernels import KernelSpec
from .model import KernelCRFModel, cross_validate, fit
from .objective import BasisSet, DualObjective, TrainConfig
from .optimizer import TrainState, train

__all__ = [
    "BasisSet", "Dataset", "DualObjective", "KernelCRFModel", "KernelSpec",
    "LabelAlphabet", "LabeledSequence", "ScoreTable", "TrainConfig", "TrainState",
    "cross_validate", "fit", "forward_backward", "load_dataset", "train", "viterbi",
]
