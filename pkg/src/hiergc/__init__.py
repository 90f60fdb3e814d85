"""Semi-supervised classification of graph instances in a hierarchical graph."""

from .graphs import (
    GraphInstance,
    HierarchicalGraph,
    load_dataset,
    normalize_adjacency,
    save_dataset,
    validate,
)
from .synthgen import GeneratorKind, SynthConfig, synthesize_dataset
from .training import TrainConfig, TrainReport, evaluate, train, train_seal, train_seal_ci

__version__ = "0.1.0"

__all__ = [
    "GraphInstance",
    "HierarchicalGraph",
    "GeneratorKind",
    "SynthConfig",
    "TrainConfig",
    "TrainReport",
    "load_dataset",
    "normalize_adjacency",
    "save_dataset",
    "synthesize_dataset",
    "train",
    "train_seal",
    "train_seal_ci",
    "evaluate",
    "validate",
    "__version__",
]
