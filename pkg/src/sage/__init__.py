"""Inductive node embeddings by sampled neighborhood aggregation."""

__version__ = "0.1.0"

from .graph import Graph, LabelSet, build_graph, cap_degrees, clustering_coefficient, wl_refine
from .model import ModelConfig, ModelParams, init_params
from .sampling import build_minibatch_plan, generate_walks, sample_neighbors
from .training import TrainConfig, train_supervised, train_unsupervised

__all__ = [
    "Graph", "LabelSet", "build_graph", "cap_degrees", "clustering_coefficient",
    "wl_refine", "ModelConfig", "ModelParams", "init_params", "build_minibatch_plan",
    "generate_walks", "sample_neighbors", "TrainConfig", "train_supervised",
    "train_unsupervised", "__version__",
]
