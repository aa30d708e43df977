"""Window classifiers: from-scratch nets, tree ensembles, and the dual-branch hybrid."""

from .base import (FAMILIES, NET_FAMILIES, RECURRENT_FAMILIES, TREE_FAMILIES,
                   BoostModel, CapabilityError, ForestModel, ModelSpec, NetModel,
                   OracleCounter, TrainedModel, TrainingError, input_jacobian,
                   predict_sequence, predict_window, train, window_instances,
                   hybrid_instances)
from .hybrid import BoundHybrid, HybridModel, train_hybrid
from .serialize import load_model, save_model

__all__ = [
    "FAMILIES", "NET_FAMILIES", "RECURRENT_FAMILIES", "TREE_FAMILIES",
    "BoostModel", "BoundHybrid", "CapabilityError", "ForestModel", "HybridModel",
    "ModelSpec", "NetModel", "OracleCounter", "TrainedModel", "TrainingError",
    "hybrid_instances", "input_jacobian", "load_model", "predict_sequence",
    "predict_window", "save_model", "train", "train_hybrid", "window_instances",
]
