"""Minimal deterministic CNN engine (numpy): 1D/2D/3D conv nets, three optimizers."""
from .network import (CNN_KINDS, LayerSpec, Network, NetworkError, NetworkSpec, NumericalError,
                      backward, build_cnn, cross_entropy, forward, init_network, loss_fn,
                      predict_proba)
from .optim import SGD, Adam, RMSProp, make_optimizer
from .train import LR_GRID, TrainConfig, TrainedNetwork, TrainingDiverged, train

__all__ = [
    "CNN_KINDS", "LayerSpec", "Network", "NetworkError", "NetworkSpec", "NumericalError",
    "backward", "build_cnn", "cross_entropy", "forward", "init_network", "loss_fn",
    "predict_proba", "SGD", "Adam", "RMSProp", "make_optimizer", "LR_GRID", "TrainConfig",
    "TrainedNetwork", "TrainingDiverged", "train",
]
