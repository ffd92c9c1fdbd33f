"""Desk-scale spiking-network trainer with learnable membrane time constants."""

from .neuron import (a_from_tau, charge, clamp_k, fire, reset, surrogate_grad,
                     NeuronLayer)
from .layers import build_network, Context, Network, vote
from .loss import encode_target, mse_loss, predict, split_train_val
from .optim import Adam, cosine_lr
from .config import TrainConfig

__all__ = [
    "a_from_tau", "charge", "clamp_k", "fire", "reset", "surrogate_grad",
    "NeuronLayer", "build_network", "Context", "Network", "vote",
    "encode_target", "mse_loss", "predict", "split_train_val",
    "Adam", "cosine_lr", "TrainConfig",
]

__version__ = "0.1.0"
