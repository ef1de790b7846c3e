"""hyperx: hypercomplex neural layers with Kronecker-sum weights, a small
float64 autodiff engine, signal preprocessing and a training pipeline for
multimodal physiological classification."""

from . import dataset, layers, model, sigproc, tensor, trainer
from .layers import PHCLayer, PHMLayer, hamilton_matrices
from .model import H2Model, ModelConfig
from .tensor import Tensor, grad_check
from .trainer import TrainConfig, evaluate, one_cycle, train

__version__ = "0.1.0"

__all__ = [
    "dataset",
    "layers",
    "model",
    "sigproc",
    "tensor",
    "trainer",
    "Tensor",
    "grad_check",
    "PHMLayer",
    "PHCLayer",
    "hamilton_matrices",
    "H2Model",
    "ModelConfig",
    "TrainConfig",
    "train",
    "evaluate",
    "one_cycle",
]
