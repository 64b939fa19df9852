"""Minimal differentiable tensor core: convolution, ReLU, pooling, linear
layers, softmax losses, reverse-mode gradients and optimizers."""
from . import functional
from .layers import Conv2d, ConvSpec, Linear, Module
from .optim import SGD, Adam, NonFiniteGradientError
from .tensor import GraphError, Parameter, Tensor, no_grad

__all__ = [
    "functional", "Conv2d", "ConvSpec", "Linear", "Module", "SGD", "Adam",
    "NonFiniteGradientError", "GraphError", "Parameter", "Tensor", "no_grad",
]
