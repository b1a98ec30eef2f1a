"""Multi-scale transformer pyramid forecasting on a small numpy autodiff engine."""

from .decomposition import DecompositionConfig, decompose, moving_average
from .pyramid import MTPNet, PyramidConfig
from .tensor import Tensor, backward, grad_check, no_grad

__version__ = "0.1.0"
