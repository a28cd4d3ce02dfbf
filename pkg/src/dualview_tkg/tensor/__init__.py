"""Minimal dense-tensor engine with reverse-mode automatic differentiation."""
from .core import (
    Tape, Tensor, add, as_tensor, concat, cos, div, elementwise, exp, log, matmul,
    mean, mul, neg, no_grad, reshape, segment_sum, slice_cols, sqrt, stack, sub,
    sum_, take, transpose, clip, is_grad_enabled,
)
from .functional import (
    conv1d, cross_entropy, dropout, gelu, geglu, l2_normalize, layer_norm, linear,
    log_softmax, nonlinearity, relu, rrelu, segment_softmax, sigmoid, softmax, tanh,
)
from .nn import GatedMLP, GRUCell, LayerNorm, Linear, Module, Parameter, tile_rows, xavier_uniform
from .optim import Adam, AdamState, adam_step
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import check_gradients, numerical_grad, relative_error

__all__ = [name for name in dir() if not name.startswith("_")]
