"""Differentiable building blocks for the model: activations, normalization, convolution, losses."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from ..errors import ShapeError
from .core import Tensor, as_tensor, make_result, matmul, mul, sqrt, sum_

# Evaluation-mode RReLU slope: midpoint of the default (1/8, 1/3) bounds.
RRELU_LOWER = 1.0 / 8.0
RRELU_UPPER = 1.0 / 3.0
RRELU_SLOPE = (RRELU_LOWER + RRELU_UPPER) / 2.0

_SQRT_2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return make_result(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def rrelu(x, slope: float = RRELU_SLOPE) -> Tensor:
    """Randomized leaky ReLU in its deterministic (evaluation) form."""
    x = as_tensor(x)
    factor = np.where(x.data >= 0, 1.0, slope)
    return make_result(x.data * factor, (x,), lambda g: (g * factor,), "rrelu")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return make_result(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return make_result(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def gelu(x) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT_2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
    return make_result(x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),), "gelu")


_NONLINEARITIES = {
    "rrelu-eval": rrelu,
    "tanh": tanh,
    "gelu": gelu,
    "sigmoid": sigmoid,
    "relu": relu,
}


def nonlinearity(tag: str, x) -> Tensor:
    try:
        fn = _NONLINEARITIES[tag]
    except KeyError:
        raise ValueError(f"unknown nonlinearity {tag!r}; expected one of {sorted(_NONLINEARITIES)}") from None
    return fn(x)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.shape[axis] == 0:
        raise ShapeError("softmax over an empty axis")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)
    return make_result(out, (x,), backward, "softmax")


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.shape[axis] == 0:
        raise ShapeError("log_softmax over an empty axis")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)
    return make_result(out, (x,), backward, "log_softmax")


def cross_entropy(logits, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under softmax(logits)."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    batch, classes = logits.shape
    if batch == 0:
        raise ShapeError("cross_entropy over an empty batch")
    if targets.min() < 0 or targets.max() >= classes:
        raise IndexError(f"target index out of range [0, {classes})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(batch)
    loss = -logp[rows, targets].mean()

    def backward(g):
        grad = np.exp(logp)
        grad[rows, targets] -= 1.0
        return (grad * (g / batch),)
    return make_result(np.asarray(loss), (logits,), backward, "cross_entropy")


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last dimension, then apply ``gain * xhat + bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if x.ndim < 1:
        raise ShapeError("layer_norm needs at least one dimension")
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        dxhat = g * gain.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)
    return make_result(out, (x, gain, bias), backward, "layer_norm")


def geglu(x, w_a, w_b) -> Tensor:
    """Gated linear unit with GELU gate: (x W_a) * gelu(x W_b)."""
    return mul(matmul(x, w_a), gelu(matmul(x, w_b)))


def conv1d(x, kernels, bias=None) -> Tensor:
    """Same-padded 1-D cross-correlation.

    ``x`` is (channels, width) or (batch, channels, width); ``kernels`` is
    (out_channels, channels, k) with odd ``k``.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or kernels.ndim != 3 or kernels.shape[1] != xd.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} vs kernels {kernels.shape}")
    out_ch, in_ch, k = kernels.shape
    if k % 2 == 0:
        raise ShapeError("conv1d needs an odd kernel width to preserve length")
    pad = (k - 1) // 2
    batch, _, width = xd.shape
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad)))
    cols = sliding_window_view(xp, k, axis=2)              # (B, C, W, k)
    cols = cols.transpose(0, 2, 1, 3).reshape(batch, width, in_ch * k)
    kmat = kernels.data.reshape(out_ch, in_ch * k)
    out = (cols @ kmat.T).transpose(0, 2, 1)               # (B, O, W)
    parents = [x, kernels]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None]
        parents.append(bias)

    def backward(g):
        g = g[None] if squeeze else g
        gt = g.transpose(0, 2, 1)                           # (B, W, O)
        dk = (gt.reshape(-1, out_ch).T @ cols.reshape(-1, in_ch * k)).reshape(kernels.shape)
        dcols = (gt @ kmat).reshape(batch, width, in_ch, k)
        dxp = np.zeros_like(xp)
        for j in range(k):
            dxp[:, :, j:j + width] += dcols[:, :, :, j].transpose(0, 2, 1)
        dx = dxp[:, :, pad:pad + width]
        grads = [dx[0] if squeeze else dx, dk]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return grads
    return make_result(out[0] if squeeze else out, parents, backward, "conv1d")


def dropout(x, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity outside training or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an explicit rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return make_result(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


def segment_softmax(logits, segment_ids, num_segments: int) -> Tensor:
    """Softmax of a 1-D score vector within each segment (e.g. a node's in-edges)."""
    logits = as_tensor(logits)
    seg = np.asarray(segment_ids, dtype=np.int64)
    if logits.ndim != 1 or seg.shape != logits.shape:
        raise ShapeError("segment_softmax expects 1-D logits with matching segment ids")
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, seg, logits.data)
    e = np.exp(logits.data - seg_max[seg])
    denom = np.bincount(seg, weights=e, minlength=num_segments)
    out = e / denom[seg]

    def backward(g):
        dot = np.bincount(seg, weights=g * out, minlength=num_segments)
        return (out * (g - dot[seg]),)
    return make_result(out, (logits,), backward, "segment_softmax")


def l2_normalize(x, axis: int = -1, eps: float = 1e-12) -> Tensor:
    x = as_tensor(x)
    norm = sqrt(sum_(mul(x, x), axis=axis, keepdims=True) + eps)
    return x / norm


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight.T (+ bias)`` with weight stored as (out, in)."""
    out = matmul(x, weight.T)
    return out if bias is None else out + bias
