"""Forward and backward passes for the convolutional and classifier layers.

Every backward function takes the upstream gradient plus whatever the
forward consumed (input and parameters) and returns exact analytic
gradients. Layout is N x C x H x W throughout; convolutions are centered
cross-correlations, computed directly as a sum over kernel taps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericError, ParameterError, ShapeError


@dataclass
class ConvParams:
    """kernel: standard/pointwise ``N_out x M x Dk x Dk``, depthwise ``M x Dk x Dk``."""

    kernel: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: str = "same"

    def __post_init__(self):
        if self.stride < 1:
            raise ParameterError(f"stride must be >= 1, got {self.stride}")
        if self.padding not in ("same", "valid"):
            raise ParameterError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        dk = self.kernel.shape[-1]
        if self.kernel.shape[-2] != dk:
            raise ShapeError(f"kernel must be square, got {self.kernel.shape}")
        if self.padding == "same" and dk % 2 == 0:
            raise ParameterError(f"'same' padding needs an odd kernel, got Dk={dk}")


@dataclass
class DenseParams:
    weight: np.ndarray  # C_out x C_in
    bias: np.ndarray    # C_out


def _out_extent(n: int, dk: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-n // stride)
    if n < dk:
        raise ShapeError(f"'valid' convolution needs extent >= {dk}, got {n}")
    return (n - dk) // stride + 1


def _pad(x: np.ndarray, dk: int, padding: str) -> np.ndarray:
    if padding == "valid" or dk == 1:
        return x
    r = dk // 2
    return np.pad(x, ((0, 0), (0, 0), (r, r), (r, r)))


def _taps(x: np.ndarray, dk: int, stride: int, padding: str):
    """Yield (p, q, window) where window is the strided input slice seen by tap (p, q)."""
    _, _, h, w = x.shape
    ho = _out_extent(h, dk, stride, padding)
    wo = _out_extent(w, dk, stride, padding)
    xp = _pad(x, dk, padding)
    for p in range(dk):
        for q in range(dk):
            ys = slice(p, p + stride * (ho - 1) + 1, stride)
            xs = slice(q, q + stride * (wo - 1) + 1, stride)
            yield p, q, ys, xs, xp


def _unpad(gxp: np.ndarray, x_shape, dk: int, padding: str) -> np.ndarray:
    if padding == "valid" or dk == 1:
        return gxp
    r = dk // 2
    return gxp[:, :, r:r + x_shape[2], r:r + x_shape[3]]


def _check_input(x: np.ndarray, channels: int, layer: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{layer}: expected N x C x H x W input, got shape {x.shape}")
    if x.shape[1] != channels:
        raise ShapeError(f"{layer}: input has {x.shape[1]} channels, kernel expects {channels}")


# -- standard convolution ---------------------------------------------------

def conv_standard_fwd(x: np.ndarray, p: ConvParams) -> np.ndarray:
    k = p.kernel
    if k.ndim != 4:
        raise ShapeError(f"standard conv kernel must be N_out x M x Dk x Dk, got {k.shape}")
    n_out, m, dk, _ = k.shape
    _check_input(x, m, "conv_standard")
    out = None
    for i, j, ys, xs, xp in _taps(x, dk, p.stride, p.padding):
        contrib = np.tensordot(xp[:, :, ys, xs], k[:, :, i, j], axes=([1], [1]))  # N x H' x W' x N_out
        out = contrib if out is None else out + contrib
    out = out.transpose(0, 3, 1, 2)
    if p.bias is not None:
        out = out + p.bias[None, :, None, None]
    return np.ascontiguousarray(out)


def conv_standard_bwd(dout: np.ndarray, x: np.ndarray, p: ConvParams):
    """Returns (dx, dkernel, dbias); dbias is None when the layer has no bias."""
    k = p.kernel
    dk = k.shape[-1]
    dk_grad = np.zeros_like(k)
    gxp = np.zeros_like(_pad(x, dk, p.padding))
    g = dout.transpose(0, 2, 3, 1)  # N x H' x W' x N_out
    for i, j, ys, xs, xp in _taps(x, dk, p.stride, p.padding):
        dk_grad[:, :, i, j] = np.tensordot(g, xp[:, :, ys, xs], axes=([0, 1, 2], [0, 2, 3]))
        gxp[:, :, ys, xs] += np.tensordot(g, k[:, :, i, j], axes=([3], [0])).transpose(0, 3, 1, 2)
    db = dout.sum(axis=(0, 2, 3)) if p.bias is not None else None
    return _unpad(gxp, x.shape, dk, p.padding), dk_grad, db


# -- depthwise convolution --------------------------------------------------

def conv_depthwise_fwd(x: np.ndarray, p: ConvParams) -> np.ndarray:
    k = p.kernel
    if k.ndim != 3:
        raise ShapeError(f"depthwise kernel must be M x Dk x Dk, got {k.shape}")
    m, dk, _ = k.shape
    _check_input(x, m, "conv_depthwise")
    out = None
    for i, j, ys, xs, xp in _taps(x, dk, p.stride, p.padding):
        contrib = xp[:, :, ys, xs] * k[None, :, i, j, None, None]
        out = contrib if out is None else out + contrib
    if p.bias is not None:
        out = out + p.bias[None, :, None, None]
    return out


def conv_depthwise_bwd(dout: np.ndarray, x: np.ndarray, p: ConvParams):
    k = p.kernel
    dk = k.shape[-1]
    dk_grad = np.zeros_like(k)
    gxp = np.zeros_like(_pad(x, dk, p.padding))
    for i, j, ys, xs, xp in _taps(x, dk, p.stride, p.padding):
        dk_grad[:, i, j] = np.einsum("nchw,nchw->c", dout, xp[:, :, ys, xs])
        gxp[:, :, ys, xs] += dout * k[None, :, i, j, None, None]
    db = dout.sum(axis=(0, 2, 3)) if p.bias is not None else None
    return _unpad(gxp, x.shape, dk, p.padding), dk_grad, db


# -- pointwise convolution --------------------------------------------------

def _pointwise_kernel(p: ConvParams) -> np.ndarray:
    k = p.kernel
    if k.ndim != 4 or k.shape[2:] != (1, 1):
        raise ParameterError(f"pointwise conv needs an N_out x M x 1 x 1 kernel, got {k.shape}")
    return k[:, :, 0, 0]


def conv_pointwise_fwd(x: np.ndarray, p: ConvParams) -> np.ndarray:
    w = _pointwise_kernel(p)
    _check_input(x, w.shape[1], "conv_pointwise")
    if p.stride > 1:
        x = x[:, :, ::p.stride, ::p.stride]
    out = np.tensordot(x, w, axes=([1], [1])).transpose(0, 3, 1, 2)
    if p.bias is not None:
        out = out + p.bias[None, :, None, None]
    return np.ascontiguousarray(out)


def conv_pointwise_bwd(dout: np.ndarray, x: np.ndarray, p: ConvParams):
    w = _pointwise_kernel(p)
    xs = x[:, :, ::p.stride, ::p.stride] if p.stride > 1 else x
    dw = np.tensordot(dout, xs, axes=([0, 2, 3], [0, 2, 3]))
    dxs = np.tensordot(dout, w, axes=([1], [0])).transpose(0, 3, 1, 2)
    if p.stride > 1:
        dx = np.zeros_like(x)
        dx[:, :, ::p.stride, ::p.stride] = dxs
    else:
        dx = np.ascontiguousarray(dxs)
    db = dout.sum(axis=(0, 2, 3)) if p.bias is not None else None
    return dx, dw[:, :, None, None], db


# -- activations ------------------------------------------------------------

def relu_fwd(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_bwd(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dout * (x > 0)


def sigmoid_fwd(x: np.ndarray) -> np.ndarray:
    # two-branch form avoids overflow in exp for large |x|
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_bwd(dout: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``y`` is the sigmoid output."""
    return dout * y * (1.0 - y)


# -- depthwise-separable block ----------------------------------------------

def dsc_block_fwd(x: np.ndarray, depthwise: ConvParams, pointwise: ConvParams) -> np.ndarray:
    """depthwise -> ReLU -> pointwise -> ReLU."""
    return relu_fwd(conv_pointwise_fwd(relu_fwd(conv_depthwise_fwd(x, depthwise)), pointwise))


def dsc_block_bwd(dout: np.ndarray, x: np.ndarray, depthwise: ConvParams, pointwise: ConvParams):
    """Returns (dx, d_depthwise_kernel, d_depthwise_bias, d_pointwise_kernel, d_pointwise_bias)."""
    a = conv_depthwise_fwd(x, depthwise)
    h = relu_fwd(a)
    b = conv_pointwise_fwd(h, pointwise)
    db_pre = relu_bwd(dout, b)
    dh, dpw, dpw_b = conv_pointwise_bwd(db_pre, h, pointwise)
    dx, ddw, ddw_b = conv_depthwise_bwd(relu_bwd(dh, a), x, depthwise)
    return dx, ddw, ddw_b, dpw, dpw_b


# -- classifier head --------------------------------------------------------

def gap_fwd(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=(2, 3))


def gap_bwd(dout: np.ndarray, x_shape) -> np.ndarray:
    n, c, h, w = x_shape
    return np.broadcast_to((dout / (h * w))[:, :, None, None], (n, c, h, w)).copy()


def dense_fwd(z: np.ndarray, p: DenseParams) -> np.ndarray:
    if z.ndim != 2 or z.shape[1] != p.weight.shape[1]:
        raise ShapeError(f"dense: input {z.shape} does not match weight {p.weight.shape}")
    return z @ p.weight.T + p.bias


def dense_bwd(dout: np.ndarray, z: np.ndarray, p: DenseParams):
    """Returns (dz, dweight, dbias)."""
    return dout @ p.weight, dout.T @ z, dout.sum(axis=0)


def softmax_fwd(o: np.ndarray) -> np.ndarray:
    o = np.asarray(o, dtype=np.float64)
    if not np.all(np.isfinite(o)):
        raise NumericError("softmax: non-finite logits")
    e = np.exp(o - o.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(dout: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Full Jacobian-vector product: p * (g - <g, p>)."""
    return probs * (dout - (dout * probs).sum(axis=1, keepdims=True))
