"""Channel attention, spatial attention and their serial composition.

The refined map is ``Ms * (Mc * F)``: a per-channel gate from a shared
two-layer MLP over global average- and max-pooled descriptors, then a
per-position gate from a 7x7 convolution over channel-mean and
channel-max maps. Max-pool gradients go to the first maximal element in
row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .layers import ConvParams, conv_standard_bwd, conv_standard_fwd, relu_fwd, sigmoid_bwd, sigmoid_fwd
from .tensor import hadamard

SPATIAL_KERNEL = 7


def hidden_width(channels: int, reduction: int) -> int:
    return max(1, channels // reduction)


@dataclass
class ChannelAttnParams:
    w1: np.ndarray  # hidden x C
    w2: np.ndarray  # C x hidden

    def __post_init__(self):
        hid, c = self.w1.shape
        if self.w2.shape != (c, hid):
            raise ShapeError(f"channel attention: w1 {self.w1.shape} and w2 {self.w2.shape} disagree")


@dataclass
class SpatialAttnParams:
    kernel: np.ndarray  # 1 x 2 x 7 x 7
    bias: float = 0.0

    def __post_init__(self):
        if self.kernel.shape != (1, 2, SPATIAL_KERNEL, SPATIAL_KERNEL):
            raise ShapeError(f"spatial attention kernel must be 1x2x7x7, got {self.kernel.shape}")

    def conv(self) -> ConvParams:
        return ConvParams(self.kernel, np.array([float(self.bias)]), stride=1, padding="same")


def _check_features(f: np.ndarray, c: int | None = None) -> None:
    if f.ndim != 4:
        raise ShapeError(f"attention expects N x C x H x W, got {f.shape}")
    if c is not None and f.shape[1] != c:
        raise ShapeError(f"attention: feature map has {f.shape[1]} channels, params expect {c}")


def _global_max(f: np.ndarray):
    n, c, h, w = f.shape
    flat = f.reshape(n, c, h * w)
    idx = flat.argmax(axis=2)  # first maximum wins ties
    return np.take_along_axis(flat, idx[..., None], axis=2)[..., 0], idx


def _channel_gate(f: np.ndarray, p: ChannelAttnParams):
    f_avg = f.mean(axis=(2, 3))
    f_max, max_idx = _global_max(f)
    h_avg = f_avg @ p.w1.T
    h_max = f_max @ p.w1.T
    pre = relu_fwd(h_avg) @ p.w2.T + relu_fwd(h_max) @ p.w2.T
    return sigmoid_fwd(pre), (f_avg, f_max, max_idx, h_avg, h_max)


def channel_attention(f: np.ndarray, p: ChannelAttnParams):
    """Returns (Mc: N x C, Fc: N x C x H x W)."""
    _check_features(f, p.w1.shape[1])
    mc, _ = _channel_gate(f, p)
    return mc, hadamard(f, mc)


def channel_attention_bwd(dfc: np.ndarray, f: np.ndarray, p: ChannelAttnParams):
    """Returns (dF, dw1, dw2) for upstream gradient on Fc."""
    n, c, h, w = f.shape
    mc, (f_avg, f_max, max_idx, h_avg, h_max) = _channel_gate(f, p)
    dmc = (dfc * f).sum(axis=(2, 3))
    dpre = sigmoid_bwd(dmc, mc)
    r_avg, r_max = relu_fwd(h_avg), relu_fwd(h_max)
    dw2 = dpre.T @ (r_avg + r_max)
    dh_avg = (dpre @ p.w2) * (h_avg > 0)
    dh_max = (dpre @ p.w2) * (h_max > 0)
    dw1 = dh_avg.T @ f_avg + dh_max.T @ f_max
    df_avg = dh_avg @ p.w1
    df_max = dh_max @ p.w1
    df = dfc * mc[:, :, None, None] + (df_avg / (h * w))[:, :, None, None]
    flat = df.reshape(n, c, h * w)
    np.add.at(flat, (np.arange(n)[:, None], np.arange(c)[None, :], max_idx), df_max)
    return flat.reshape(n, c, h, w), dw1, dw2


def _spatial_descriptor(fc: np.ndarray):
    s_avg = fc.mean(axis=1)
    max_idx = fc.argmax(axis=1)
    s_max = np.take_along_axis(fc, max_idx[:, None], axis=1)[:, 0]
    return np.stack([s_avg, s_max], axis=1), max_idx


def spatial_attention(fc: np.ndarray, p: SpatialAttnParams):
    """Returns (Ms: N x H x W, F': N x C x H x W)."""
    _check_features(fc)
    desc, _ = _spatial_descriptor(fc)
    ms = sigmoid_fwd(conv_standard_fwd(desc, p.conv())[:, 0])
    return ms, hadamard(fc, ms)


def spatial_attention_bwd(dout: np.ndarray, fc: np.ndarray, p: SpatialAttnParams):
    """Returns (dFc, dkernel, dbias)."""
    n, c, h, w = fc.shape
    conv = p.conv()
    desc, max_idx = _spatial_descriptor(fc)
    ms = sigmoid_fwd(conv_standard_fwd(desc, conv)[:, 0])
    dms = (dout * fc).sum(axis=1)
    dpre = sigmoid_bwd(dms, ms)[:, None]
    ddesc, dk, db = conv_standard_bwd(dpre, desc, conv)
    dfc = dout * ms[:, None] + ddesc[:, 0:1] / c
    nn_, hh, ww = np.meshgrid(np.arange(n), np.arange(h), np.arange(w), indexing="ij")
    np.add.at(dfc, (nn_, max_idx, hh, ww), ddesc[:, 1])
    return dfc, dk, float(db[0])


def cbam(f: np.ndarray, cp: ChannelAttnParams | None, sp: SpatialAttnParams | None,
         force_identity: bool = False) -> np.ndarray:
    """Channel gate then spatial gate. A ``None`` param set skips that gate.

    ``force_identity`` pins both gates to 1 (a test hook for pass-through checks).
    """
    if force_identity:
        return hadamard(hadamard(f, np.ones(f.shape[:2])), np.ones((f.shape[0],) + f.shape[2:]))
    out = f
    if cp is not None:
        out = channel_attention(out, cp)[1]
    if sp is not None:
        out = spatial_attention(out, sp)[1]
    return out


def cbam_bwd(dout: np.ndarray, f: np.ndarray, cp: ChannelAttnParams | None, sp: SpatialAttnParams | None,
             force_identity: bool = False):
    """Returns (dF, grads) with grads keyed 'w1', 'w2', 'kernel', 'bias' for the active gates."""
    grads = {}
    if force_identity:
        return dout * 1.0, grads
    fc = channel_attention(f, cp)[1] if cp is not None else f
    g = dout
    if sp is not None:
        g, grads["kernel"], grads["bias"] = spatial_attention_bwd(g, fc, sp)
    if cp is not None:
        g, grads["w1"], grads["w2"] = channel_attention_bwd(g, f, cp)
    return g, grads
