"""Network description, parameter initialization and the full forward/backward pass.

The network is: standard-conv stem -> ReLU -> depthwise-separable blocks
-> attention (after the last block, or after every block) -> global
average pooling -> dense -> softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import layers as L
from .attention import (ChannelAttnParams, SpatialAttnParams, SPATIAL_KERNEL, cbam, cbam_bwd, hidden_width)
from .errors import ConfigError, ShapeError
from .rng import Xoshiro256pp

ATTENTION_MODES = ("none", "channel", "spatial", "full")
PLACEMENTS = ("final", "per-block")


@dataclass(frozen=True)
class BlockSpec:
    out_channels: int
    stride: int = 1
    kernel: int = 3


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple[int, int, int] = (3, 224, 224)
    stem_channels: int = 16
    stem_kernel: int = 3
    stem_stride: int = 2
    blocks: tuple[BlockSpec, ...] = (BlockSpec(16, 1), BlockSpec(32, 2), BlockSpec(64, 2), BlockSpec(128, 2))
    attention: str = "full"
    placement: str = "final"
    reduction: int = 8
    num_classes: int = 5
    bias: bool = True
    # input normalization (per-channel); part of the model's input contract
    norm_mean: tuple[float, ...] | None = None
    norm_std: tuple[float, ...] | None = None
    # output labels, index-aligned with the classifier rows
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ConfigError(f"input_shape must be (C, H, W) positive, got {self.input_shape}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.attention not in ATTENTION_MODES:
            raise ConfigError(f"attention must be one of {ATTENTION_MODES}, got {self.attention!r}")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")
        if self.reduction < 1 or self.stem_channels < 1 or self.stem_stride < 1:
            raise ConfigError("reduction, stem channels and stem stride must be >= 1")
        for k in [self.stem_kernel] + [b.kernel for b in self.blocks]:
            if k < 1 or k % 2 == 0:
                raise ConfigError(f"kernel sizes must be odd and positive, got {k}")
        for i, b in enumerate(self.blocks):
            if b.out_channels < 1 or b.stride < 1:
                raise ConfigError(f"block {i}: out_channels and stride must be >= 1")
        for name in ("norm_mean", "norm_std"):
            v = getattr(self, name)
            if v is not None and len(v) != self.input_shape[0]:
                raise ConfigError(f"{name} needs {self.input_shape[0]} values, got {len(v)}")
        if self.norm_std is not None and min(self.norm_std) <= 0:
            raise ConfigError("norm_std must be > 0")
        if self.class_names is not None:
            if len(self.class_names) != self.num_classes:
                raise ConfigError(f"{len(self.class_names)} class names for {self.num_classes} classes")
            if any(not n or "\n" in n for n in self.class_names):
                raise ConfigError("class names must be non-empty single-line strings")

    @property
    def feature_channels(self) -> int:
        return self.blocks[-1].out_channels if self.blocks else self.stem_channels

    @property
    def has_channel_attention(self) -> bool:
        return self.attention in ("channel", "full")

    @property
    def has_spatial_attention(self) -> bool:
        return self.attention in ("spatial", "full")

    def attention_sites(self) -> list[tuple[str, int]]:
        """(param prefix, channels) for every attention module in the network."""
        if self.attention == "none":
            return []
        if self.placement == "per-block":
            return [(f"block.{i}.attn", b.out_channels) for i, b in enumerate(self.blocks)]
        return [("attn", self.feature_channels)]

    def with_attention(self, attention: str) -> "ModelSpec":
        return replace(self, attention=attention)

    # canonical text form: sorted key=value lines, also used inside checkpoints
    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in sorted(spec_to_items(self).items()))

    @classmethod
    def from_text(cls, text: str) -> "ModelSpec":
        items = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
            k, v = line.split("=", 1)
            items[k.strip()] = v.strip()
        return spec_from_items(items)


def _floats(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def spec_to_items(spec: ModelSpec) -> dict[str, str]:
    c, h, w = spec.input_shape
    items = {
        "model.input.channels": str(c),
        "model.input.height": str(h),
        "model.input.width": str(w),
        "model.stem.channels": str(spec.stem_channels),
        "model.stem.kernel": str(spec.stem_kernel),
        "model.stem.stride": str(spec.stem_stride),
        "model.blocks": str(len(spec.blocks)),
        "model.attention": spec.attention,
        "model.attention.placement": spec.placement,
        "model.attention.reduction": str(spec.reduction),
        "model.num_classes": str(spec.num_classes),
        "model.bias": "true" if spec.bias else "false",
    }
    for i, b in enumerate(spec.blocks):
        items[f"block.{i}.channels"] = str(b.out_channels)
        items[f"block.{i}.stride"] = str(b.stride)
        items[f"block.{i}.kernel"] = str(b.kernel)
    if spec.norm_mean is not None:
        items["model.input.mean"] = _floats(spec.norm_mean)
    if spec.norm_std is not None:
        items["model.input.std"] = _floats(spec.norm_std)
    for i, name in enumerate(spec.class_names or ()):
        items[f"model.class.{i}"] = name
    return items


def _parse_bool(key: str, v: str) -> bool:
    if v.lower() in ("true", "1", "yes"):
        return True
    if v.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {v!r}")


def _parse_int(key: str, v: str) -> int:
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from None


def spec_from_items(items: dict[str, str], defaults: ModelSpec | None = None) -> ModelSpec:
    """Build a spec from ``model.*`` / ``block.N.*`` keys; missing keys fall back to ``defaults``.

    Consumed keys are removed from ``items`` so callers can reject leftovers.
    """
    d = defaults or ModelSpec()
    take = items.pop

    def geti(key, default):
        return _parse_int(key, take(key)) if key in items else default

    c = geti("model.input.channels", d.input_shape[0])
    h = geti("model.input.height", d.input_shape[1])
    w = geti("model.input.width", d.input_shape[2])
    n_blocks = geti("model.blocks", None)
    if n_blocks is None:
        block_ids = {int(k.split(".")[1]) for k in items if k.startswith("block.") and k.split(".")[1].isdigit()}
        n_blocks = max(block_ids) + 1 if block_ids else len(d.blocks)
    blocks = []
    for i in range(n_blocks):
        base = d.blocks[i] if i < len(d.blocks) else None
        ch = geti(f"block.{i}.channels", base.out_channels if base else None)
        if ch is None:
            raise ConfigError(f"block.{i}.channels missing")
        blocks.append(BlockSpec(ch, geti(f"block.{i}.stride", base.stride if base else 1),
                                geti(f"block.{i}.kernel", base.kernel if base else 3)))
    mean = tuple(float(x) for x in take("model.input.mean").split(",")) if "model.input.mean" in items else d.norm_mean
    std = tuple(float(x) for x in take("model.input.std").split(",")) if "model.input.std" in items else d.norm_std
    bias = _parse_bool("model.bias", take("model.bias")) if "model.bias" in items else d.bias
    num_classes = geti("model.num_classes", d.num_classes)
    class_names = d.class_names
    if any(k.startswith("model.class.") for k in items):
        class_names = tuple(take(f"model.class.{i}", "") for i in range(num_classes))
    return ModelSpec(
        input_shape=(c, h, w),
        stem_channels=geti("model.stem.channels", d.stem_channels),
        stem_kernel=geti("model.stem.kernel", d.stem_kernel),
        stem_stride=geti("model.stem.stride", d.stem_stride),
        blocks=tuple(blocks),
        attention=take("model.attention", d.attention),
        placement=take("model.attention.placement", d.placement),
        reduction=geti("model.attention.reduction", d.reduction),
        num_classes=num_classes,
        bias=bias,
        norm_mean=mean,
        norm_std=std,
        class_names=class_names,
    )


@dataclass
class ParamStore:
    """Named parameters (insertion ordered) with gradients of matching shape."""

    params: dict[str, np.ndarray] = field(default_factory=dict)
    grads: dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        self.params[name] = np.asarray(value, dtype=np.float64)
        self.grads[name] = np.zeros_like(self.params[name])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def num_scalars(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "ParamStore":
        return ParamStore({k: v.copy() for k, v in self.params.items()},
                          {k: v.copy() for k, v in self.grads.items()})


def param_shapes(spec: ModelSpec) -> list[tuple[str, tuple[int, ...], int, int]]:
    """Ordered (name, shape, fan_in, fan_out); fan_in = fan_out = 0 marks a bias."""
    out = []
    c_in = spec.input_shape[0]
    k = spec.stem_kernel
    out.append(("stem.w", (spec.stem_channels, c_in, k, k), c_in * k * k, spec.stem_channels * k * k))
    if spec.bias:
        out.append(("stem.b", (spec.stem_channels,), 0, 0))
    c = spec.stem_channels
    sites = dict(spec.attention_sites())
    for i, b in enumerate(spec.blocks):
        k = b.kernel
        out.append((f"block.{i}.dw", (c, k, k), k * k, k * k))
        out.append((f"block.{i}.pw", (b.out_channels, c, 1, 1), c, b.out_channels))
        if spec.bias:
            out.append((f"block.{i}.pw_b", (b.out_channels,), 0, 0))
        c = b.out_channels
        prefix = f"block.{i}.attn"
        if prefix in sites:
            out.extend(_attention_shapes(spec, prefix, c))
    if "attn" in sites:
        out.extend(_attention_shapes(spec, "attn", c))
    out.append(("head.w", (spec.num_classes, c), c, spec.num_classes))
    out.append(("head.b", (spec.num_classes,), 0, 0))
    return out


def _attention_shapes(spec: ModelSpec, prefix: str, c: int):
    out = []
    if spec.has_channel_attention:
        hid = hidden_width(c, spec.reduction)
        out.append((f"{prefix}.w1", (hid, c), c, hid))
        out.append((f"{prefix}.w2", (c, hid), hid, c))
    if spec.has_spatial_attention:
        ks = SPATIAL_KERNEL
        out.append((f"{prefix}.sk", (1, 2, ks, ks), 2 * ks * ks, ks * ks))
        out.append((f"{prefix}.sb", (1,), 0, 0))
    return out


def init_params(spec: ModelSpec, seed: int) -> ParamStore:
    """Xavier-uniform weights drawn in parameter order from one seeded stream; zero biases."""
    rng = Xoshiro256pp(seed)
    store = ParamStore()
    for name, shape, fan_in, fan_out in param_shapes(spec):
        if fan_in == 0:
            store.add(name, np.zeros(shape))
            continue
        a = math.sqrt(6.0 / (fan_in + fan_out))
        store.add(name, rng.uniform_array(int(np.prod(shape)), -a, a).reshape(shape))
    return store


# -- forward / backward -----------------------------------------------------

def _attn_params(store: ParamStore, spec: ModelSpec, prefix: str):
    cp = sp = None
    if spec.has_channel_attention:
        cp = ChannelAttnParams(store[f"{prefix}.w1"], store[f"{prefix}.w2"])
    if spec.has_spatial_attention:
        sp = SpatialAttnParams(store[f"{prefix}.sk"], float(store[f"{prefix}.sb"][0]))
    return cp, sp


def _bias(store: ParamStore, name: str):
    return store[name] if name in store else None


def forward(spec: ModelSpec, store: ParamStore, batch: np.ndarray, identity_attention: bool = False):
    """Returns (probs N x C, cache). ``identity_attention`` pins every attention gate to 1."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4 or batch.shape[1:] != tuple(spec.input_shape):
        raise ShapeError(f"input: expected N x {'x'.join(map(str, spec.input_shape))}, got {batch.shape}")
    cache = []
    stem = L.ConvParams(store["stem.w"], _bias(store, "stem.b"), spec.stem_stride, "same")
    cache.append(("stem", batch))
    x = L.relu_fwd(pre := L.conv_standard_fwd(batch, stem))
    cache.append(("stem.relu", pre))
    sites = dict(spec.attention_sites())
    for i, b in enumerate(spec.blocks):
        dw = L.ConvParams(store[f"block.{i}.dw"], None, b.stride, "same")
        pw = L.ConvParams(store[f"block.{i}.pw"], _bias(store, f"block.{i}.pw_b"), 1, "same")
        cache.append((f"block.{i}", x))
        try:
            x = L.dsc_block_fwd(x, dw, pw)
        except ShapeError as exc:
            raise ShapeError(f"block.{i}: {exc}") from None
        if f"block.{i}.attn" in sites:
            cache.append((f"block.{i}.attn", x))
            x = cbam(x, *_attn_params(store, spec, f"block.{i}.attn"), force_identity=identity_attention)
    if "attn" in sites:
        cache.append(("attn", x))
        x = cbam(x, *_attn_params(store, spec, "attn"), force_identity=identity_attention)
    cache.append(("gap", x))
    z = L.gap_fwd(x)
    cache.append(("head", z))
    logits = L.dense_fwd(z, L.DenseParams(store["head.w"], store["head.b"]))
    probs = L.softmax_fwd(logits)
    return probs, {"layers": cache, "logits": logits, "identity_attention": identity_attention}


def backward(spec: ModelSpec, store: ParamStore, cache, dlogits: np.ndarray) -> np.ndarray:
    """Backpropagate a gradient on the logits; writes ``store.grads`` and returns d(input)."""
    entries = dict(cache["layers"])
    ident = cache["identity_attention"]
    g = store.grads
    dz, g["head.w"][...], g["head.b"][...] = L.dense_bwd(
        dlogits, entries["head"], L.DenseParams(store["head.w"], store["head.b"]))
    dx = L.gap_bwd(dz, entries["gap"].shape)
    sites = dict(spec.attention_sites())

    def attn_back(dx, prefix):
        cp, sp = _attn_params(store, spec, prefix)
        dx, ag = cbam_bwd(dx, entries[prefix], cp, sp, force_identity=ident)
        for suffix, key in (("w1", "w1"), ("w2", "w2"), ("sk", "kernel"), ("sb", "bias")):
            name = f"{prefix}.{suffix}"
            if name in g:
                g[name][...] = ag.get(key, 0.0)
        return dx

    if "attn" in sites:
        dx = attn_back(dx, "attn")
    for i in reversed(range(len(spec.blocks))):
        b = spec.blocks[i]
        if f"block.{i}.attn" in sites:
            dx = attn_back(dx, f"block.{i}.attn")
        dw = L.ConvParams(store[f"block.{i}.dw"], None, b.stride, "same")
        pw = L.ConvParams(store[f"block.{i}.pw"], _bias(store, f"block.{i}.pw_b"), 1, "same")
        dx, g[f"block.{i}.dw"][...], _, g[f"block.{i}.pw"][...], dpw_b = L.dsc_block_bwd(
            dx, entries[f"block.{i}"], dw, pw)
        if dpw_b is not None:
            g[f"block.{i}.pw_b"][...] = dpw_b
    dx = L.relu_bwd(dx, entries["stem.relu"])
    stem = L.ConvParams(store["stem.w"], _bias(store, "stem.b"), spec.stem_stride, "same")
    dx, g["stem.w"][...], dstem_b = L.conv_standard_bwd(dx, entries["stem"], stem)
    if dstem_b is not None:
        g["stem.b"][...] = dstem_b
    return dx


def predict_proba(spec: ModelSpec, store: ParamStore, batch: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Forward in chunks; returns N x C probabilities."""
    out = [forward(spec, store, batch[i:i + batch_size])[0] for i in range(0, len(batch), batch_size)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, spec.num_classes))
