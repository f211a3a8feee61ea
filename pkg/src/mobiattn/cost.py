"""Exact parameter and multiply-accumulate (MAC) accounting.

Convolution costs count kernel multiplies only, as Dk^2 * M * N * Df^2 for
a standard convolution and Dk^2 * M * Df^2 + M * N * Df^2 for a
depthwise-separable one (Df = output spatial extent). Bias adds and
activations are not counted. All arithmetic is on Python ints.
"""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .attention import SPATIAL_KERNEL, hidden_width
from .errors import ParameterError
from .model import ModelSpec, ParamStore, forward

# Published comparison figures (parameters in millions, single-image inference ms).
# Reference data only: never measured or asserted against local models.
REPORTED_COMPUTE = (
    ("ResNet-50", 25.6, 45),
    ("MobileNet", 4.2, 18),
    ("MobileNet + attention", 4.8, 20),
)


def _check_positive(**kw) -> None:
    for k, v in kw.items():
        if int(v) != v or v < 1:
            raise ParameterError(f"{k} must be a positive integer, got {v}")


def cost_standard(dk: int, m: int, n: int, df: int) -> int:
    _check_positive(dk=dk, m=m, n=n, df=df)
    return dk * dk * m * n * df * df


def cost_dsc(dk: int, m: int, n: int, df: int) -> int:
    _check_positive(dk=dk, m=m, n=n, df=df)
    return dk * dk * m * df * df + m * n * df * df


def cost_ratio(dk: int, n: int) -> Fraction:
    """DSC / standard cost; independent of M and Df."""
    _check_positive(dk=dk, n=n)
    return Fraction(1, n) + Fraction(1, dk * dk)


@dataclass(frozen=True)
class LayerCost:
    name: str
    kind: str
    params: int
    macs: int
    output_shape: tuple[int, int, int]


@dataclass
class ModelCost:
    layers: list[LayerCost]

    @property
    def params(self) -> int:
        return sum(lc.params for lc in self.layers)

    @property
    def macs(self) -> int:
        return sum(lc.macs for lc in self.layers)

    def conv_macs(self) -> int:
        return sum(lc.macs for lc in self.layers if lc.kind != "attention" and lc.kind != "dense")


def _same(n: int, stride: int) -> int:
    return -(-n // stride)


def _attention_cost(spec: ModelSpec, name: str, c: int, h: int, w: int) -> LayerCost:
    params = macs = 0
    if spec.has_channel_attention:
        hid = hidden_width(c, spec.reduction)
        params += 2 * c * hid
        macs += 2 * (2 * c * hid)  # shared MLP applied to the avg and max descriptors
    if spec.has_spatial_attention:
        params += 2 * SPATIAL_KERNEL * SPATIAL_KERNEL + 1
        macs += SPATIAL_KERNEL * SPATIAL_KERNEL * 2 * h * w
    return LayerCost(name, "attention", params, macs, (c, h, w))


def model_cost(spec: ModelSpec, separable: bool = True) -> ModelCost:
    """Per-layer costs. ``separable=False`` prices every DSC block as one standard convolution.

    Spatial extents assume square inputs for Df; non-square maps use H' x W'.
    """
    c, h, w = spec.input_shape
    b = 1 if spec.bias else 0
    out = []
    k = spec.stem_kernel
    h, w = _same(h, spec.stem_stride), _same(w, spec.stem_stride)
    sc = spec.stem_channels
    out.append(LayerCost("stem", "conv", k * k * c * sc + b * sc, k * k * c * sc * h * w, (sc, h, w)))
    c = sc
    sites = dict(spec.attention_sites())
    for i, blk in enumerate(spec.blocks):
        k = blk.kernel
        n = blk.out_channels
        h, w = _same(h, blk.stride), _same(w, blk.stride)
        if separable:
            out.append(LayerCost(f"block.{i}.dw", "depthwise", k * k * c, k * k * c * h * w, (c, h, w)))
            out.append(LayerCost(f"block.{i}.pw", "pointwise", c * n + b * n, c * n * h * w, (n, h, w)))
        else:
            out.append(LayerCost(f"block.{i}.conv", "conv", k * k * c * n + b * n, k * k * c * n * h * w,
                                 (n, h, w)))
        c = n
        if f"block.{i}.attn" in sites:
            out.append(_attention_cost(spec, f"block.{i}.attn", c, h, w))
    if "attn" in sites:
        out.append(_attention_cost(spec, "attn", c, h, w))
    nc = spec.num_classes
    out.append(LayerCost("head", "dense", c * nc + nc, c * nc, (nc, 1, 1)))
    return ModelCost(out)


def cost_table(spec: ModelSpec) -> str:
    """Aligned text comparing the separable model with its standard-conv counterpart."""
    sep = model_cost(spec, separable=True)
    std = model_cost(spec, separable=False)
    lines = [f"{'layer':<16} {'kind':<10} {'output':>14} {'params':>12} {'MACs':>14}"]
    for lc in sep.layers:
        shape = "x".join(map(str, lc.output_shape))
        lines.append(f"{lc.name:<16} {lc.kind:<10} {shape:>14} {lc.params:>12,d} {lc.macs:>14,d}")
    lines.append(f"{'total':<16} {'':<10} {'':>14} {sep.params:>12,d} {sep.macs:>14,d}")
    lines.append("")
    lines.append(f"{'variant':<28} {'params':>12} {'conv MACs':>14} {'total MACs':>14}")
    lines.append(f"{'depthwise-separable':<28} {sep.params:>12,d} {sep.conv_macs():>14,d} {sep.macs:>14,d}")
    lines.append(f"{'standard convolutions':<28} {std.params:>12,d} {std.conv_macs():>14,d} {std.macs:>14,d}")
    ratio = Fraction(sep.conv_macs(), std.conv_macs())
    lines.append(f"conv MAC ratio (separable / standard) = {float(ratio):.6f}")
    lines.append("")
    lines.append("reported reference figures (published, not measured here)")
    lines.append(f"{'model':<28} {'params (M)':>12} {'inference (ms)':>14}")
    for name, p, ms in REPORTED_COMPUTE:
        lines.append(f"{name:<28} {p:>12.1f} {ms:>14d}")
    lines.append("units: params = scalar parameters; MACs = multiply-accumulates")
    return "\n".join(lines) + "\n"


def cost_csv(spec: ModelSpec) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["variant", "layer", "kind", "out_c", "out_h", "out_w", "params", "macs"])
    for variant, sep in (("separable", True), ("standard", False)):
        mc = model_cost(spec, separable=sep)
        for lc in mc.layers:
            wr.writerow([variant, lc.name, lc.kind, *lc.output_shape, lc.params, lc.macs])
        wr.writerow([variant, "total", "", "", "", "", mc.params, mc.macs])
    for name, p, ms in REPORTED_COMPUTE:
        wr.writerow(["reported", name, "reference", "", "", "", f"{p}M params", f"{ms} ms"])
    return buf.getvalue()


@dataclass(frozen=True)
class TimingStats:
    median_ms: float
    p90_ms: float
    samples_ms: tuple[float, ...]


def measure_inference(spec: ModelSpec, store: ParamStore, batch: np.ndarray, repetitions: int = 5,
                      warmup: int = 1) -> TimingStats:
    """Wall-clock forward-pass timing (warm-up runs excluded)."""
    if repetitions < 3:
        raise ParameterError("measure_inference needs repetitions >= 3")
    for _ in range(warmup):
        forward(spec, store, batch)
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        forward(spec, store, batch)
        samples.append((time.perf_counter() - t0) * 1e3)
    ordered = sorted(samples)
    p90 = ordered[min(len(ordered) - 1, int(np.ceil(0.9 * len(ordered))) - 1)]
    return TimingStats(statistics.median(samples), p90, tuple(samples))

