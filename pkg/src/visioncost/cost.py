"""Operator-level cost accounting.

Every report is built from exact integer arithmetic (Python ints, so wide
intermediate products cannot overflow) and is therefore bit-reproducible.

Counting conventions, fixed and recorded on each report:

- one multiply-accumulate = 2 FLOPs, everywhere
- softmax = 3 FLOPs per logit
- folded batch norm = 2 FLOPs per element; layer norm = 5 FLOPs per element
- pooling, activations, resizes and elementwise adds = 1 FLOP per output
  element
- a layer's activation footprint is the sum of its input tensor sizes plus
  its output tensor size (a residual add therefore counts three tensors);
  the report's peak is the maximum footprint over layers
- total memory = model bytes + peak activation bytes

Transformer configurations additionally have closed-form per-block formulas
(``closed_form`` convention): block bodies only, embedding and classifier
excluded, and a fused-attention activation footprint that never
materializes the token-by-token score matrix. The ``full_count`` convention
walks every operator instead, including the patch embedding, all four
attention projections, the score and attention-value matmuls, softmax,
norms, and the classifier head.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Any

from .arch import (
    Activation,
    ArchSpec,
    BatchNorm,
    CnnSpec,
    Conv2d,
    EvalConfig,
    FlopConvention,
    GlobalPool,
    Linear,
    Pool,
    ResidualAdd,
    Resize,
    TensorShape,
    ViTSpec,
)

__all__ = [
    "LayerCost",
    "CostReport",
    "InfeasibleResolution",
    "ShapeMismatch",
    "propagate_shapes",
    "conv_flops",
    "conv_out_side",
    "cost_report",
    "vit_block_flops_closed",
    "vit_block_activation_elems_closed",
    "vit_block_params_closed",
    "vit_cost_closed",
    "vit_cost_full",
    "report_to_dict",
    "report_to_json",
    "report_to_csv",
]


class InfeasibleResolution(Exception):
    """A layer's output spatial size fell below 1 at the given resolution."""

    def __init__(self, layer_index: int, message: str):
        super().__init__(f"layer {layer_index}: {message}")
        self.layer_index = layer_index
        self.message = message


class ShapeMismatch(Exception):
    """Tensor shapes disagree in a way no input resolution can fix."""

    def __init__(self, layer_index: int, message: str):
        super().__init__(f"layer {layer_index}: {message}")
        self.layer_index = layer_index
        self.message = message


@dataclass(frozen=True, slots=True)
class LayerCost:
    layer_index: int
    name: str
    out_shape: TensorShape
    flops: int
    activation_bytes: int
    param_count: int


@dataclass(frozen=True, slots=True)
class CostReport:
    spec_name: str
    convention: FlopConvention
    batch_size: int
    dtype_name: str
    bytes_per_element: int
    resolution: int
    flops: int
    peak_activation_bytes: int
    model_bytes: int
    total_memory_bytes: int
    per_layer: tuple[LayerCost, ...]


def conv_out_side(
    in_side: int, kernel: int, stride: int, padding: int, dilation: int = 1
) -> int:
    """Output side length of a conv/pool window; may be < 1 (caller checks)."""
    return (in_side + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def conv_flops(layer: Conv2d, out_h: int, out_w: int, batch: int = 1) -> int:
    """2 * batch * (in_ch/groups) * out_ch * kernel^2 * H_out * W_out.

    Dilation widens the window but does not change work per output element.
    Bias, when present, adds one FLOP per output element.
    """
    macs = (
        batch
        * (layer.in_ch // layer.groups)
        * layer.out_ch
        * layer.kernel
        * layer.kernel
        * out_h
        * out_w
    )
    flops = 2 * macs
    if layer.has_bias:
        flops += batch * layer.out_ch * out_h * out_w
    return flops


def _cnn_walk(spec: CnnSpec, cfg: EvalConfig) -> list[LayerCost]:
    res = cfg.resolution_for(spec)
    b = cfg.batch_size
    e = cfg.dtype.bytes_per_element
    input_shape = (spec.input_channels, res, res)
    shapes: list[tuple[int, int, int]] = []  # (c, h, w) per layer output
    costs: list[LayerCost] = []

    def elems(shape: tuple[int, int, int]) -> int:
        return shape[0] * shape[1] * shape[2]

    for i, layer in enumerate(spec.layers):
        prev = shapes[i - 1] if i > 0 else input_shape
        in_shapes = [prev]
        params = 0
        flops = 0
        name = ""

        if isinstance(layer, Conv2d):
            src = prev
            if layer.input_layer_index is not None:
                src = shapes[layer.input_layer_index]
            in_shapes = [src]
            c, h, w = src
            if c != layer.in_ch:
                raise ShapeMismatch(
                    i, f"in_ch {layer.in_ch} does not match input channels {c}"
                )
            oh = conv_out_side(h, layer.kernel, layer.stride, layer.padding, layer.dilation)
            ow = conv_out_side(w, layer.kernel, layer.stride, layer.padding, layer.dilation)
            if oh < 1 or ow < 1:
                raise InfeasibleResolution(
                    i, f"conv output side {min(oh, ow)} < 1 at input {h}x{w}"
                )
            out = (layer.out_ch, oh, ow)
            flops = conv_flops(layer, oh, ow, b)
            params = (layer.in_ch // layer.groups) * layer.out_ch * layer.kernel ** 2
            if layer.has_bias:
                params += layer.out_ch
            name = "conv2d"
        elif isinstance(layer, Pool):
            c, h, w = prev
            oh = conv_out_side(h, layer.kernel, layer.stride, layer.padding)
            ow = conv_out_side(w, layer.kernel, layer.stride, layer.padding)
            if oh < 1 or ow < 1:
                raise InfeasibleResolution(
                    i, f"pool output side {min(oh, ow)} < 1 at input {h}x{w}"
                )
            out = (c, oh, ow)
            flops = b * elems(out)
            name = f"pool_{layer.kind}"
        elif isinstance(layer, GlobalPool):
            c, h, w = prev
            out = (c, 1, 1)
            flops = b * c
            name = "global_pool"
        elif isinstance(layer, BatchNorm):
            c, h, w = prev
            if c != layer.ch:
                raise ShapeMismatch(i, f"ch {layer.ch} does not match input channels {c}")
            out = prev
            flops = 2 * b * elems(prev)
            params = 2 * layer.ch
            name = "batch_norm"
        elif isinstance(layer, Activation):
            out = prev
            flops = b * elems(prev)
            name = "activation"
        elif isinstance(layer, ResidualAdd):
            src = shapes[layer.source_layer_index]
            if src != prev:
                raise ShapeMismatch(
                    i,
                    f"residual source layer {layer.source_layer_index} shape "
                    f"{src} does not match current shape {prev}",
                )
            in_shapes = [prev, src]
            out = prev
            flops = b * elems(prev)
            name = "residual_add"
        elif isinstance(layer, Resize):
            c, h, w = prev
            out = (c, layer.target_hw, layer.target_hw)
            flops = b * elems(out)
            name = "resize"
        elif isinstance(layer, Linear):
            c, h, w = prev
            flat = c * h * w
            if flat != layer.in_features:
                raise ShapeMismatch(
                    i,
                    f"in_features {layer.in_features} does not match flattened "
                    f"input size {flat}",
                )
            out = (layer.out_features, 1, 1)
            flops = 2 * b * layer.in_features * layer.out_features + b * layer.out_features
            params = layer.in_features * layer.out_features + layer.out_features
            name = "linear"
        else:  # pragma: no cover - vocabulary is closed
            raise TypeError(f"unsupported layer type {type(layer).__name__}")

        shapes.append(out)
        act_elems = sum(elems(s) for s in in_shapes) + elems(out)
        out_shape = (
            TensorShape((layer.out_features,))
            if isinstance(layer, Linear)
            else TensorShape(out)
        )
        costs.append(
            LayerCost(
                layer_index=i,
                name=name,
                out_shape=out_shape,
                flops=flops,
                activation_bytes=act_elems * b * e,
                param_count=params,
            )
        )
    return costs


def propagate_shapes(spec: ArchSpec, cfg: EvalConfig | None = None) -> list[TensorShape]:
    """Per-layer output shapes; raises InfeasibleResolution / ShapeMismatch."""
    cfg = cfg or EvalConfig()
    if isinstance(spec, ViTSpec):
        n = cfg.resolution_for(spec)
        shape = TensorShape((n * n, spec.hidden_dim))
        return [shape for _ in range(spec.depth)]
    return [c.out_shape for c in _cnn_walk(spec, cfg)]


# --------------------------------------------------------------------------
# Transformer closed forms. Arguments are plain ints; results are exact.


def vit_block_flops_closed(
    tokens_per_side: int, hidden_dim: int, num_heads: int, mlp_dim: int
) -> int:
    n2 = tokens_per_side * tokens_per_side
    n4 = n2 * n2
    return (
        4 * n4 * hidden_dim
        + 3 * num_heads * n4
        + 2 * n2 * hidden_dim * hidden_dim
        + 4 * n2 * hidden_dim * mlp_dim
    )


def vit_block_activation_elems_closed(
    tokens_per_side: int, hidden_dim: int, mlp_dim: int
) -> int:
    n2 = tokens_per_side * tokens_per_side
    return 5 * n2 * hidden_dim + n2 * mlp_dim


def vit_block_params_closed(hidden_dim: int, mlp_dim: int) -> int:
    return hidden_dim * (4 * hidden_dim + 2 * mlp_dim)


def vit_cost_closed(spec: ViTSpec, cfg: EvalConfig | None = None) -> CostReport:
    """Closed-form block-body report: embedding and classifier excluded."""
    cfg = cfg or EvalConfig()
    n = cfg.resolution_for(spec)
    b = cfg.batch_size
    e = cfg.dtype.bytes_per_element
    block_flops = vit_block_flops_closed(n, spec.hidden_dim, spec.num_heads, spec.mlp_dim)
    block_act = vit_block_activation_elems_closed(n, spec.hidden_dim, spec.mlp_dim)
    block_params = vit_block_params_closed(spec.hidden_dim, spec.mlp_dim)
    out_shape = TensorShape((n * n, spec.hidden_dim)) if spec.depth > 0 else None
    per_layer = tuple(
        LayerCost(
            layer_index=i,
            name=f"block{i}",
            out_shape=out_shape,
            flops=b * block_flops,
            activation_bytes=block_act * b * e,
            param_count=block_params,
        )
        for i in range(spec.depth)
    )
    flops = b * block_flops * spec.depth
    peak = block_act * b * e if spec.depth > 0 else 0
    model = block_params * spec.depth * e
    return CostReport(
        spec_name=spec.name,
        convention=FlopConvention.CLOSED_FORM,
        batch_size=b,
        dtype_name=cfg.dtype.name,
        bytes_per_element=e,
        resolution=n,
        flops=flops,
        peak_activation_bytes=peak,
        model_bytes=model,
        total_memory_bytes=model + peak,
        per_layer=per_layer,
    )


_LAYER_NORM_FLOPS_PER_ELEM = 5


def vit_cost_full(spec: ViTSpec, cfg: EvalConfig | None = None) -> CostReport:
    """Walk every transformer operator, embedding and classifier included.

    Linear operators carry no bias terms, matching the closed-form parameter
    formula; the score matrix is materialized, so the activation footprint
    here is the unfused one.
    """
    cfg = cfg or EvalConfig()
    n = cfg.resolution_for(spec)
    b = cfg.batch_size
    e = cfg.dtype.bytes_per_element
    d = spec.hidden_dim
    k = spec.num_heads
    mlp = spec.mlp_dim
    n2 = n * n
    n4 = n2 * n2
    p = spec.patch_size
    r = n * p
    in_ch = spec.input_channels

    token_shape = TensorShape((n2, d))
    ops: list[tuple[str, TensorShape, int, int, int]] = []
    # (name, out_shape, flops, activation_elems, params)

    ops.append(
        (
            "patch_embed",
            token_shape,
            2 * n2 * (in_ch * p * p) * d,
            in_ch * r * r + n2 * d,
            in_ch * p * p * d,
        )
    )
    for i in range(spec.depth):
        pre = f"block{i}."
        norm = (_LAYER_NORM_FLOPS_PER_ELEM * n2 * d, 2 * n2 * d, 2 * d)
        ops.append((pre + "norm1", token_shape, *norm))
        for proj in ("q_proj", "k_proj", "v_proj"):
            ops.append((pre + proj, token_shape, 2 * n2 * d * d, 2 * n2 * d, d * d))
        score_shape = TensorShape((k, n2, n2))
        ops.append((pre + "attn_scores", score_shape, 2 * n4 * d, 2 * n2 * d + k * n4, 0))
        ops.append((pre + "attn_softmax", score_shape, 3 * k * n4, 2 * k * n4, 0))
        ops.append((pre + "attn_av", token_shape, 2 * n4 * d, k * n4 + 2 * n2 * d, 0))
        ops.append((pre + "out_proj", token_shape, 2 * n2 * d * d, 2 * n2 * d, d * d))
        ops.append((pre + "attn_residual", token_shape, n2 * d, 3 * n2 * d, 0))
        ops.append((pre + "norm2", token_shape, *norm))
        mlp_shape = TensorShape((n2, mlp))
        ops.append((pre + "mlp_fc1", mlp_shape, 2 * n2 * d * mlp, n2 * d + n2 * mlp, d * mlp))
        ops.append((pre + "mlp_act", mlp_shape, n2 * mlp, 2 * n2 * mlp, 0))
        ops.append((pre + "mlp_fc2", token_shape, 2 * n2 * mlp * d, n2 * mlp + n2 * d, mlp * d))
        ops.append((pre + "mlp_residual", token_shape, n2 * d, 3 * n2 * d, 0))
    ops.append(
        ("final_norm", token_shape, _LAYER_NORM_FLOPS_PER_ELEM * n2 * d, 2 * n2 * d, 2 * d)
    )
    pooled_shape = TensorShape((d,))
    ops.append(("head_pool", pooled_shape, n2 * d, n2 * d + d, 0))
    cls_shape = TensorShape((spec.num_classes,))
    ops.append(
        (
            "head_linear",
            cls_shape,
            2 * d * spec.num_classes,
            d + spec.num_classes,
            d * spec.num_classes,
        )
    )

    per_layer = tuple(
        LayerCost(
            layer_index=i,
            name=name,
            out_shape=shape,
            flops=b * flops,
            activation_bytes=act * b * e,
            param_count=params,
        )
        for i, (name, shape, flops, act, params) in enumerate(ops)
    )
    flops_total = sum(c.flops for c in per_layer)
    peak = max(c.activation_bytes for c in per_layer)
    model = sum(c.param_count for c in per_layer) * e
    return CostReport(
        spec_name=spec.name,
        convention=FlopConvention.FULL_COUNT,
        batch_size=b,
        dtype_name=cfg.dtype.name,
        bytes_per_element=e,
        resolution=n,
        flops=flops_total,
        peak_activation_bytes=peak,
        model_bytes=model,
        total_memory_bytes=model + peak,
        per_layer=per_layer,
    )


def cost_report(spec: ArchSpec, cfg: EvalConfig | None = None) -> CostReport:
    """Full cost report for a spec under the given evaluation settings."""
    cfg = cfg or EvalConfig()
    if isinstance(spec, ViTSpec):
        if cfg.flop_convention is FlopConvention.FULL_COUNT:
            return vit_cost_full(spec, cfg)
        return vit_cost_closed(spec, cfg)
    per_layer = tuple(_cnn_walk(spec, cfg))
    flops = sum(c.flops for c in per_layer)
    peak = max((c.activation_bytes for c in per_layer), default=0)
    model = sum(c.param_count for c in per_layer) * cfg.dtype.bytes_per_element
    return CostReport(
        spec_name=spec.name,
        convention=cfg.flop_convention,
        batch_size=cfg.batch_size,
        dtype_name=cfg.dtype.name,
        bytes_per_element=cfg.dtype.bytes_per_element,
        resolution=cfg.resolution_for(spec),
        flops=flops,
        peak_activation_bytes=peak,
        model_bytes=model,
        total_memory_bytes=model + peak,
        per_layer=per_layer,
    )


def param_count(spec: ArchSpec) -> int:
    """Parameter count independent of evaluation settings."""
    if isinstance(spec, ViTSpec):
        return sum(c.param_count for c in vit_cost_full(spec).per_layer)
    layers = _cnn_walk(spec, EvalConfig(input_resolution=_safe_probe(spec)))
    return sum(c.param_count for c in layers)


def _safe_probe(spec: CnnSpec) -> int:
    from .arch import _PROBE_RESOLUTIONS

    for res in (224,) + _PROBE_RESOLUTIONS:
        try:
            _cnn_walk(spec, EvalConfig(input_resolution=res))
            return res
        except InfeasibleResolution:
            continue
        except ShapeMismatch:
            raise
    raise InfeasibleResolution(0, "no feasible probe resolution")


# --------------------------------------------------------------------------
# Report serialization.


def report_to_dict(report: CostReport) -> dict[str, Any]:
    return {
        "spec_name": report.spec_name,
        "convention": report.convention.value,
        "batch_size": report.batch_size,
        "dtype": {"name": report.dtype_name, "bytes_per_element": report.bytes_per_element},
        "resolution": report.resolution,
        "flops": report.flops,
        "peak_activation_bytes": report.peak_activation_bytes,
        "model_bytes": report.model_bytes,
        "total_memory_bytes": report.total_memory_bytes,
        "per_layer": [
            {
                "layer_index": c.layer_index,
                "name": c.name,
                "out_shape": str(c.out_shape) if c.out_shape is not None else "",
                "flops": c.flops,
                "activation_bytes": c.activation_bytes,
                "param_count": c.param_count,
            }
            for c in report.per_layer
        ],
    }


def report_to_json(report: CostReport, indent: int | None = 2) -> str:
    return json.dumps(report_to_dict(report), indent=indent)


CSV_HEADER = ("layer_index", "name", "out_shape", "flops", "activation_bytes", "param_count")


def report_to_csv(report: CostReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for c in report.per_layer:
        writer.writerow(
            [
                c.layer_index,
                c.name,
                str(c.out_shape) if c.out_shape is not None else "",
                c.flops,
                c.activation_bytes,
                c.param_count,
            ]
        )
    return buf.getvalue()
