"""Model and evaluation scaling transforms.

Structural transforms (width, group width, hidden size, MLP size, depth,
patch size) rewrite the spec; evaluation transforms (resolution, batch,
dtype) rewrite the EvalConfig and leave the spec untouched. A transform
chain applied to a named base produces a ``ScaledConfig`` whose
``config_id`` is a canonical compact string such as
``"vit_small;width=0.5;dtype=int8;N=12"``; parsing that string against a
base registry reproduces the same spec.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping

from .arch import (
    ArchSpec,
    BatchNorm,
    CnnLayer,
    CnnSpec,
    Conv2d,
    DTypeDesc,
    EvalConfig,
    Linear,
    ViTSpec,
    dtype_from_name,
)

__all__ = [
    "ScalingError",
    "RoundingBreaksGroups",
    "HeadDivisibility",
    "IndivisibleImage",
    "InvalidGroupWidth",
    "Rounding",
    "HeadPolicy",
    "PatchKeep",
    "TransformKind",
    "ScalingTransform",
    "ScaledConfig",
    "width_scale",
    "group_width_scale",
    "hidden_scale",
    "mlp_scale",
    "depth_scale",
    "resolution_scale",
    "patch_scale",
    "dtype_scale",
    "batch_scale",
    "apply_transform",
    "apply_chain",
    "make_config",
    "config_id_of",
    "parse_config_id",
]


class ScalingError(ValueError):
    pass


class RoundingBreaksGroups(ScalingError):
    def __init__(self, layer_index: int, channels: int, groups: int):
        super().__init__(
            f"layer {layer_index}: rounded channel count {channels} is not divisible "
            f"by groups {groups}; retry with rounding to a multiple of {groups}"
        )
        self.layer_index = layer_index


class HeadDivisibility(ScalingError):
    pass


class IndivisibleImage(ScalingError):
    pass


class InvalidGroupWidth(ScalingError):
    pass


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass(frozen=True, slots=True)
class Rounding:
    """Channel rounding policy: nearest integer, floor, or nearest multiple."""

    mode: str  # "nearest" | "floor" | "multiple"
    multiple: int = 1

    @staticmethod
    def nearest() -> "Rounding":
        return Rounding("nearest")

    @staticmethod
    def floor() -> "Rounding":
        return Rounding("floor")

    @staticmethod
    def multiple_of(m: int) -> "Rounding":
        if m < 1:
            raise ValueError("multiple must be >= 1")
        return Rounding("multiple", m)

    def apply(self, x: float) -> int:
        if self.mode == "nearest":
            return max(1, _round_half_up(x))
        if self.mode == "floor":
            return max(1, math.floor(x))
        if self.mode == "multiple":
            return max(self.multiple, self.multiple * _round_half_up(x / self.multiple))
        raise ValueError(f"unknown rounding mode {self.mode!r}")


DEFAULT_ROUNDING = Rounding.multiple_of(8)


class HeadPolicy(str, Enum):
    # Keep the head count; nudge the hidden size to the nearest multiple of it.
    ADJUST_HIDDEN = "adjust_hidden"
    # Scale the head count with the hidden size; error if they stop dividing.
    SCALE_HEADS = "scale_heads"


class PatchKeep(str, Enum):
    TOKENS = "tokens"  # token grid fixed, implied image grows/shrinks
    IMAGE = "image"  # image fixed, token grid recomputed


class TransformKind(str, Enum):
    WIDTH = "width"
    GROUP_WIDTH = "gw"
    DEPTH = "depth"
    HIDDEN = "hidden"
    MLP = "mlp"
    RESOLUTION = "N"
    PATCH = "patch"
    BATCH = "batch"
    DTYPE = "dtype"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class ScalingTransform:
    """One scaling step. ``parameter`` is the knob value; the optional fields
    only apply to the kinds that use them."""

    kind: TransformKind
    parameter: object
    rounding: Rounding = DEFAULT_ROUNDING
    keep: PatchKeep = PatchKeep.TOKENS
    head_policy: HeadPolicy = HeadPolicy.ADJUST_HIDDEN


# --------------------------------------------------------------------------
# Structural transforms.


def _is_channel_source(layer: CnnLayer) -> bool:
    return isinstance(layer, (Conv2d, Linear))


def _derived_flags(spec: CnnSpec) -> list[bool]:
    """Per layer: do its output channels come from a learned layer (vs the
    raw image)? Image-fed conv inputs must keep their channel count."""
    flags: list[bool] = []
    cur = False
    for layer in spec.layers:
        if isinstance(layer, (Conv2d, Linear)):
            cur = True
        flags.append(cur)
    return flags


def width_scale(
    spec: CnnSpec, ratio: float, rounding: Rounding = DEFAULT_ROUNDING
) -> CnnSpec:
    """Scale every learned channel count by ``ratio`` (image input stays).

    Group counts are preserved; if rounding makes a grouped conv's channels
    indivisible by its groups, RoundingBreaksGroups is raised.
    """
    if ratio <= 0:
        raise ScalingError(f"width ratio must be > 0, got {ratio}")
    if ratio == 1.0:
        return spec
    flags = _derived_flags(spec)

    def scale(c: int) -> int:
        return rounding.apply(c * ratio)

    new_layers: list[CnnLayer] = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv2d):
            if layer.input_layer_index is not None:
                src_derived = flags[layer.input_layer_index]
            else:
                src_derived = flags[i - 1] if i > 0 else False
            new_in = scale(layer.in_ch) if src_derived else layer.in_ch
            new_out = scale(layer.out_ch)
            if layer.groups > 1:
                if new_in % layer.groups != 0:
                    raise RoundingBreaksGroups(i, new_in, layer.groups)
                if new_out % layer.groups != 0:
                    raise RoundingBreaksGroups(i, new_out, layer.groups)
            new_layers.append(replace(layer, in_ch=new_in, out_ch=new_out))
        elif isinstance(layer, BatchNorm):
            src_derived = flags[i - 1] if i > 0 else False
            new_layers.append(
                replace(layer, ch=scale(layer.ch) if src_derived else layer.ch)
            )
        elif isinstance(layer, Linear):
            src_derived = flags[i - 1] if i > 0 else False
            new_in = scale(layer.in_features) if src_derived else layer.in_features
            new_layers.append(replace(layer, in_features=new_in))
        else:
            new_layers.append(layer)
    return replace(spec, layers=tuple(new_layers))


def group_width_scale(spec: CnnSpec, group_width: int) -> CnnSpec:
    """Resize every grouped conv to ``groups * group_width`` channels, keeping
    group counts fixed, and rescale the surrounding channel chain by the same
    exact ratio so pointwise convs, norms and residuals stay consistent.
    """
    if group_width < 1:
        raise InvalidGroupWidth(f"group width must be >= 1, got {group_width}")
    old_widths = {
        layer.in_ch // layer.groups
        for layer in spec.layers
        if isinstance(layer, Conv2d) and layer.groups > 1
    }
    if not old_widths:
        raise ScalingError("spec has no grouped convolutions to rescale")
    if len(old_widths) != 1:
        raise ScalingError(
            f"grouped convolutions disagree on group width: {sorted(old_widths)}"
        )
    old = old_widths.pop()
    ratio = Fraction(group_width, old)
    if ratio == 1:
        return spec
    flags = _derived_flags(spec)

    def scale(c: int, where: int) -> int:
        v = c * ratio
        if v.denominator != 1:
            raise ScalingError(
                f"layer {where}: channel count {c} does not scale exactly by {ratio}"
            )
        return int(v)

    new_layers: list[CnnLayer] = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv2d):
            if layer.input_layer_index is not None:
                src_derived = flags[layer.input_layer_index]
            else:
                src_derived = flags[i - 1] if i > 0 else False
            new_in = scale(layer.in_ch, i) if src_derived else layer.in_ch
            new_out = scale(layer.out_ch, i)
            new_layers.append(replace(layer, in_ch=new_in, out_ch=new_out))
        elif isinstance(layer, BatchNorm):
            src_derived = flags[i - 1] if i > 0 else False
            new_layers.append(
                replace(layer, ch=scale(layer.ch, i) if src_derived else layer.ch)
            )
        elif isinstance(layer, Linear):
            src_derived = flags[i - 1] if i > 0 else False
            new_in = scale(layer.in_features, i) if src_derived else layer.in_features
            new_layers.append(replace(layer, in_features=new_in))
        else:
            new_layers.append(layer)
    return replace(spec, layers=tuple(new_layers))


def hidden_scale(
    spec: ViTSpec, new_hidden: int, head_policy: HeadPolicy = HeadPolicy.ADJUST_HIDDEN
) -> ViTSpec:
    if new_hidden < 1:
        raise ScalingError(f"hidden size must be >= 1, got {new_hidden}")
    k = spec.num_heads
    if head_policy is HeadPolicy.ADJUST_HIDDEN:
        adjusted = max(k, k * _round_half_up(new_hidden / k))
        return replace(spec, hidden_dim=adjusted)
    new_heads = max(1, _round_half_up(k * new_hidden / spec.hidden_dim))
    if new_hidden % new_heads != 0:
        raise HeadDivisibility(
            f"hidden size {new_hidden} not divisible by scaled head count {new_heads}"
        )
    return replace(spec, hidden_dim=new_hidden, num_heads=new_heads)


def mlp_scale(spec: ViTSpec, new_mlp: int) -> ViTSpec:
    if new_mlp < 1:
        raise ScalingError(f"mlp size must be >= 1, got {new_mlp}")
    return replace(spec, mlp_dim=new_mlp)


def depth_scale(spec: ViTSpec, new_depth: int) -> ViTSpec:
    if new_depth < 1:
        raise ScalingError(f"depth must be >= 1, got {new_depth}")
    return replace(spec, depth=new_depth)


def patch_scale(
    spec: ViTSpec, new_patch: int, keep: PatchKeep = PatchKeep.TOKENS
) -> ViTSpec:
    if new_patch < 1:
        raise ScalingError(f"patch size must be >= 1, got {new_patch}")
    if keep is PatchKeep.TOKENS:
        return replace(spec, patch_size=new_patch)
    image = spec.image_side
    if image % new_patch != 0:
        raise IndivisibleImage(
            f"image side {image} is not divisible by patch size {new_patch}"
        )
    return replace(spec, patch_size=new_patch, tokens_per_side=image // new_patch)


# --------------------------------------------------------------------------
# Evaluation transforms: the spec is untouched.


def resolution_scale(spec: ArchSpec, cfg: EvalConfig, new_resolution: int) -> EvalConfig:
    if new_resolution < 1:
        raise ScalingError(f"resolution must be >= 1, got {new_resolution}")
    out = replace(cfg, input_resolution=new_resolution)
    if isinstance(spec, CnnSpec):
        # Surface infeasible resolutions here rather than at report time.
        from .cost import propagate_shapes

        propagate_shapes(spec, out)
    return out


def dtype_scale(cfg: EvalConfig, dtype: DTypeDesc) -> EvalConfig:
    return replace(cfg, dtype=dtype)


def batch_scale(cfg: EvalConfig, batch_size: int) -> EvalConfig:
    if batch_size < 1:
        raise ScalingError(f"batch size must be >= 1, got {batch_size}")
    return replace(cfg, batch_size=batch_size)


# --------------------------------------------------------------------------
# Transform application and canonical ids.


def apply_transform(
    spec: ArchSpec, cfg: EvalConfig, t: ScalingTransform
) -> tuple[ArchSpec, EvalConfig]:
    kind = t.kind
    if kind is TransformKind.HYBRID:
        for sub in t.parameter:  # ordered member list
            spec, cfg = apply_transform(spec, cfg, sub)
        return spec, cfg
    if kind is TransformKind.WIDTH:
        if not isinstance(spec, CnnSpec):
            raise ScalingError("width applies to conv specs")
        return width_scale(spec, float(t.parameter), t.rounding), cfg
    if kind is TransformKind.GROUP_WIDTH:
        if not isinstance(spec, CnnSpec):
            raise ScalingError("group width applies to conv specs")
        return group_width_scale(spec, int(t.parameter)), cfg
    if kind is TransformKind.HIDDEN:
        if not isinstance(spec, ViTSpec):
            raise ScalingError("hidden size applies to transformer specs")
        return hidden_scale(spec, int(t.parameter), t.head_policy), cfg
    if kind is TransformKind.MLP:
        if not isinstance(spec, ViTSpec):
            raise ScalingError("mlp size applies to transformer specs")
        return mlp_scale(spec, int(t.parameter)), cfg
    if kind is TransformKind.DEPTH:
        if not isinstance(spec, ViTSpec):
            raise ScalingError("depth applies to transformer specs")
        return depth_scale(spec, int(t.parameter)), cfg
    if kind is TransformKind.PATCH:
        if not isinstance(spec, ViTSpec):
            raise ScalingError("patch size applies to transformer specs")
        return patch_scale(spec, int(t.parameter), t.keep), cfg
    if kind is TransformKind.RESOLUTION:
        return spec, resolution_scale(spec, cfg, int(t.parameter))
    if kind is TransformKind.BATCH:
        return spec, batch_scale(cfg, int(t.parameter))
    if kind is TransformKind.DTYPE:
        param = t.parameter
        dtype = param if isinstance(param, DTypeDesc) else dtype_from_name(str(param))
        return spec, dtype_scale(cfg, dtype)
    raise ScalingError(f"unknown transform kind {kind!r}")


def apply_chain(
    spec: ArchSpec, cfg: EvalConfig, chain: Iterable[ScalingTransform]
) -> tuple[ArchSpec, EvalConfig]:
    for t in chain:
        spec, cfg = apply_transform(spec, cfg, t)
    return spec, cfg


@dataclass(frozen=True)
class ScaledConfig:
    """A base spec plus an applied transform chain and its evaluation config."""

    base_name: str
    transforms: tuple[ScalingTransform, ...]
    spec: ArchSpec
    eval: EvalConfig

    @property
    def config_id(self) -> str:
        return config_id_of(self.base_name, self.transforms)


def make_config(
    base_name: str,
    base_spec: ArchSpec,
    base_eval: EvalConfig,
    chain: Iterable[ScalingTransform],
) -> ScaledConfig:
    chain = tuple(chain)
    spec, cfg = apply_chain(base_spec, base_eval, chain)
    return ScaledConfig(base_name=base_name, transforms=chain, spec=spec, eval=cfg)


def _format_number(v: object) -> str:
    if isinstance(v, bool):
        raise ScalingError("boolean is not a transform parameter")
    if isinstance(v, int):
        return str(v)
    f = float(v)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def _encode_one(t: ScalingTransform) -> list[str]:
    if t.kind is TransformKind.HYBRID:
        out: list[str] = []
        for sub in t.parameter:
            out.extend(_encode_one(sub))
        return out
    if t.kind is TransformKind.DTYPE:
        param = t.parameter
        name = param.name if isinstance(param, DTypeDesc) else str(param)
        return [f"dtype={name}"]
    value = _format_number(t.parameter)
    suffix = ""
    if t.kind is TransformKind.PATCH and t.keep is PatchKeep.IMAGE:
        suffix = ":image"
    if t.kind is TransformKind.HIDDEN and t.head_policy is HeadPolicy.SCALE_HEADS:
        suffix = ":scale_heads"
    if t.kind in (TransformKind.WIDTH, TransformKind.GROUP_WIDTH):
        r = t.rounding
        if t.kind is TransformKind.WIDTH and r != DEFAULT_ROUNDING:
            if r.mode == "multiple":
                suffix = f":m{r.multiple}"
            else:
                suffix = f":{r.mode}"
    return [f"{t.kind.value}={value}{suffix}"]


def config_id_of(base_name: str, chain: Iterable[ScalingTransform]) -> str:
    parts = [base_name]
    for t in chain:
        parts.extend(_encode_one(t))
    return ";".join(parts)


_KIND_BY_KEY = {k.value: k for k in TransformKind if k is not TransformKind.HYBRID}


def _parse_one(token: str) -> ScalingTransform:
    key, sep, raw = token.partition("=")
    if not sep:
        raise ScalingError(f"malformed transform token {token!r}")
    if key not in _KIND_BY_KEY:
        raise ScalingError(f"unknown transform key {key!r} in {token!r}")
    kind = _KIND_BY_KEY[key]
    value, _, suffix = raw.partition(":")
    if kind is TransformKind.DTYPE:
        return ScalingTransform(kind, dtype_from_name(raw))
    keep = PatchKeep.TOKENS
    head_policy = HeadPolicy.ADJUST_HIDDEN
    rounding = DEFAULT_ROUNDING
    if suffix:
        if kind is TransformKind.PATCH and suffix == "image":
            keep = PatchKeep.IMAGE
        elif kind is TransformKind.HIDDEN and suffix == "scale_heads":
            head_policy = HeadPolicy.SCALE_HEADS
        elif kind is TransformKind.WIDTH and suffix in ("nearest", "floor"):
            rounding = Rounding(suffix)
        elif kind is TransformKind.WIDTH and suffix.startswith("m"):
            rounding = Rounding.multiple_of(int(suffix[1:]))
        else:
            raise ScalingError(f"unknown option {suffix!r} in {token!r}")
    if kind is TransformKind.WIDTH:
        param: object = float(value)
    else:
        param = int(value)
    return ScalingTransform(
        kind, param, rounding=rounding, keep=keep, head_policy=head_policy
    )


def parse_config_id(
    config_id: str,
    bases: Mapping[str, ArchSpec] | None = None,
    base_eval: EvalConfig | None = None,
) -> ScaledConfig:
    """Rebuild a ScaledConfig from its canonical id.

    ``bases`` maps base names to specs; by default the preset registry is
    used. The evaluation config starts from ``base_eval`` (defaults apply
    when omitted); resolution/batch/dtype tokens then rewrite it.
    """
    parts = config_id.split(";")
    if not parts or not parts[0]:
        raise ScalingError(f"config id {config_id!r} has no base name")
    base_name = parts[0]
    if bases is None:
        from .presets import PRESETS

        if base_name not in PRESETS:
            raise ScalingError(f"unknown base {base_name!r} in config id")
        base_spec = PRESETS[base_name].build()
        if base_eval is None:
            base_eval = PRESETS[base_name].default_eval
    else:
        if base_name not in bases:
            raise ScalingError(f"unknown base {base_name!r} in config id")
        base_spec = bases[base_name]
    chain = tuple(_parse_one(tok) for tok in parts[1:] if tok)
    return make_config(base_name, base_spec, base_eval or EvalConfig(), chain)
