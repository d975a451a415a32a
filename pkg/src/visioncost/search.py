"""Sweep enumeration, Pareto filtering, budget matching and selection.

A ``SweepSpace`` is a base configuration plus value axes, one per transform
kind; enumeration walks the cross product in deterministic order (first
axis slowest), skipping -- and recording -- combinations the transforms
reject. Evaluated configurations become ``FrontierPoint`` rows that flow
into the Pareto filter, the FLOPs budget matcher, and annotation-driven
selection of the cheapest acceptable configuration.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._pareto import dominated_mask
from .arch import ArchSpec, EvalConfig, ViTSpec
from .cost import CostReport, InfeasibleResolution, cost_report
from .scaling import (
    ScaledConfig,
    ScalingError,
    ScalingTransform,
    TransformKind,
    make_config,
)

logger = logging.getLogger(__name__)

__all__ = [
    "SweepAxis",
    "SweepSpace",
    "SpaceTooLarge",
    "SkippedConfig",
    "EnumeratedSweep",
    "enumerate_space",
    "FrontierPoint",
    "point_from_report",
    "frontier_points",
    "pareto_front",
    "DEFAULT_OBJECTIVES",
    "AnnotationTable",
    "TargetUnreachable",
    "MatchResult",
    "match_flops_budget",
    "NoFeasibleCandidate",
    "best_compressed",
]

ENUMERATION_CAP = 1_000_000


class SpaceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SweepAxis:
    kind: TransformKind
    values: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise ValueError(f"axis {self.kind.value} has no values")


@dataclass(frozen=True)
class SweepSpace:
    base_name: str
    base_spec: ArchSpec
    base_eval: EvalConfig
    axes: tuple[SweepAxis, ...]
    cap: int = ENUMERATION_CAP

    def __post_init__(self) -> None:
        object.__setattr__(self, "axes", tuple(self.axes))

    @property
    def size(self) -> int:
        n = 1
        for axis in self.axes:
            n *= len(axis.values)
        return n


@dataclass(frozen=True)
class SkippedConfig:
    values: tuple
    reason: str


@dataclass(frozen=True)
class EnumeratedSweep:
    configs: tuple[ScaledConfig, ...]
    skipped: tuple[SkippedConfig, ...]


def enumerate_space(space: SweepSpace) -> EnumeratedSweep:
    """Cross product of the axes, in order; invalid combos are recorded."""
    if space.size > space.cap:
        raise SpaceTooLarge(
            f"sweep space has {space.size} combinations, cap is {space.cap}"
        )
    configs: list[ScaledConfig] = []
    skipped: list[SkippedConfig] = []
    value_lists = [axis.values for axis in space.axes]
    for combo in product(*value_lists):
        chain = tuple(
            ScalingTransform(axis.kind, value)
            for axis, value in zip(space.axes, combo)
        )
        try:
            configs.append(
                make_config(space.base_name, space.base_spec, space.base_eval, chain)
            )
        except (ScalingError, InfeasibleResolution, ValueError) as exc:
            skipped.append(SkippedConfig(values=combo, reason=str(exc)))
            logger.warning("skipping %s: %s", combo, exc)
    return EnumeratedSweep(configs=tuple(configs), skipped=tuple(skipped))


# --------------------------------------------------------------------------
# Frontier points and the Pareto filter.


@dataclass(frozen=True)
class FrontierPoint:
    config_id: str
    flops: int
    peak_activation_bytes: int
    model_bytes: int
    total_memory_bytes: int
    annotations: Mapping[str, float] = field(default_factory=dict)

    def objective_value(self, key: str) -> float:
        if key in ("flops", "peak_activation_bytes", "model_bytes", "total_memory_bytes"):
            return float(getattr(self, key))
        return float(self.annotations[key])


def point_from_report(
    config_id: str, report: CostReport, annotations: Mapping[str, float] | None = None
) -> FrontierPoint:
    return FrontierPoint(
        config_id=config_id,
        flops=report.flops,
        peak_activation_bytes=report.peak_activation_bytes,
        model_bytes=report.model_bytes,
        total_memory_bytes=report.total_memory_bytes,
        annotations=dict(annotations or {}),
    )


def frontier_points(
    configs: Iterable[ScaledConfig], table: "AnnotationTable | None" = None
) -> list[FrontierPoint]:
    """Cost every configuration and attach any annotations it has."""
    points = []
    for config in configs:
        report = cost_report(config.spec, config.eval)
        cid = config.config_id
        ann = table.for_config(cid) if table is not None else {}
        points.append(point_from_report(cid, report, ann))
    return points


DEFAULT_OBJECTIVES: tuple[tuple[str, str], ...] = (
    ("flops", "min"),
    ("total_memory_bytes", "min"),
)


def pareto_front(
    points: Sequence[FrontierPoint],
    objectives: Sequence[tuple[str, str]] = DEFAULT_OBJECTIVES,
) -> list[FrontierPoint]:
    """Non-dominated subset under the given (key, "min"|"max") objectives.

    Dominance is non-strict on every objective with at least one strict
    improvement; points with identical objective vectors are all kept.
    Duplicate config ids collapse to their first occurrence, the result is
    ordered by config id, and the filter is idempotent.
    """
    if not points:
        raise ValueError("pareto_front needs at least one point")
    if not objectives:
        raise ValueError("pareto_front needs at least one objective")
    seen: dict[str, FrontierPoint] = {}
    for p in points:
        seen.setdefault(p.config_id, p)
    unique = list(seen.values())
    matrix = np.empty((len(unique), len(objectives)), dtype=np.float64)
    for col, (key, direction) in enumerate(objectives):
        if direction not in ("min", "max"):
            raise ValueError(f"objective direction must be 'min' or 'max', got {direction!r}")
        sign = 1.0 if direction == "min" else -1.0
        for row, p in enumerate(unique):
            matrix[row, col] = sign * p.objective_value(key)
    mask = dominated_mask(matrix)
    kept = [p for p, dom in zip(unique, mask) if not dom]
    return sorted(kept, key=lambda p: p.config_id)


# --------------------------------------------------------------------------
# Accuracy annotations (never predicted -- always supplied by the caller).


ANNOTATION_HEADER = ("config_id", "metric", "value")


@dataclass
class AnnotationTable:
    """(config id, metric) -> value table, typically loaded from CSV."""

    values: dict[tuple[str, str], float] = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, float]]) -> "AnnotationTable":
        table = cls()
        for cid, metric, value in rows:
            table.values[(cid, metric)] = float(value)
        return table

    @classmethod
    def from_csv(cls, path: str | Path) -> "AnnotationTable":
        text = Path(path).read_text(encoding="utf-8")
        if not text.strip():
            logger.warning("annotation file %s is empty", path)
            return cls()
        reader = csv.reader(text.splitlines())
        header = next(reader)
        if tuple(h.strip() for h in header) != ANNOTATION_HEADER:
            raise ValueError(
                f"annotation header must be {','.join(ANNOTATION_HEADER)}, "
                f"got {','.join(header)}"
            )
        table = cls()
        first_line: dict[tuple[str, str], int] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"line {lineno}: expected 3 columns, got {len(row)}")
            cid, metric, raw = row[0].strip(), row[1].strip(), row[2].strip()
            key = (cid, metric)
            if key in first_line:
                raise ValueError(
                    f"duplicate annotation for ({cid}, {metric}) on line "
                    f"{first_line[key]} and line {lineno}"
                )
            try:
                value = float(raw)
            except ValueError:
                raise ValueError(f"line {lineno}: value {raw!r} is not a number") from None
            first_line[key] = lineno
            table.values[key] = value
        return table

    def get(self, config_id: str, metric: str) -> float | None:
        return self.values.get((config_id, metric))

    def for_config(self, config_id: str) -> dict[str, float]:
        return {
            metric: value
            for (cid, metric), value in sorted(self.values.items())
            if cid == config_id
        }

    def metrics(self) -> list[str]:
        return sorted({metric for _, metric in self.values})

    def __len__(self) -> int:
        return len(self.values)


# --------------------------------------------------------------------------
# FLOPs budget matching over a monotone knob.


class TargetUnreachable(ValueError):
    def __init__(self, target: int, attainable: tuple[int, int]):
        lo, hi = attainable
        super().__init__(
            f"target {target} FLOPs is outside the attainable range [{lo}, {hi}]"
        )
        self.target = target
        self.attainable = attainable


@dataclass(frozen=True)
class MatchResult:
    config: ScaledConfig
    flops: int
    target: int
    deviation: int
    relaxed_value: float
    within_tol: bool | None
    bracket: tuple[ScaledConfig, ScaledConfig] | None


_DEFAULT_RANGES: dict[TransformKind, tuple[int, int]] = {
    TransformKind.DEPTH: (1, 256),
    TransformKind.HIDDEN: (1, 8192),
    TransformKind.MLP: (1, 32768),
    TransformKind.RESOLUTION: (1, 4096),
}

MAX_BISECTION_ITERATIONS = 64


def _knob_step(spec: ArchSpec, knob: TransformKind) -> int:
    if knob is TransformKind.HIDDEN and isinstance(spec, ViTSpec):
        return spec.num_heads  # keep the head count dividing the hidden size
    return 1


def match_flops_budget(
    base_spec: ArchSpec,
    base_eval: EvalConfig,
    knob: TransformKind,
    target_flops: int,
    tol: float | None = None,
    value_range: tuple[int, int] | None = None,
    base_name: str = "base",
) -> MatchResult:
    """Find the discrete knob value whose FLOPs are closest to the target.

    The knob must be one FLOPs-monotone transform kind (depth, hidden, mlp,
    resolution). Bisection over the discrete range takes at most 64 steps;
    ties between equally-close values resolve to the smaller knob value.
    ``tol`` is relative; when given and missed, the bracketing pair around
    the target is attached. ``relaxed_value`` is the interpolated continuous
    knob value that would hit the target exactly.
    """
    if knob not in _DEFAULT_RANGES:
        raise ValueError(f"knob {knob.value!r} is not supported for budget matching")
    if target_flops < 1:
        raise ValueError(f"target FLOPs must be >= 1, got {target_flops}")
    lo, hi = value_range if value_range is not None else _DEFAULT_RANGES[knob]
    step = _knob_step(base_spec, knob)
    lo = max(lo, step)
    lo = ((lo + step - 1) // step) * step
    hi = (hi // step) * step
    if hi < lo:
        raise ValueError(f"empty knob range for {knob.value}")

    def build(value: int) -> ScaledConfig:
        return make_config(
            base_name, base_spec, base_eval, (ScalingTransform(knob, value),)
        )

    cache: dict[int, tuple[ScaledConfig, int]] = {}

    def flops_at(value: int) -> tuple[ScaledConfig, int]:
        if value not in cache:
            config = build(value)
            cache[value] = (config, cost_report(config.spec, config.eval).flops)
        return cache[value]

    # For CNN resolution knobs, small values can be infeasible: lift the
    # lower bound to the first value that propagates.
    feas_lo = lo
    while feas_lo <= hi:
        try:
            flops_at(feas_lo)
            break
        except InfeasibleResolution:
            feas_lo += step
    if feas_lo > hi:
        raise ValueError(f"no feasible knob value in [{lo}, {hi}]")
    lo = feas_lo

    _, f_lo = flops_at(lo)
    _, f_hi = flops_at(hi)
    if target_flops < f_lo or target_flops > f_hi:
        raise TargetUnreachable(target_flops, (f_lo, f_hi))

    # Smallest value whose FLOPs reach the target (f is monotone increasing).
    lo_v, hi_v = lo, hi
    for _ in range(MAX_BISECTION_ITERATIONS):
        if hi_v - lo_v <= step:
            break
        mid = lo_v + ((hi_v - lo_v) // (2 * step)) * step
        _, f_mid = flops_at(mid)
        if f_mid >= target_flops:
            hi_v = mid
        else:
            lo_v = mid
    _, f_lo_v = flops_at(lo_v)
    upper = lo_v if f_lo_v >= target_flops else hi_v
    lower = max(lo, upper - step)

    candidates = sorted({lower, upper})
    best_value = min(
        candidates, key=lambda v: (abs(flops_at(v)[1] - target_flops), v)
    )
    best_config, best_flops = flops_at(best_value)
    deviation = abs(best_flops - target_flops)

    config_lower, f_lower = flops_at(lower)
    config_upper, f_upper = flops_at(upper)
    if f_upper != f_lower:
        relaxed = lower + (target_flops - f_lower) * (upper - lower) / (f_upper - f_lower)
    else:
        relaxed = float(best_value)

    within_tol: bool | None = None
    bracket: tuple[ScaledConfig, ScaledConfig] | None = None
    if tol is not None:
        within_tol = deviation <= tol * target_flops
        if not within_tol:
            bracket = (config_lower, config_upper)
    return MatchResult(
        config=best_config,
        flops=best_flops,
        target=target_flops,
        deviation=deviation,
        relaxed_value=relaxed,
        within_tol=within_tol,
        bracket=bracket,
    )


# --------------------------------------------------------------------------
# Cheapest configuration within an accuracy-drop budget.


class NoFeasibleCandidate(ValueError):
    pass


def best_compressed(
    points: Sequence[FrontierPoint],
    table: AnnotationTable,
    metric: str,
    max_drop: float,
    objective: str = "flops",
    baseline_id: str | None = None,
) -> FrontierPoint:
    """Cheapest point whose metric is within ``max_drop`` of the baseline's.

    Points without an annotation for the metric are excluded (with a
    warning). Ties on the objective resolve by config id.
    """
    if max_drop < 0:
        raise ValueError(f"max_drop must be >= 0, got {max_drop}")
    if baseline_id is None:
        raise ValueError("baseline_id is required")
    baseline_value = table.get(baseline_id, metric)
    if baseline_value is None:
        raise NoFeasibleCandidate(
            f"baseline {baseline_id!r} has no annotation for metric {metric!r}"
        )
    floor_value = baseline_value - max_drop
    feasible: list[tuple[float, str, FrontierPoint]] = []
    for p in points:
        value = table.get(p.config_id, metric)
        if value is None:
            logger.warning(
                "config %s has no %r annotation; excluded from selection",
                p.config_id,
                metric,
            )
            continue
        if value >= floor_value:
            feasible.append((p.objective_value(objective), p.config_id, p))
    if not feasible:
        raise NoFeasibleCandidate(
            f"no candidate keeps {metric} within {max_drop} of baseline "
            f"{baseline_id!r} ({baseline_value})"
        )
    feasible.sort(key=lambda item: (item[0], item[1]))
    return feasible[0][2]
