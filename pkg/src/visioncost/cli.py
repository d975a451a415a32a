"""Command-line interface.

Subcommands: ``cost`` (report one spec), ``sweep`` (enumerate a space and
write frontier/pareto/plot files), ``match`` (FLOPs budget matching),
``best`` (cheapest config within an accuracy-drop budget), ``presets``
(built-in specs). Exit codes: 0 success, 1 I/O failure, 2 validation or
parse failure, 3 infeasible request, 64 usage error.

Outputs are byte-deterministic for identical inputs (the run manifest's
timestamp aside) and files are written atomically via temp-and-rename.
No environment variable changes any result; ``VISIONCOST_BACKEND`` only
selects the Pareto kernel implementation, which is output-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import re
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .arch import (
    ArchSpec,
    DTYPES,
    EvalConfig,
    FlopConvention,
    dtype_from_name,
    load_spec,
    validate_spec,
)
from .cost import (
    InfeasibleResolution,
    ShapeMismatch,
    cost_report,
    report_to_csv,
    report_to_dict,
    report_to_json,
)
from .presets import PRESETS
from .scaling import ScalingError, TransformKind
from .search import (
    AnnotationTable,
    FrontierPoint,
    NoFeasibleCandidate,
    SpaceTooLarge,
    SweepAxis,
    SweepSpace,
    TargetUnreachable,
    best_compressed,
    enumerate_space,
    frontier_points,
    match_flops_budget,
    pareto_front,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_USAGE = 64

FRONTIER_COLUMNS = (
    "config_id",
    "flops",
    "peak_activation_bytes",
    "model_bytes",
    "total_memory_bytes",
)

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _emit_error(kind: str, message: str, **extra: Any) -> None:
    payload: dict[str, Any] = {"error": kind, "message": message}
    payload.update(extra)
    print(json.dumps(payload), file=sys.stderr)


def _load_spec_checked(path: str) -> tuple[ArchSpec | None, int]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _emit_error("io", f"cannot read {path}: {exc}")
        return None, EXIT_IO
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        _emit_error("parse", str(exc), line=exc.lineno, column=exc.colno, path=path)
        return None, EXIT_VALIDATION
    from .arch import spec_from_dict

    try:
        spec = spec_from_dict(data)
    except ValueError as exc:
        _emit_error("spec", str(exc), path=path)
        return None, EXIT_VALIDATION
    violations = validate_spec(spec)
    if violations:
        _emit_error(
            "validation",
            f"{len(violations)} violation(s) in {path}",
            violations=[
                {"layer_index": v.layer_index, "message": v.message} for v in violations
            ],
        )
        return None, EXIT_VALIDATION
    return spec, EXIT_OK


def _add_eval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--resolution",
        type=int,
        default=None,
        help="pixels per side (CNN) or tokens per side (ViT); spec default when omitted",
    )
    parser.add_argument("--batch", type=int, default=1, help="batch size (default 1)")
    parser.add_argument(
        "--dtype",
        choices=sorted(DTYPES),
        default="fp32",
        help="storage format (default fp32)",
    )
    parser.add_argument(
        "--convention",
        choices=[c.value for c in FlopConvention],
        default=FlopConvention.CLOSED_FORM.value,
        help="FLOP counting convention for transformer specs (default closed_form)",
    )


def _eval_from_args(args: argparse.Namespace) -> EvalConfig:
    if args.batch < 1:
        raise UsageError(f"--batch must be >= 1, got {args.batch}")
    if args.resolution is not None and args.resolution < 1:
        raise UsageError(f"--resolution must be >= 1, got {args.resolution}")
    return EvalConfig(
        batch_size=args.batch,
        dtype=dtype_from_name(args.dtype),
        input_resolution=args.resolution,
        flop_convention=FlopConvention(args.convention),
    )


# --------------------------------------------------------------------------
# cost


def _cmd_cost(args: argparse.Namespace) -> int:
    spec, code = _load_spec_checked(args.spec)
    if spec is None:
        return code
    cfg = _eval_from_args(args)
    try:
        report = cost_report(spec, cfg)
    except InfeasibleResolution as exc:
        _emit_error("infeasible_resolution", str(exc), layer_index=exc.layer_index)
        return EXIT_INFEASIBLE
    except ShapeMismatch as exc:
        _emit_error("shape_mismatch", str(exc), layer_index=exc.layer_index)
        return EXIT_VALIDATION
    if args.format == "csv":
        sys.stdout.write(report_to_csv(report))
    else:
        sys.stdout.write(report_to_json(report) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep


def _parse_eval_dict(d: dict[str, Any], where: str) -> EvalConfig:
    allowed = {"batch_size", "dtype", "input_resolution", "flop_convention"}
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"{where}: unknown key(s) {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    if "batch_size" in d:
        kwargs["batch_size"] = int(d["batch_size"])
    if "dtype" in d:
        kwargs["dtype"] = dtype_from_name(str(d["dtype"]))
    if "input_resolution" in d and d["input_resolution"] is not None:
        kwargs["input_resolution"] = int(d["input_resolution"])
    if "flop_convention" in d:
        try:
            kwargs["flop_convention"] = FlopConvention(d["flop_convention"])
        except ValueError:
            raise ValueError(
                f"{where}: flop_convention must be one of "
                f"{[c.value for c in FlopConvention]}"
            ) from None
    return EvalConfig(**kwargs)


_KIND_BY_KEY = {k.value: k for k in TransformKind if k is not TransformKind.HYBRID}


def _load_space(path: str) -> SweepSpace:
    base_dir = Path(path).parent
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError("space file must hold a JSON object")
    allowed = {"base", "spec_file", "eval", "axes", "cap"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"space file: unknown key(s) {sorted(unknown)}")
    if ("base" in data) == ("spec_file" in data):
        raise ValueError("space file needs exactly one of 'base' or 'spec_file'")
    if "base" in data:
        name = str(data["base"])
        if name not in PRESETS:
            known = ", ".join(sorted(PRESETS))
            raise ValueError(f"unknown preset {name!r} (known: {known})")
        base_spec = PRESETS[name].build()
        base_name = name
        base_eval = PRESETS[name].default_eval
    else:
        spec_path = base_dir / str(data["spec_file"])
        base_spec = load_spec(spec_path)
        violations = validate_spec(base_spec)
        if violations:
            raise ValueError(
                f"spec {spec_path} has violations: "
                + "; ".join(str(v) for v in violations)
            )
        base_name = base_spec.name
        base_eval = EvalConfig()
    if "eval" in data:
        if not isinstance(data["eval"], dict):
            raise ValueError("space 'eval' must be an object")
        base_eval = _parse_eval_dict(data["eval"], "space eval")
    axes_raw = data.get("axes")
    if not isinstance(axes_raw, list) or not axes_raw:
        raise ValueError("space file needs a non-empty 'axes' array")
    axes: list[SweepAxis] = []
    for i, axis in enumerate(axes_raw):
        if not isinstance(axis, dict) or set(axis) != {"kind", "values"}:
            raise ValueError(f"axis {i} must be an object with 'kind' and 'values'")
        kind_key = str(axis["kind"])
        if kind_key not in _KIND_BY_KEY:
            raise ValueError(
                f"axis {i}: unknown kind {kind_key!r} "
                f"(known: {sorted(_KIND_BY_KEY)})"
            )
        values = axis["values"]
        if not isinstance(values, list) or not values:
            raise ValueError(f"axis {i}: 'values' must be a non-empty array")
        axes.append(SweepAxis(_KIND_BY_KEY[kind_key], tuple(values)))
    kwargs: dict[str, Any] = {}
    if "cap" in data:
        kwargs["cap"] = int(data["cap"])
    return SweepSpace(
        base_name=base_name,
        base_spec=base_spec,
        base_eval=base_eval,
        axes=tuple(axes),
        **kwargs,
    )


def _write_atomic(path: Path, data: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _format_metric(value: float | None) -> str:
    if value is None:
        return ""
    return repr(value)


def _frontier_rows(
    points: Sequence[FrontierPoint], metrics: Sequence[str]
) -> list[list[Any]]:
    rows = []
    for p in points:
        row: list[Any] = [
            p.config_id,
            p.flops,
            p.peak_activation_bytes,
            p.model_bytes,
            p.total_memory_bytes,
        ]
        row.extend(_format_metric(p.annotations.get(m)) for m in metrics)
        rows.append(row)
    return rows


def read_frontier_csv(path: str | Path) -> tuple[list[FrontierPoint], list[str]]:
    """Re-ingest a frontier.csv; returns (points, metric column names)."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(text.splitlines())
    header = next(reader)
    if tuple(header[: len(FRONTIER_COLUMNS)]) != FRONTIER_COLUMNS:
        raise ValueError(
            f"frontier header must start with {','.join(FRONTIER_COLUMNS)}"
        )
    metrics = list(header[len(FRONTIER_COLUMNS) :])
    points: list[FrontierPoint] = []
    for row in reader:
        if not row:
            continue
        annotations = {
            m: float(cell)
            for m, cell in zip(metrics, row[len(FRONTIER_COLUMNS) :])
            if cell != ""
        }
        points.append(
            FrontierPoint(
                config_id=row[0],
                flops=int(row[1]),
                peak_activation_bytes=int(row[2]),
                model_bytes=int(row[3]),
                total_memory_bytes=int(row[4]),
                annotations=annotations,
            )
        )
    return points, metrics


def _series_label(space: SweepSpace, transforms: Sequence) -> str:
    if not space.axes:
        return "base"
    if len(space.axes) == 1:
        return space.axes[0].kind.value
    parts = []
    for axis, transform in list(zip(space.axes, transforms))[:-1]:
        parts.append(f"{axis.kind.value}={transform.parameter}")
    return ";".join(parts)


def _safe_filename(config_id: str) -> str:
    digest = hashlib.sha256(config_id.encode("utf-8")).hexdigest()[:8]
    safe = re.sub(r"[^A-Za-z0-9._-]+", "_", config_id).strip("_")
    return f"{safe}-{digest}.json"


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _eval_to_dict(cfg: EvalConfig) -> dict[str, Any]:
    return {
        "batch_size": cfg.batch_size,
        "dtype": cfg.dtype.name,
        "input_resolution": cfg.input_resolution,
        "flop_convention": cfg.flop_convention.value,
    }


def _manifest(
    command: Sequence[str], inputs: Sequence[Path], cfg: EvalConfig
) -> dict[str, Any]:
    return {
        "tool": "visioncost",
        "version": __version__,
        "command": list(command),
        "inputs": {str(p): _sha256_file(p) for p in inputs},
        "eval": _eval_to_dict(cfg),
        "generated_at": datetime.now(timezone.utc).isoformat(),
    }


def _cmd_sweep(args: argparse.Namespace, argv: Sequence[str]) -> int:
    space_path = Path(args.space)
    try:
        space = _load_space(args.space)
    except OSError as exc:
        _emit_error("io", f"cannot read {args.space}: {exc}")
        return EXIT_IO
    except json.JSONDecodeError as exc:
        _emit_error("parse", str(exc), line=exc.lineno, column=exc.colno, path=args.space)
        return EXIT_VALIDATION
    except ValueError as exc:
        _emit_error("space", str(exc), path=args.space)
        return EXIT_VALIDATION

    table = AnnotationTable()
    input_files = [space_path]
    if args.annotations:
        ann_path = Path(args.annotations)
        try:
            table = AnnotationTable.from_csv(ann_path)
        except OSError as exc:
            _emit_error("io", f"cannot read {args.annotations}: {exc}")
            return EXIT_IO
        except ValueError as exc:
            _emit_error("annotations", str(exc), path=args.annotations)
            return EXIT_VALIDATION
        input_files.append(ann_path)
        if not len(table):
            logger.warning("annotation table %s is empty", args.annotations)

    try:
        enumerated = enumerate_space(space)
    except SpaceTooLarge as exc:
        _emit_error("space_too_large", str(exc))
        return EXIT_VALIDATION
    for skip in enumerated.skipped:
        logger.warning("skipped %s: %s", skip.values, skip.reason)
    if not enumerated.configs:
        _emit_error("infeasible", "every combination in the space was rejected")
        return EXIT_INFEASIBLE

    points = frontier_points(enumerated.configs, table)
    metrics = table.metrics()
    pareto = pareto_front(points)

    out_dir = Path(args.out)
    reports_dir = out_dir / "reports"
    try:
        reports_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _emit_error("io", f"cannot create {out_dir}: {exc}")
        return EXIT_IO

    header = list(FRONTIER_COLUMNS) + metrics
    _write_atomic(out_dir / "frontier.csv", _csv_text(header, _frontier_rows(points, metrics)))
    _write_atomic(out_dir / "pareto.csv", _csv_text(header, _frontier_rows(pareto, metrics)))

    plot_rows = []
    for config, point in zip(enumerated.configs, points):
        plot_rows.append(
            [
                _series_label(space, config.transforms),
                point.config_id,
                point.flops,
                point.peak_activation_bytes,
                point.model_bytes,
                point.total_memory_bytes,
            ]
        )
    buf = io.StringIO()
    tsv = csv.writer(buf, delimiter="\t", lineterminator="\n")
    tsv.writerow(["series"] + list(FRONTIER_COLUMNS))
    tsv.writerows(plot_rows)
    _write_atomic(out_dir / "plot.tsv", buf.getvalue())

    for config, point in zip(enumerated.configs, points):
        report = cost_report(config.spec, config.eval)
        payload = {
            "config_id": point.config_id,
            "annotations": dict(sorted(point.annotations.items())),
            "report": report_to_dict(report),
        }
        _write_atomic(
            reports_dir / _safe_filename(point.config_id),
            json.dumps(payload, indent=2) + "\n",
        )

    manifest = _manifest(argv, input_files, space.base_eval)
    manifest["configs"] = len(points)
    manifest["skipped"] = len(enumerated.skipped)
    _write_atomic(out_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")

    print(
        f"wrote {len(points)} configs ({len(enumerated.skipped)} skipped), "
        f"{len(pareto)} on the frontier -> {out_dir}"
    )
    return EXIT_OK


# --------------------------------------------------------------------------
# match


_KNOB_CHOICES = {
    "depth": TransformKind.DEPTH,
    "hidden": TransformKind.HIDDEN,
    "mlp": TransformKind.MLP,
    "resolution": TransformKind.RESOLUTION,
}


def _cmd_match(args: argparse.Namespace) -> int:
    spec, code = _load_spec_checked(args.spec)
    if spec is None:
        return code
    cfg = _eval_from_args(args)
    if args.target_flops < 1:
        raise UsageError(f"--target-flops must be >= 1, got {args.target_flops}")
    value_range = None
    if args.min_value is not None or args.max_value is not None:
        if args.min_value is None or args.max_value is None:
            raise UsageError("--min-value and --max-value must be given together")
        value_range = (args.min_value, args.max_value)
    try:
        result = match_flops_budget(
            spec,
            cfg,
            _KNOB_CHOICES[args.knob],
            args.target_flops,
            tol=args.tol,
            value_range=value_range,
            base_name=spec.name,
        )
    except TargetUnreachable as exc:
        _emit_error(
            "target_unreachable",
            str(exc),
            target=exc.target,
            attainable=list(exc.attainable),
        )
        return EXIT_INFEASIBLE
    except (ScalingError, ValueError) as exc:
        _emit_error("match", str(exc))
        return EXIT_VALIDATION
    payload = {
        "config_id": result.config.config_id,
        "knob": args.knob,
        "value": result.config.transforms[0].parameter,
        "flops": result.flops,
        "target": result.target,
        "deviation": result.deviation,
        "relaxed_value": result.relaxed_value,
        "within_tol": result.within_tol,
        "bracket": (
            [c.config_id for c in result.bracket] if result.bracket else None
        ),
    }
    print(json.dumps(payload, indent=2))
    return EXIT_OK


# --------------------------------------------------------------------------
# best


_OBJECTIVE_ALIASES = {
    "flops": "flops",
    "memory": "total_memory_bytes",
    "total_memory_bytes": "total_memory_bytes",
    "peak_activation_bytes": "peak_activation_bytes",
    "model_bytes": "model_bytes",
}


def _cmd_best(args: argparse.Namespace) -> int:
    frontier = Path(args.sweep_dir) / "frontier.csv"
    try:
        points, metrics = read_frontier_csv(frontier)
    except OSError as exc:
        _emit_error("io", f"cannot read {frontier}: {exc}")
        return EXIT_IO
    except ValueError as exc:
        _emit_error("frontier", str(exc), path=str(frontier))
        return EXIT_VALIDATION
    if args.metric not in metrics:
        _emit_error(
            "metric",
            f"frontier has no metric column {args.metric!r} (has: {metrics})",
        )
        return EXIT_VALIDATION
    table = AnnotationTable.from_rows(
        (p.config_id, m, v) for p in points for m, v in p.annotations.items()
    )
    baseline = args.baseline
    if baseline is None:
        annotated = [p for p in points if args.metric in p.annotations]
        if not annotated:
            _emit_error("infeasible", f"no config carries a {args.metric!r} annotation")
            return EXIT_INFEASIBLE
        baseline = max(
            annotated, key=lambda p: (p.annotations[args.metric], p.config_id)
        ).config_id
        logger.warning("--baseline not given; using highest-%s config %s", args.metric, baseline)
    try:
        choice = best_compressed(
            points,
            table,
            metric=args.metric,
            max_drop=args.max_drop,
            objective=_OBJECTIVE_ALIASES[args.objective],
            baseline_id=baseline,
        )
    except NoFeasibleCandidate as exc:
        _emit_error("no_feasible_candidate", str(exc))
        return EXIT_INFEASIBLE
    payload = {
        "config_id": choice.config_id,
        "flops": choice.flops,
        "peak_activation_bytes": choice.peak_activation_bytes,
        "model_bytes": choice.model_bytes,
        "total_memory_bytes": choice.total_memory_bytes,
        "annotations": dict(sorted(choice.annotations.items())),
        "baseline": baseline,
        "metric": args.metric,
        "max_drop": args.max_drop,
        "objective": _OBJECTIVE_ALIASES[args.objective],
    }
    print(json.dumps(payload, indent=2))
    return EXIT_OK


# --------------------------------------------------------------------------
# presets


def _cmd_presets(args: argparse.Namespace) -> int:
    if args.action != "list":
        raise UsageError(f"unknown presets action {args.action!r}")
    for name in sorted(PRESETS):
        entry = PRESETS[name]
        spec = entry.build()
        report = cost_report(spec, entry.default_eval)
        print(
            f"{name:<18} flops={report.flops:<14} "
            f"peak_act={report.peak_activation_bytes:<12} "
            f"model={report.model_bytes:<12} "
            f"total={report.total_memory_bytes:<12} {entry.summary}"
        )
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser() -> _Parser:
    parser = _Parser(
        prog="visioncost",
        description="FLOPs/memory cost reports and scaling-tradeoff search "
        "for CNN and ViT architecture specs",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_cost = sub.add_parser("cost", help="cost report for one spec file")
    p_cost.add_argument("spec", help="architecture spec JSON file")
    _add_eval_flags(p_cost)
    p_cost.add_argument(
        "--format", choices=("json", "csv"), default="json", help="output format"
    )

    p_sweep = sub.add_parser("sweep", help="enumerate a sweep space and write results")
    p_sweep.add_argument("space", help="sweep space JSON file")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument(
        "--annotations", default=None, help="optional config_id,metric,value CSV"
    )

    p_match = sub.add_parser("match", help="match a FLOPs budget with one knob")
    p_match.add_argument("spec", help="architecture spec JSON file")
    p_match.add_argument(
        "--knob", required=True, choices=sorted(_KNOB_CHOICES), help="knob to bisect"
    )
    p_match.add_argument("--target-flops", type=int, required=True)
    p_match.add_argument("--tol", type=float, default=None, help="relative tolerance")
    p_match.add_argument("--min-value", type=int, default=None)
    p_match.add_argument("--max-value", type=int, default=None)
    _add_eval_flags(p_match)

    p_best = sub.add_parser(
        "best", help="cheapest config within an accuracy-drop budget"
    )
    p_best.add_argument("sweep_dir", help="directory written by 'sweep'")
    p_best.add_argument("--metric", required=True)
    p_best.add_argument("--max-drop", type=float, required=True)
    p_best.add_argument(
        "--objective", choices=sorted(_OBJECTIVE_ALIASES), default="flops"
    )
    p_best.add_argument("--baseline", default=None, help="baseline config id")

    p_presets = sub.add_parser("presets", help="built-in architecture specs")
    p_presets.add_argument("action", nargs="?", default="list", help="'list'")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    argv = list(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.WARNING, format="%(levelname)s: %(message)s"
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required (cost, sweep, match, best, presets)")
        if args.command == "cost":
            return _cmd_cost(args)
        if args.command == "sweep":
            return _cmd_sweep(args, ["visioncost"] + argv)
        if args.command == "match":
            return _cmd_match(args)
        if args.command == "best":
            if args.max_drop < 0:
                raise UsageError(f"--max-drop must be >= 0, got {args.max_drop}")
            return _cmd_best(args)
        if args.command == "presets":
            return _cmd_presets(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
