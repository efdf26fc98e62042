"""Report documents: deterministic JSON plus a human-facing Markdown table.

JSON determinism contract: field order is fixed by construction, floats are
serialized with 17 significant digits, and nothing volatile (wall time,
host names) enters the JSON document. Wall time goes to the Markdown
summary and stderr only, so identical inputs yield byte-identical JSON.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .metrics import HIGHER_IS_BETTER, METRIC_NAMES, MetricReport

SCHEMA_VERSION = 1

_ARROWS = {name: ("↑" if HIGHER_IS_BETTER[name] else "↓") for name in METRIC_NAMES}
_COLUMN_LABELS = {
    "cc": "CC",
    "kld": "KLD",
    "auc": "AUC",
    "sim": "SIM",
    "nss": "NSS",
    "osim": "oSIM",
}


def serialize_json(value) -> str:
    """Render a document with a fixed float format (17 significant digits)."""
    pieces: list[str] = []
    _serialize(value, pieces)
    return "".join(pieces) + "\n"


def _serialize(value, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, str):
        out.append(json.dumps(value))
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"cannot serialize non-finite float {value!r}")
        out.append(format(value, ".17g"))
    elif isinstance(value, Mapping):
        out.append("{")
        for i, (key, item) in enumerate(value.items()):
            if i:
                out.append(",")
            out.append(json.dumps(str(key)))
            out.append(":")
            _serialize(item, out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _serialize(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(value).__name__}")


def write_atomic(path, text: str) -> None:
    """Write via a sibling temp file and rename, never leaving partial output."""
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def frame_record(report: MetricReport) -> dict:
    record: dict = {"frame_id": report.frame_id}
    for name in METRIC_NAMES:
        record[name] = report.value(name)
    record["undefined"] = {k: report.undefined[k] for k in sorted(report.undefined)}
    if report.per_segment is not None:
        record["per_segment"] = {
            str(sid): {
                "pred_mass": masses.pred_mass,
                "gt_mass": masses.gt_mass,
                "contribution": masses.contribution,
            }
            for sid, masses in sorted(report.per_segment.items())
        }
    return record


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    variance = sum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(variance)


def aggregate_metrics(reports: Sequence[MetricReport]) -> tuple[dict, dict]:
    """Per-metric mean/std/count over defined values, plus exclusion counts."""
    aggregates: dict = {}
    exclusions: dict = {}
    for name in METRIC_NAMES:
        values = [r.value(name) for r in reports if r.value(name) is not None]
        if values:
            mean, std = _mean_std(values)
            aggregates[name] = {"mean": mean, "std": std, "count": len(values)}
        else:
            aggregates[name] = {"mean": None, "std": None, "count": 0}
        reasons: dict[str, int] = {}
        for r in reports:
            reason = r.undefined.get(name)
            if reason is not None:
                reasons[reason] = reasons.get(reason, 0) + 1
        if reasons:
            exclusions[name] = {k: reasons[k] for k in sorted(reasons)}
    return aggregates, exclusions


def build_eval_document(
    reports: Sequence[MetricReport],
    config_echo: Mapping,
    skipped: Mapping[str, int],
    tool_version: str,
) -> dict:
    aggregates, exclusions = aggregate_metrics(reports)
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "objsal", "version": tool_version},
        "config": dict(config_echo),
        "aggregation": "per-frame arithmetic mean over defined values",
        "frame_count": len(reports),
        "skipped": {k: skipped[k] for k in sorted(skipped)},
        "aggregates": aggregates,
        "exclusions": exclusions,
        "frames": [frame_record(r) for r in reports],
    }


def build_compare_document(
    reports_a: Sequence[MetricReport],
    reports_b: Sequence[MetricReport],
    config_echo: Mapping,
    tool_version: str,
) -> dict:
    """Paired per-frame deltas (b - a) over the shared frame ids."""
    by_id_a = {r.frame_id: r for r in reports_a}
    by_id_b = {r.frame_id: r for r in reports_b}
    common = sorted(set(by_id_a) & set(by_id_b))
    only_a = sorted(set(by_id_a) - set(by_id_b))
    only_b = sorted(set(by_id_b) - set(by_id_a))

    frames = []
    deltas_by_metric: dict[str, list[float]] = {name: [] for name in METRIC_NAMES}
    excluded: dict[str, int] = {name: 0 for name in METRIC_NAMES}
    for frame_id in common:
        ra, rb = by_id_a[frame_id], by_id_b[frame_id]
        deltas: dict = {}
        for name in METRIC_NAMES:
            va, vb = ra.value(name), rb.value(name)
            if va is None or vb is None:
                deltas[name] = None
                excluded[name] += 1
            else:
                delta = vb - va
                deltas[name] = delta
                deltas_by_metric[name].append(delta)
        frames.append({"frame_id": frame_id, **deltas})

    aggregates: dict = {}
    for name in METRIC_NAMES:
        values = deltas_by_metric[name]
        if values:
            mean, std = _mean_std(values)
            aggregates[name] = {"mean_delta": mean, "std_delta": std, "count": len(values)}
        else:
            aggregates[name] = {"mean_delta": None, "std_delta": None, "count": 0}

    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "objsal", "version": tool_version},
        "config": dict(config_echo),
        "direction": "delta = b - a",
        "frame_count": len(common),
        "unmatched": {
            "only_in_a": only_a,
            "only_in_b": only_b,
        },
        "excluded_undefined": {k: v for k, v in sorted(excluded.items()) if v},
        "aggregates": aggregates,
        "frames": frames,
    }


def _fmt(value, signed: bool = False) -> str:
    if value is None:
        return "n/a"
    return format(value, "+.4f" if signed else ".4f")


def _table(rows: Iterable[Sequence[str]]) -> str:
    lines = []
    rows = list(rows)
    header = rows[0]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "|".join(["---"] * len(header)) + "|")
    for row in rows[1:]:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)


def markdown_eval_summary(doc: Mapping, wall_time_s: float | None = None) -> str:
    header = [""] + [f"{_COLUMN_LABELS[m]} {_ARROWS[m]}" for m in METRIC_NAMES]
    aggregates = doc["aggregates"]
    rows = [
        header,
        ["mean"] + [_fmt(aggregates[m]["mean"]) for m in METRIC_NAMES],
        ["std"] + [_fmt(aggregates[m]["std"]) for m in METRIC_NAMES],
        ["frames"] + [str(aggregates[m]["count"]) for m in METRIC_NAMES],
    ]
    parts = [
        "# Evaluation summary",
        "",
        f"Frames evaluated: {doc['frame_count']}",
        "",
        _table(rows),
    ]
    if doc["skipped"]:
        parts += ["", "Skipped frames: " + ", ".join(f"{k}={v}" for k, v in doc["skipped"].items())]
    if doc["exclusions"]:
        notes = [
            f"{m}: " + ", ".join(f"{reason}={count}" for reason, count in reasons.items())
            for m, reasons in doc["exclusions"].items()
        ]
        parts += ["", "Undefined-metric exclusions: " + "; ".join(notes)]
    parts += ["", f"Aggregation: {doc['aggregation']}"]
    if wall_time_s is not None:
        parts += ["", f"Wall time: {wall_time_s:.2f} s"]
    return "\n".join(parts) + "\n"


def markdown_compare_summary(doc: Mapping, wall_time_s: float | None = None) -> str:
    header = [""] + [f"{_COLUMN_LABELS[m]} {_ARROWS[m]}" for m in METRIC_NAMES]
    aggregates = doc["aggregates"]
    rows = [
        header,
        ["mean delta"] + [_fmt(aggregates[m]["mean_delta"], signed=True) for m in METRIC_NAMES],
        ["std delta"] + [_fmt(aggregates[m]["std_delta"]) for m in METRIC_NAMES],
        ["frames"] + [str(aggregates[m]["count"]) for m in METRIC_NAMES],
    ]
    unmatched = doc["unmatched"]
    parts = [
        "# Comparison summary (delta = b - a)",
        "",
        f"Paired frames: {doc['frame_count']}",
        "",
        _table(rows),
    ]
    if unmatched["only_in_a"] or unmatched["only_in_b"]:
        parts += [
            "",
            f"Unmatched frames excluded: {len(unmatched['only_in_a'])} only in a, "
            f"{len(unmatched['only_in_b'])} only in b",
        ]
    if wall_time_s is not None:
        parts += ["", f"Wall time: {wall_time_s:.2f} s"]
    return "\n".join(parts) + "\n"
