"""File formats, dataset scanning and run configuration.

On-disk layout of an evaluation dataset::

    root/
      predicted/<frame_id>.pfm|png     saliency predictions (required)
      gt/<frame_id>.pfm|png            ground-truth maps, or
      fixations.csv                    fixations to synthesize them from
      panoptic/<frame_id>.png          16-bit single-channel segment ids
      panoptic/<frame_id>.json         segment table [{id, class_name, is_thing}]
      graphs/<frame_id>.json           optional per-frame object graphs

Saliency carriers are grayscale PFM (float32) or 8/16-bit grayscale PNG
scaled to [0, 1]. Fixations come as a CSV with header ``frame_id,x,y``;
row order within a frame is temporal order.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .core import (
    BinaryFixationMap,
    EvalFrame,
    FixationSet,
    PanopticMap,
    SaliencyMap,
    SegmentInfo,
    _panoptic_from_owned,
    _saliency_from_owned,
    rasterize_fixations,
)
from .errors import ConfigError, EmptyDatasetError, FormatError
from .gtgen import GtGenConfig, render_ground_truth
from .graphcontext import ObjectGraph
from .loss import LossWeights
from .metrics import DEFAULT_KLD_EPSILON, MetricOptions
from .pfm import parse_pfm, write_pfm

logger = logging.getLogger(__name__)

BACKGROUND_SEGMENT_ID = 0

SALIENCY_SUFFIXES = (".pfm", ".png")

#: Slot names of the 24-point vehicle landmark graph, used to one-hot the
#: keypoint identity inside node feature vectors.
VEHICLE_KEYPOINTS = (
    "front_wheel_left",
    "front_wheel_right",
    "rear_wheel_left",
    "rear_wheel_right",
    "headlight_left",
    "headlight_right",
    "taillight_left",
    "taillight_right",
    "front_bumper_left",
    "front_bumper_right",
    "rear_bumper_left",
    "rear_bumper_right",
    "mirror_left",
    "mirror_right",
    "roof_front_left",
    "roof_front_right",
    "roof_rear_left",
    "roof_rear_right",
    "windshield_top_left",
    "windshield_top_right",
    "windshield_bottom_left",
    "windshield_bottom_right",
    "rear_window_top_left",
    "rear_window_top_right",
)

_KEYPOINT_INDEX = {name: i for i, name in enumerate(VEHICLE_KEYPOINTS)}

#: Width of a node feature vector: x, y, visibility, keypoint one-hot.
NODE_FEATURE_DIM = 3 + len(VEHICLE_KEYPOINTS)


def _load_png_grayscale(path) -> np.ndarray:
    image = Image.open(path)
    if image.mode == "L":
        return np.asarray(image, dtype=np.float64) / 255.0
    if image.mode in ("I", "I;16", "I;16B"):
        return np.asarray(image, dtype=np.float64) / 65535.0
    raise FormatError(
        f"unsupported PNG mode {image.mode!r} in {path}; expected 8- or 16-bit grayscale"
    )


def load_saliency(path) -> SaliencyMap:
    """Load a saliency map from a PFM or grayscale PNG file (raw state)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    magic = data[:2]
    if magic in (b"Pf", b"PF"):
        values = parse_pfm(data)
        if not np.isfinite(values).all():
            raise FormatError(f"non-finite values in {path}")
        if float(values.min()) < 0.0:
            raise FormatError(f"{int((values < 0.0).sum())} negative values in {path}")
        return _saliency_from_owned(values)
    if magic == b"\x89P":
        # PNG payloads are unsigned integers, no further range checks needed
        return _saliency_from_owned(_load_png_grayscale(path))
    raise FormatError(f"unrecognized saliency file format in {path} (magic {magic!r})")


def save_saliency(saliency: SaliencyMap, path) -> None:
    """Write a saliency map; the suffix picks PFM (float) or 16-bit PNG."""
    path = Path(path)
    if path.suffix == ".pfm":
        write_pfm(path, saliency.values)
    elif path.suffix == ".png":
        peak = float(saliency.values.max())
        if peak > 1.0:
            raise FormatError("PNG output requires values in [0, 1]; save as PFM instead")
        encoded = np.round(saliency.values * 65535.0).astype(np.uint16)
        Image.fromarray(encoded).save(path)
    else:
        raise FormatError(f"unsupported saliency suffix {path.suffix!r}")


def load_panoptic(id_image_path, segments_table_path, *, accept_label_ids: bool = False) -> PanopticMap:
    """Load a panoptic map from a 16-bit id image and its JSON segment table.

    Pixels whose id is absent from the table are reassigned to the reserved
    background segment 0 (added to the table if needed) and counted in a
    warning. ``accept_label_ids`` additionally admits 8-bit id images in the
    style of Cityscapes ``labelIds`` files.
    """
    image = Image.open(id_image_path)
    if image.mode in ("I", "I;16", "I;16B"):
        ids = np.asarray(image, dtype=np.int64)
    elif image.mode == "L" and accept_label_ids:
        ids = np.asarray(image, dtype=np.int64)
    else:
        raise FormatError(
            f"unsupported panoptic id encoding (mode {image.mode!r}) in {id_image_path}; "
            "expected a 16-bit single-channel PNG of segment ids"
        )

    with open(segments_table_path, "r", encoding="utf-8") as fh:
        raw_table = json.load(fh)
    if not isinstance(raw_table, list):
        raise FormatError(f"segment table {segments_table_path} must be a JSON array")
    segments: dict[int, SegmentInfo] = {}
    for entry in raw_table:
        try:
            sid = int(entry["id"])
            info = SegmentInfo(str(entry["class_name"]), bool(entry["is_thing"]))
        except (TypeError, KeyError) as exc:
            raise FormatError(
                f"segment table entries need id/class_name/is_thing: {entry!r}"
            ) from exc
        if sid in segments:
            raise FormatError(f"duplicate segment id {sid} in {segments_table_path}")
        segments[sid] = info

    if not segments:
        raise FormatError(f"segment table {segments_table_path} is empty")
    max_id = int(ids.max())
    if max_id < 4096 and all(i in segments for i in range(max_id + 1)):
        # dense table covers every possible grid id, nothing to remap
        return _panoptic_from_owned(ids, segments)
    # one histogram pass covers both the remap and the grid/table invariant
    counts = np.bincount(ids.ravel())
    present = np.flatnonzero(counts)
    missing = [int(i) for i in present if int(i) not in segments]
    if missing:
        dropped = int(counts[missing].sum())
        mask = np.zeros(int(present[-1]) + 1, dtype=bool)
        mask[missing] = True
        ids = np.where(mask[ids], BACKGROUND_SEGMENT_ID, ids)
        segments.setdefault(BACKGROUND_SEGMENT_ID, SegmentInfo("background", False))
        logger.warning(
            "%d pixels in %s carry ids missing from the segment table; "
            "reassigned to background segment %d",
            dropped,
            id_image_path,
            BACKGROUND_SEGMENT_ID,
        )
    return _panoptic_from_owned(ids, segments)


def save_panoptic(panoptic: PanopticMap, id_image_path, segments_table_path) -> None:
    """Write a panoptic map as a 16-bit id PNG plus its JSON segment table."""
    if int(panoptic.segment_ids.max()) > 65535:
        raise FormatError("segment ids above 65535 cannot be stored in a 16-bit PNG")
    # low compression keeps batch-time decoding cheap; id images are tiny anyway
    Image.fromarray(panoptic.segment_ids.astype(np.uint16)).save(id_image_path, compress_level=1)
    table = [
        {"id": sid, "class_name": info.class_name, "is_thing": info.is_thing}
        for sid, info in sorted(panoptic.segments.items())
    ]
    with open(segments_table_path, "w", encoding="utf-8") as fh:
        json.dump(table, fh, indent=1)


FIXATION_HEADER = ["frame_id", "x", "y"]


def load_fixations(path) -> dict[str, FixationSet]:
    """Load a fixation CSV, grouped by frame id in file order.

    Header must be ``frame_id,x,y``. Sub-pixel coordinates are kept; they
    are rounded at rasterization time.
    """
    groups: dict[str, list[tuple[float, float]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != FIXATION_HEADER:
            raise FormatError(
                f"bad fixation CSV header in {path}: expected {','.join(FIXATION_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            frame_id = row[0].strip()
            try:
                x, y = float(row[1]), float(row[2])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric coordinate") from exc
            groups.setdefault(frame_id, []).append((x, y))
    return {
        frame_id: FixationSet(tuple(points), frame_id=frame_id)
        for frame_id, points in groups.items()
    }


def load_object_graphs(
    path,
    width: int,
    height: int,
    *,
    attr_means: tuple[float, float, float] = (0.0, 0.0, 0.0),
    attr_stds: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> list[ObjectGraph]:
    """Load per-frame object graphs from their JSON annotation.

    Each object carries ``keypoints`` ([{name, x, y, visible}]), ``edges``
    (index pairs into the keypoint list), and the globals ``speed``,
    ``distance`` and ``direction`` (+1 toward the viewer, -1 away).
    Invisible keypoints are dropped along with their edges; an object with
    no visible keypoint yields no graph. Node features are
    (x/width, y/height, visibility, keypoint one-hot).
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise FormatError(f"object graph file {path} must be a JSON array")

    graphs: list[ObjectGraph] = []
    for obj_index, obj in enumerate(raw):
        try:
            keypoints = obj["keypoints"]
            edges = obj["edges"]
            direction = float(obj["direction"])
            attrs_raw = (float(obj["speed"]), float(obj["distance"]), direction)
        except (TypeError, KeyError, ValueError) as exc:
            raise FormatError(f"{path}: malformed object entry {obj_index}") from exc
        if direction not in (-1.0, 1.0):
            raise FormatError(f"{path}: object {obj_index} direction must be +1 or -1")

        rows: list[list[float]] = []
        remap: dict[int, int] = {}
        for kp_index, kp in enumerate(keypoints):
            try:
                name = kp["name"]
                x, y, visible = float(kp["x"]), float(kp["y"]), float(kp["visible"])
            except (TypeError, KeyError, ValueError) as exc:
                raise FormatError(f"{path}: malformed keypoint in object {obj_index}") from exc
            if name not in _KEYPOINT_INDEX:
                raise FormatError(f"{path}: unknown keypoint name {name!r}")
            if visible <= 0.0:
                continue
            one_hot = [0.0] * len(VEHICLE_KEYPOINTS)
            one_hot[_KEYPOINT_INDEX[name]] = 1.0
            remap[kp_index] = len(rows)
            rows.append([x / width, y / height, visible, *one_hot])
        if not rows:
            continue

        kept_edges = []
        for i, j in edges:
            if int(i) in remap and int(j) in remap:
                kept_edges.append((remap[int(i)], remap[int(j)]))
        attrs = tuple(
            (value - mean) / std
            for value, mean, std in zip(attrs_raw, attr_means, attr_stds)
        )
        graphs.append(ObjectGraph(np.asarray(rows), tuple(kept_edges), np.asarray(attrs)))
    return graphs


@dataclass(frozen=True)
class RunConfig:
    """Resolved batch-run configuration (TOML or JSON on disk)."""

    jobs: int = 1
    things_only: bool = False
    kld_epsilon: float = DEFAULT_KLD_EPSILON
    include_per_segment: bool = False
    accept_label_ids: bool = False
    seed: int = 0
    gtgen: GtGenConfig | None = None
    loss: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self) -> None:
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.kld_epsilon <= 0.0:
            raise ConfigError("kld_epsilon must be positive")

    def metric_options(self) -> MetricOptions:
        return MetricOptions(
            kld_epsilon=self.kld_epsilon,
            things_only=self.things_only,
            include_per_segment=self.include_per_segment,
        )


def _build_section(cls, section: dict, prefix: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(f"incomplete {prefix.rstrip('.')} section: {exc}") from exc


def load_run_config(path) -> RunConfig:
    """Parse a run configuration file; unknown keys are rejected."""
    path = Path(path)
    if path.suffix == ".json":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    elif path.suffix == ".toml":
        try:
            import tomllib
        except ImportError:  # Python 3.10
            import tomli as tomllib
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    else:
        raise ConfigError(f"config file must be .json or .toml, got {path.suffix!r}")
    if not isinstance(data, dict):
        raise ConfigError(f"config root in {path} must be a table/object")

    data = dict(data)
    gtgen_cfg = None
    if "gtgen" in data:
        gtgen_cfg = _build_section(GtGenConfig, dict(data.pop("gtgen")), "gtgen.")
    loss_cfg = LossWeights()
    if "loss" in data:
        loss_cfg = _build_section(LossWeights, dict(data.pop("loss")), "loss.")
    config = _build_section(RunConfig, data, "")
    return replace(config, gtgen=gtgen_cfg, loss=loss_cfg)


@dataclass(frozen=True)
class FrameDescriptor:
    """Lazy pointer to one frame's files; nothing is opened until load()."""

    frame_id: str
    predicted_path: str
    panoptic_image_path: str
    panoptic_table_path: str
    ground_truth_path: str | None = None
    fixation_points: tuple[tuple[float, float], ...] | None = None
    graphs_path: str | None = None

    def load(self, config: RunConfig) -> EvalFrame:
        predicted = load_saliency(self.predicted_path)
        if self.ground_truth_path is not None:
            ground_truth = load_saliency(self.ground_truth_path)
        else:
            if config.gtgen is None:
                raise ConfigError(
                    f"frame {self.frame_id} has no ground-truth file and no gtgen "
                    "config to synthesize one"
                )
            ground_truth = render_ground_truth(
                FixationSet(self.fixation_points or (), frame_id=self.frame_id),
                config.gtgen,
                predicted.width,
                predicted.height,
            )
        panoptic = load_panoptic(
            self.panoptic_image_path,
            self.panoptic_table_path,
            accept_label_ids=config.accept_label_ids,
        )
        if self.fixation_points:
            fixations = rasterize_fixations(
                FixationSet(self.fixation_points, frame_id=self.frame_id),
                predicted.width,
                predicted.height,
            )
        else:
            fixations = BinaryFixationMap(np.zeros(predicted.shape, dtype=bool))
        return EvalFrame(
            predicted=predicted,
            ground_truth=ground_truth,
            fixations=fixations,
            panoptic=panoptic,
            frame_id=self.frame_id,
        )


@dataclass(frozen=True)
class ScanResult:
    frames: tuple[FrameDescriptor, ...]
    skipped: dict[str, int]


def _find_map_file(directory: Path, stem: str) -> Path | None:
    for suffix in SALIENCY_SUFFIXES:
        candidate = directory / f"{stem}{suffix}"
        if candidate.is_file():
            return candidate
    return None


def scan_dataset(root, config: RunConfig) -> ScanResult:
    """Enumerate evaluable frames under a dataset root.

    Frame ids come from ``predicted/`` and are returned in lexicographic
    order. Frames missing a required modality are skipped and counted per
    reason; a dataset yielding zero frames raises ``EmptyDatasetError``.
    """
    root = Path(root)
    predicted_dir = root / "predicted"
    stems = sorted(
        {p.stem for p in predicted_dir.iterdir() if p.suffix in SALIENCY_SUFFIXES}
        if predicted_dir.is_dir()
        else set()
    )
    fixations_csv = root / "fixations.csv"
    fixation_sets = load_fixations(fixations_csv) if fixations_csv.is_file() else {}

    frames: list[FrameDescriptor] = []
    skipped: Counter[str] = Counter()
    for stem in stems:
        predicted_path = _find_map_file(predicted_dir, stem)
        ground_truth_path = _find_map_file(root / "gt", stem)
        fixation_set = fixation_sets.get(stem)
        points = fixation_set.points if fixation_set is not None else None
        if ground_truth_path is None and not (points and config.gtgen is not None):
            skipped["missing_ground_truth"] += 1
            continue
        panoptic_image = root / "panoptic" / f"{stem}.png"
        panoptic_table = root / "panoptic" / f"{stem}.json"
        if not (panoptic_image.is_file() and panoptic_table.is_file()):
            skipped["missing_panoptic"] += 1
            continue
        graphs_path = root / "graphs" / f"{stem}.json"
        frames.append(
            FrameDescriptor(
                frame_id=stem,
                predicted_path=str(predicted_path),
                panoptic_image_path=str(panoptic_image),
                panoptic_table_path=str(panoptic_table),
                ground_truth_path=None if ground_truth_path is None else str(ground_truth_path),
                fixation_points=points,
                graphs_path=str(graphs_path) if graphs_path.is_file() else None,
            )
        )
    if not frames:
        raise EmptyDatasetError(
            f"no evaluable frames under {root}"
            + (f" (skipped: {dict(skipped)})" if skipped else "")
        )
    return ScanResult(tuple(frames), dict(skipped))
