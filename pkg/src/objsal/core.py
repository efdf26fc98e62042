"""Shared domain types for attention-map evaluation.

Every type is immutable after construction: grid payloads are converted to
read-only numpy arrays and validated eagerly, so instances can be handed to
concurrent workers without copying or locking. Intensities are kept in
float64 throughout; single precision appears only inside on-disk files.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import floor
from typing import Iterator, Mapping

import numpy as np

from .errors import BoundsError, ShapeError, ZeroMassError

RAW = "raw"
UNIT_SUM = "unit-sum"
UNIT_MAX = "unit-max"

NORMALIZATION_TOLERANCE = 1e-9

_NORMALIZATIONS = (RAW, UNIT_SUM, UNIT_MAX)


def _readonly_grid(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if arr.ndim != 2 or arr.size == 0:
        raise ShapeError(f"expected a non-empty 2-D grid, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """Grid of non-negative attention intensities plus a normalization state.

    ``normalization`` is one of ``"raw"``, ``"unit-sum"`` (pixel values total
    1) or ``"unit-max"`` (maximum value is 1). The declared state is verified
    at construction; all-zero grids are legal only in the raw state.
    """

    values: np.ndarray
    normalization: str = RAW

    def __post_init__(self) -> None:
        arr = _readonly_grid(self.values, np.float64)
        if not np.isfinite(arr).all():
            raise ValueError("saliency values must be finite")
        if (arr < 0.0).any():
            raise ValueError("saliency values must be non-negative")
        if self.normalization not in _NORMALIZATIONS:
            raise ValueError(f"unknown normalization state {self.normalization!r}")
        if self.normalization == UNIT_SUM:
            if abs(float(arr.sum()) - 1.0) > NORMALIZATION_TOLERANCE:
                raise ValueError("unit-sum map does not total 1")
        elif self.normalization == UNIT_MAX:
            if abs(float(arr.max()) - 1.0) > NORMALIZATION_TOLERANCE:
                raise ValueError("unit-max map maximum is not 1")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def total(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class SegmentInfo:
    """Label carried by one panoptic segment."""

    class_name: str
    is_thing: bool


@dataclass(frozen=True, eq=False)
class PanopticMap:
    """Total partition of an image into labelled segments.

    ``segment_ids`` assigns exactly one non-negative segment id to every
    pixel; ``segments`` maps each id that appears in the grid (plus any
    extra ids worth reporting) to its :class:`SegmentInfo`.
    """

    segment_ids: np.ndarray
    segments: Mapping[int, SegmentInfo]

    def __post_init__(self) -> None:
        arr = _readonly_grid(self.segment_ids, np.int64)
        if (arr < 0).any():
            raise ValueError("segment ids must be non-negative")
        table = {int(k): v for k, v in self.segments.items()}
        if not table:
            raise ValueError("a panoptic map needs at least one segment")
        max_id = int(arr.max())
        if max_id < 4 * arr.size:  # dense ids: O(n) presence check
            present = np.flatnonzero(np.bincount(arr.ravel(), minlength=max_id + 1))
        else:
            present = np.unique(arr)
        missing = [int(i) for i in present if int(i) not in table]
        if missing:
            raise ValueError(f"grid ids missing from the segment table: {missing}")
        object.__setattr__(self, "segment_ids", arr)
        object.__setattr__(self, "segments", table)

    @property
    def height(self) -> int:
        return int(self.segment_ids.shape[0])

    @property
    def width(self) -> int:
        return int(self.segment_ids.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class FixationSet:
    """Temporally ordered gaze fixation points, oldest first.

    Coordinates are (x, y) pixel positions; sub-pixel samples are allowed
    and get rounded to the nearest pixel when rasterized or rendered.
    """

    points: tuple[tuple[float, float], ...]
    frame_id: str = ""

    def __post_init__(self) -> None:
        pts = tuple((float(x), float(y)) for x, y in self.points)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[tuple[float, float]]:
        return iter(self.points)


@dataclass(frozen=True, eq=False)
class BinaryFixationMap:
    """Grid marking fixated pixels.

    An all-zero map is a valid value; metrics that sample fixations reject
    it at call time instead.
    """

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits)
        if arr.dtype != bool and not ((arr == 0) | (arr == 1)).all():
            raise ValueError("fixation map entries must be 0 or 1")
        arr = _readonly_grid(arr.astype(bool), bool)
        object.__setattr__(self, "bits", arr)

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True, eq=False)
class EvalFrame:
    """Everything needed to evaluate one frame, all grids sharing a shape."""

    predicted: SaliencyMap
    ground_truth: SaliencyMap
    fixations: BinaryFixationMap
    panoptic: PanopticMap
    frame_id: str = ""

    def __post_init__(self) -> None:
        shapes = {
            "predicted": self.predicted.shape,
            "ground_truth": self.ground_truth.shape,
            "fixations": self.fixations.shape,
            "panoptic": self.panoptic.shape,
        }
        if len(set(shapes.values())) != 1:
            raise ShapeError(f"frame components disagree on shape: {shapes}")


def normalize_unit_sum(saliency: SaliencyMap) -> SaliencyMap:
    """Scale a map so its pixel values total exactly 1."""
    total = float(saliency.values.sum())
    if total <= 0.0:
        raise ZeroMassError("cannot unit-sum normalize an all-zero map")
    return SaliencyMap(saliency.values / total, UNIT_SUM)


def normalize_unit_max(saliency: SaliencyMap) -> SaliencyMap:
    """Scale a map so its maximum value is exactly 1."""
    peak = float(saliency.values.max())
    if peak <= 0.0:
        raise ZeroMassError("cannot unit-max normalize an all-zero map")
    return SaliencyMap(saliency.values / peak, UNIT_MAX)


def _saliency_from_owned(values: np.ndarray, normalization: str = RAW) -> SaliencyMap:
    """Package-internal fast path for loaders: wrap an array the caller owns
    and has already validated, skipping the defensive copy and re-checks."""
    values.setflags(write=False)
    saliency = object.__new__(SaliencyMap)
    object.__setattr__(saliency, "values", values)
    object.__setattr__(saliency, "normalization", normalization)
    return saliency


def _panoptic_from_owned(ids: np.ndarray, segments: dict[int, SegmentInfo]) -> PanopticMap:
    """Package-internal fast path for loaders, invariants pre-checked."""
    ids.setflags(write=False)
    panoptic = object.__new__(PanopticMap)
    object.__setattr__(panoptic, "segment_ids", ids)
    object.__setattr__(panoptic, "segments", segments)
    return panoptic


def round_to_pixel(x: float, y: float) -> tuple[int, int]:
    """Round a (possibly sub-pixel) coordinate to its nearest pixel index."""
    return int(floor(x + 0.5)), int(floor(y + 0.5))


def rasterize_fixations(fixations: FixationSet, width: int, height: int) -> BinaryFixationMap:
    """Set one bit per fixated pixel; duplicate fixations collapse to one bit."""
    bits = np.zeros((height, width), dtype=bool)
    for x, y in fixations:
        col, row = round_to_pixel(x, y)
        if not (0 <= col < width and 0 <= row < height):
            raise BoundsError(
                f"fixation ({x}, {y}) outside {width}x{height} image bounds"
            )
        bits[row, col] = True
    return BinaryFixationMap(bits)
